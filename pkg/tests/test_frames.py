from __future__ import annotations

import math

import numpy as np
import pytest

from avcmd.errors import FormatError, InvalidParameterError
from avcmd.frames import (
    Clip,
    DepthFrame,
    GrayFrame,
    Modality,
    Sensor,
    linear_depth,
    log_depth,
    to_grayscale,
)


class TestToGrayscale:
    def test_all_black_maps_to_zero(self):
        rgb = np.zeros((4, 5, 3), dtype=np.uint8)
        assert np.all(to_grayscale(rgb).data == 0)

    def test_all_white_maps_to_255(self):
        rgb = np.full((4, 5, 3), 255, dtype=np.uint8)
        assert np.all(to_grayscale(rgb).data == 255)

    def test_single_pixel_weighted_sum(self):
        # 0.299*100 + 0.587*50 + 0.114*200 = 82.05 -> 82
        rgb = np.array([[[100, 50, 200]]], dtype=np.uint8)
        assert to_grayscale(rgb).data[0, 0] == 82

    def test_rejects_wrong_shape(self):
        with pytest.raises(FormatError):
            to_grayscale(np.zeros((4, 5), dtype=np.uint8))
        with pytest.raises(FormatError):
            to_grayscale(np.zeros((4, 5, 4), dtype=np.uint8))

    def test_pointwise_map_commutes_with_permutation(self, rng):
        rgb = rng.integers(0, 256, size=(6, 7, 3), dtype=np.uint8)
        gray = to_grayscale(rgb).data
        perm = rng.permutation(6 * 7)
        flat = rgb.reshape(-1, 3)[perm].reshape(6, 7, 3)
        assert np.array_equal(to_grayscale(flat).data.reshape(-1), gray.reshape(-1)[perm])


class TestLogDepth:
    def test_zero_depth_maps_to_zero(self):
        d = DepthFrame(width=2, height=1, data=np.array([0, 0], dtype=np.uint16), d_max=4095)
        assert np.all(log_depth(d).data == 0)

    def test_d_max_maps_to_255(self):
        d = DepthFrame(width=1, height=1, data=np.array([4095], dtype=np.uint16), d_max=4095)
        assert log_depth(d).data[0, 0] == 255

    def test_scalar_evaluation(self):
        # round(255 * ln(1001) / ln(4096)) = 212
        d = DepthFrame(width=1, height=1, data=np.array([1000], dtype=np.uint16), d_max=4095)
        expected = round(255 * math.log(1001) / math.log(4096))
        assert expected == 212
        assert log_depth(d).data[0, 0] == 212

    def test_monotone_over_full_16bit_range(self):
        d_max = 65535
        depths = np.arange(d_max + 1, dtype=np.uint16)
        frame = DepthFrame(width=d_max + 1, height=1, data=depths, d_max=d_max)
        values = log_depth(frame).data[0]
        assert np.all(np.diff(values.astype(np.int32)) >= 0)
        # Spot-check against per-sample scalar math (independent of the LUT).
        for d in (0, 1, 7, 500, 12345, 65535):
            assert values[d] == round(255 * math.log(1 + d) / math.log(1 + d_max))

    def test_d_max_zero_rejected(self):
        with pytest.raises(InvalidParameterError):
            DepthFrame(width=1, height=1, data=np.array([0], dtype=np.uint16), d_max=0)

    def test_sample_above_cap_rejected(self):
        with pytest.raises(InvalidParameterError):
            DepthFrame(width=1, height=1, data=np.array([100], dtype=np.uint16), d_max=50)


class TestLinearDepth:
    def test_endpoints(self):
        d = DepthFrame(width=2, height=1, data=np.array([0, 4095], dtype=np.uint16), d_max=4095)
        out = linear_depth(d).data[0]
        assert out[0] == 0 and out[1] == 255


class TestClip:
    def _frame(self, v=0, w=3, h=2):
        return GrayFrame(width=w, height=h, data=np.full(w * h, v, dtype=np.uint8))

    def test_basic_construction(self):
        clip = Clip(frames=(self._frame(), self._frame(1)), fps=15.0, modality=Modality.RGB)
        assert len(clip) == 2
        assert clip.width == 3 and clip.height == 2
        assert clip.sensor_id == Sensor.S1

    def test_empty_rejected(self):
        with pytest.raises(InvalidParameterError):
            Clip(frames=(), fps=15.0, modality=Modality.RGB)

    def test_mismatched_dims_rejected(self):
        with pytest.raises(InvalidParameterError):
            Clip(
                frames=(self._frame(), self._frame(w=4)),
                fps=15.0,
                modality=Modality.RGB,
            )

    def test_nonpositive_fps_rejected(self):
        with pytest.raises(InvalidParameterError):
            Clip(frames=(self._frame(),), fps=0.0, modality=Modality.RGB)

    def test_frames_are_read_only(self):
        clip = Clip(frames=(self._frame(),), fps=15.0, modality=Modality.RGB)
        with pytest.raises(ValueError):
            clip.frames[0].data[0, 0] = 9

    def test_subclip_preserves_metadata(self):
        clip = Clip(
            frames=tuple(self._frame(i) for i in range(5)),
            fps=30.0,
            modality=Modality.LOG_DEPTH,
            sensor_id=Sensor.S3,
            label=4,
        )
        sub = clip.subclip(1, 3)
        assert len(sub) == 2
        assert sub.modality == Modality.LOG_DEPTH
        assert sub.sensor_id == Sensor.S3
        assert sub.label == 4
        assert np.all(sub.frames[0].data == 1)
