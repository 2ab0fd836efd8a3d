"""Frame and clip data model plus the two pixel-level transforms.

Visual streams are carried as 8-bit grayscale frames regardless of their
origin: RGB input is converted with BT.601 luma weights, depth input is
compressed with a logarithmic map so the full 8-bit range is used up to the
sensor cap. Frames and clips are immutable after construction and safe to
share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import FormatError, InvalidParameterError

# BT.601 luma weights (sum to 1.0, so white maps to white).
_LUMA = np.array([0.299, 0.587, 0.114])


class Modality(IntEnum):
    """Visual modality of a clip. Values double as the container codes."""

    RGB = 0         # grayscale converted from an RGB stream
    LOG_DEPTH = 1   # depth stream after the logarithmic transform
    DEPTH = 2       # depth stream linearly rescaled to 8 bits


class Sensor(IntEnum):
    S1 = 1
    S2 = 2
    S3 = 3


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GrayFrame:
    """Single 8-bit intensity frame, row-major."""

    width: int
    height: int
    data: np.ndarray  # shape (height, width), uint8, read-only

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidParameterError("frame dimensions must be positive")
        a = np.asarray(self.data, dtype=np.uint8)
        if a.size != self.width * self.height:
            raise FormatError(
                f"frame data has {a.size} samples, expected "
                f"{self.width * self.height}"
            )
        object.__setattr__(self, "data", _freeze(a.reshape(self.height, self.width)))

    @classmethod
    def from_array(cls, a: np.ndarray) -> "GrayFrame":
        a = np.asarray(a)
        if a.ndim != 2:
            raise FormatError("expected a 2-D intensity array")
        return cls(width=a.shape[1], height=a.shape[0], data=a.astype(np.uint8))


@dataclass(frozen=True)
class DepthFrame:
    """Single 16-bit depth frame in millimeters, capped at d_max."""

    width: int
    height: int
    data: np.ndarray  # shape (height, width), uint16, read-only
    d_max: int        # sensor range cap, millimeters

    def __post_init__(self):
        if self.d_max <= 0:
            raise InvalidParameterError("d_max must be positive")
        if self.width <= 0 or self.height <= 0:
            raise InvalidParameterError("frame dimensions must be positive")
        a = np.asarray(self.data, dtype=np.uint16)
        if a.size != self.width * self.height:
            raise FormatError(
                f"depth data has {a.size} samples, expected "
                f"{self.width * self.height}"
            )
        if a.size and int(a.max()) > self.d_max:
            raise InvalidParameterError("depth sample exceeds d_max")
        object.__setattr__(self, "data", _freeze(a.reshape(self.height, self.width)))


@dataclass(frozen=True)
class Clip:
    """A timed sequence of same-sized gray frames in one modality."""

    frames: tuple[GrayFrame, ...]
    fps: float
    modality: Modality
    sensor_id: Sensor = Sensor.S1
    label: int | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise InvalidParameterError("clip must contain at least one frame")
        if self.fps <= 0:
            raise InvalidParameterError("fps must be positive")
        w, h = frames[0].width, frames[0].height
        for f in frames:
            if f.width != w or f.height != h:
                raise InvalidParameterError("all frames in a clip must share dimensions")
        object.__setattr__(self, "frames", frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    def __len__(self) -> int:
        return len(self.frames)

    def as_array(self) -> np.ndarray:
        """Stack frames into a (T, H, W) uint8 array (copy)."""
        return np.stack([f.data for f in self.frames])

    def subclip(self, start: int, stop: int) -> "Clip":
        if not 0 <= start < stop <= len(self.frames):
            raise InvalidParameterError("subclip range out of bounds")
        return Clip(
            frames=self.frames[start:stop],
            fps=self.fps,
            modality=self.modality,
            sensor_id=self.sensor_id,
            label=self.label,
        )


def to_grayscale(rgb: np.ndarray) -> GrayFrame:
    """Convert an interleaved 8-bit RGB frame to intensity.

    Accepts either an (H, W, 3) array or a flat interleaved array together
    with its shape encoded as (H, W, 3). Per pixel the output is
    round(0.299 R + 0.587 G + 0.114 B), clamped to [0, 255].
    """
    a = np.asarray(rgb)
    if a.ndim != 3 or a.shape[2] != 3:
        raise FormatError("expected an (H, W, 3) interleaved RGB array")
    gray = np.rint(a.astype(np.float64) @ _LUMA)
    gray = np.clip(gray, 0, 255).astype(np.uint8)
    return GrayFrame.from_array(gray)


def log_depth(depth: DepthFrame) -> GrayFrame:
    """Compress a depth frame to 8 bits with v = round(255 ln(1+d)/ln(1+d_max)).

    Monotone nondecreasing in d, with 0 -> 0 and d_max -> 255; near-range
    structure gets most of the output levels, which is what makes depth
    streams usable for trajectory extraction.
    """
    if depth.d_max <= 0:
        raise InvalidParameterError("d_max must be positive")
    # Depth is at most 16-bit: a lookup table is cheaper than a log per pixel.
    lut_in = np.arange(depth.d_max + 1, dtype=np.float64)
    lut = np.rint(255.0 * np.log1p(lut_in) / np.log1p(float(depth.d_max)))
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return GrayFrame.from_array(lut[depth.data])


def linear_depth(depth: DepthFrame) -> GrayFrame:
    """Linearly rescale a depth frame to 8 bits (the raw-depth modality)."""
    v = np.rint(depth.data.astype(np.float64) * (255.0 / float(depth.d_max)))
    return GrayFrame.from_array(np.clip(v, 0, 255).astype(np.uint8))
