from __future__ import annotations

import math

import numpy as np
import pytest

from avcmd.errors import FormatError, InvalidParameterError, TruncatedPayloadError
from avcmd.flow import dense_flow
from avcmd.frames import Clip, GrayFrame, Modality
from avcmd.trajectories import (
    HOF_DIM,
    HOG_DIM,
    MBH_DIM,
    TRAJ_DIM,
    TrackerParams,
    Trajectory,
    descriptor_hof,
    descriptor_hog,
    descriptor_mbh,
    descriptor_traj,
    is_erratic,
    is_static,
    read_features,
    sample_points,
    track,
    write_features,
)

from conftest import smooth_texture

P = TrackerParams()


def moving_block_clip(
    n_frames=18, size=80, block=18, speed=2.0, start=(14, 31), seed=3, offset=0
):
    """Textured square sliding right over a static textured background."""
    bg = smooth_texture(size, size, seed, lo=40, hi=170).astype(np.float64)
    btex = smooth_texture(block, block, seed + 1, lo=60, hi=220).astype(np.float64)
    frames = []
    for t in range(n_frames):
        img = bg.copy()
        x = int(round(start[0] + speed * t))
        y = start[1]
        img[y : y + block, x : x + block] = btex
        frames.append(GrayFrame.from_array(np.clip(img + offset, 0, 255).astype(np.uint8)))
    return Clip(frames=tuple(frames), fps=15.0, modality=Modality.RGB)


def static_clip(n_frames=18, size=64, seed=5):
    img = smooth_texture(size, size, seed)
    frame = GrayFrame.from_array(img)
    return Clip(frames=(frame,) * n_frames, fps=15.0, modality=Modality.RGB)


class TestSamplePoints:
    def test_flat_frame_yields_nothing(self):
        assert sample_points(np.full((40, 40), 77.0), step=5) == []

    def test_fully_occupied_grid_yields_nothing(self):
        img = smooth_texture(40, 40, 1)
        everywhere = [(x, y) for x in range(0, 40, 2) for y in range(0, 40, 2)]
        assert sample_points(img, step=5, occupied=everywhere) == []

    def test_checkerboard_matches_direct_eigenvalue_oracle(self):
        # 3-px checkerboard; the oracle recomputes every node's min eigenvalue
        # from the raw gradients with numpy.linalg, no shared box-filter code.
        n = 33
        yy, xx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        img = (((yy // 3) + (xx // 3)) % 2 * 255).astype(np.float64)
        step, quality = 5, 0.001
        got = set(sample_points(img, step=step, quality=quality))

        gy, gx = np.gradient(img)
        pg = lambda a: np.pad(a, 1, mode="edge")
        pgx, pgy = pg(gx), pg(gy)

        def node_score(x, y):
            m = np.zeros((2, 2))
            for dy in range(3):
                for dx in range(3):
                    gxv = pgx[y + dy, x + dx]
                    gyv = pgy[y + dy, x + dx]
                    m += np.array([[gxv * gxv, gxv * gyv], [gxv * gyv, gyv * gyv]])
            return float(np.linalg.eigvalsh(m)[0])

        scores = {
            (x, y): node_score(x, y)
            for y in range(step // 2, n, step)
            for x in range(step // 2, n, step)
        }
        max_score = max(
            node_score(x, y) for y in range(n) for x in range(n)
        )
        expected = {
            (float(x), float(y))
            for (x, y), s in scores.items()
            if s >= quality * max_score and s > 0
        }
        assert got == expected
        assert expected  # the oracle itself must select something

    def test_step_validation(self):
        with pytest.raises(InvalidParameterError):
            sample_points(np.zeros((8, 8)), step=0)


class TestPruningPredicates:
    def test_static_path(self):
        pts = np.tile([3.0, 4.0], (16, 1))
        assert is_static(pts, P.sigma_min)

    def test_uniform_motion_is_not_static(self):
        pts = np.stack([np.arange(16.0) * 2.0, np.full(16, 5.0)], axis=1)
        assert not is_static(pts, P.sigma_min)

    def test_teleport_is_erratic(self):
        pts = np.zeros((16, 2))
        pts[8:, 0] = 40.0  # one 40 px jump, otherwise still
        assert is_erratic(pts)

    def test_uniform_motion_is_not_erratic(self):
        pts = np.stack([np.arange(16.0) * 2.0, np.zeros(16)], axis=1)
        assert not is_erratic(pts)


class TestTrajDescriptor:
    def test_uniform_motion_right(self):
        pts = np.stack([np.arange(16.0), np.zeros(16)], axis=1)
        d = descriptor_traj(pts)
        assert d.shape == (30,)
        np.testing.assert_allclose(d[0::2], 1.0 / 15.0)
        np.testing.assert_allclose(d[1::2], 0.0)

    def test_uniform_motion_down_negative(self):
        pts = np.stack([np.zeros(16), -2.0 * np.arange(16.0)], axis=1)
        d = descriptor_traj(pts)
        np.testing.assert_allclose(d[0::2], 0.0)
        np.testing.assert_allclose(d[1::2], -1.0 / 15.0)

    def test_alternating_steps(self):
        xs = np.zeros(16)
        xs[1::2] = 1.0  # +1, -1, +1, ...
        pts = np.stack([xs, np.zeros(16)], axis=1)
        d = descriptor_traj(pts)
        np.testing.assert_allclose(d[0::2], np.where(np.arange(15) % 2 == 0, 1 / 15, -1 / 15))

    def test_zero_displacement_rejected(self):
        with pytest.raises(InvalidParameterError):
            descriptor_traj(np.zeros((16, 2)))


class TestTubeDescriptors:
    def test_flat_tube_gives_zero_hog(self):
        vol = np.full((15, 32, 32), 99.0)
        assert np.all(descriptor_hog(vol) == 0.0)
        assert descriptor_hog(vol).shape == (HOG_DIM,)

    def test_zero_flow_hof_mass_in_zero_bins(self):
        tube = np.zeros((15, 32, 32, 2))
        d = descriptor_hof(tube)
        assert d.shape == (HOF_DIM,)
        zero_bins = d.reshape(3, 2, 2, 9)[..., 8]
        other_bins = d.reshape(3, 2, 2, 9)[..., :8]
        assert np.all(other_bins == 0.0)
        np.testing.assert_allclose(zero_bins, 1.0 / math.sqrt(12.0))

    def test_constant_flow_gives_zero_mbh(self):
        tube = np.zeros((15, 32, 32, 2))
        tube[..., 0] = 3.0
        tube[..., 1] = -1.5
        d = descriptor_mbh(tube)
        assert d.shape == (MBH_DIM,)
        assert np.all(d == 0.0)


class TestTrack:
    def test_static_clip_yields_no_trajectories(self):
        res = track(static_clip())
        assert res.trajectories == []
        assert not res.too_short

    def test_short_clip_flagged(self):
        res = track(static_clip(n_frames=10))
        assert res.trajectories == []
        assert res.too_short

    def test_moving_block_total_displacement(self):
        # ground truth: block interior moves 2 px/frame for 15 steps = 30 px.
        # Edge trajectories straddle the occlusion boundary, so judge only
        # those spawned well inside the block.
        start, block, speed = (14, 31), 18, 2.0
        res = track(moving_block_clip(start=start, block=block, speed=speed))
        interior = []
        for tr in res.trajectories:
            x0 = start[0] + speed * tr.start_frame
            y0 = start[1]
            px, py = tr.points[0]
            if x0 + 4 <= px <= x0 + block - 4 and y0 + 4 <= py <= y0 + block - 4:
                steps = np.diff(tr.points, axis=0)
                interior.append(float(np.hypot(steps[:, 0], steps[:, 1]).sum()))
        assert len(interior) >= 4
        np.testing.assert_allclose(interior, 30.0, atol=3.0)

    def test_emitted_trajectories_satisfy_prune_predicates(self):
        res = track(moving_block_clip())
        for tr in res.trajectories:
            assert not is_static(tr.points, P.sigma_min)
            assert not is_erratic(tr.points, P.erratic_frac)

    def test_descriptor_dimensions(self):
        res = track(moving_block_clip())
        for tr in res.trajectories:
            assert tr.traj.shape == (TRAJ_DIM,)
            assert tr.hog.shape == (HOG_DIM,)
            assert tr.hof.shape == (HOF_DIM,)
            assert tr.mbh.shape == (MBH_DIM,)

    def test_teleporting_block_yields_no_block_trajectories(self):
        # block jumps half the frame after 7 frames; nothing trackable there
        size, block = 80, 18
        bg = smooth_texture(size, size, 9, lo=40, hi=170).astype(np.float64)
        btex = smooth_texture(block, block, 10, lo=60, hi=220).astype(np.float64)
        frames = []
        for t in range(18):
            img = bg.copy()
            x = 10 if t < 7 else 50
            img[30 : 30 + block, x : x + block] = btex
            frames.append(GrayFrame.from_array(img.astype(np.uint8)))
        clip = Clip(frames=tuple(frames), fps=15.0, modality=Modality.RGB)
        assert track(clip).trajectories == []

    def test_brightness_offset_leaves_hof_unchanged(self):
        res_a = track(moving_block_clip())
        res_b = track(moving_block_clip(offset=30))
        assert len(res_a.trajectories) == len(res_b.trajectories)
        for ta, tb in zip(res_a.trajectories, res_b.trajectories):
            np.testing.assert_allclose(ta.hof, tb.hof, atol=1e-2)

    def test_180_rotation_negates_mean_traj_descriptor(self):
        clip = moving_block_clip()
        rotated = Clip(
            frames=tuple(
                GrayFrame.from_array(np.rot90(f.data, 2).copy()) for f in clip.frames
            ),
            fps=clip.fps,
            modality=clip.modality,
        )
        mean_a = np.mean([t.traj for t in track(clip).trajectories], axis=0)
        mean_b = np.mean([t.traj for t in track(rotated).trajectories], axis=0)
        np.testing.assert_allclose(mean_a, -mean_b, atol=0.02)

    def test_ordering_is_deterministic(self):
        a = track(moving_block_clip()).trajectories
        b = track(moving_block_clip()).trajectories
        keys_a = [(t.start_frame, t.points[0, 0], t.points[0, 1]) for t in a]
        keys_b = [(t.start_frame, t.points[0, 0], t.points[0, 1]) for t in b]
        assert keys_a == keys_b == sorted(keys_a)


class TestFastPathAgainstBruteForce:
    """The integral-histogram path must agree with a naive per-pixel tally."""

    @staticmethod
    def _brute(images, flows, start, points, kind, params=P):
        L = params.traj_len
        half = params.tube_size // 2
        cs = params.tube_size // params.spatial_cells
        spt = L // params.temporal_cells
        nb = params.n_bins + (1 if kind == "hof" else 0)
        acc = np.zeros((params.temporal_cells, 2, 2, nb))
        for t in range(L):
            f = start + t
            if kind == "hog":
                gy, gx = np.gradient(images[f])
            elif kind == "hof":
                gx, gy = flows[f]  # treated as the vector field itself
            elif kind == "mbhu":
                gy, gx = np.gradient(flows[f][0])
            else:
                gy, gx = np.gradient(flows[f][1])
            cx = int(round(points[t, 0]))
            cy = int(round(points[t, 1]))
            for yy in range(cy - half, cy + half):
                for xx in range(cx - half, cx + half):
                    vx, vy = gx[yy, xx], gy[yy, xx]
                    mag = math.hypot(vx, vy)
                    if kind == "hof" and mag < params.hof_zero_thresh:
                        b, wgt = params.n_bins, 1.0
                    else:
                        ang = math.atan2(vy, vx) % (2 * math.pi)
                        b = min(int(ang * params.n_bins / (2 * math.pi)), params.n_bins - 1)
                        wgt = mag
                    ci = (yy - (cy - half)) // cs
                    cj = (xx - (cx - half)) // cs
                    acc[t // spt, ci, cj, b] += wgt
        return acc.ravel()

    def test_matches_on_tracked_clip(self):
        clip = moving_block_clip()
        res = track(clip)
        assert res.trajectories
        images = [f.data.astype(np.float64) for f in clip.frames]
        flows = []
        for t in range(len(images) - 1):
            field = dense_flow(images[t], images[t + 1], levels=P.pyramid_levels)
            flows.append((field.u, field.v))
        for tr in res.trajectories[:2]:
            hog = self._brute(images, flows, tr.start_frame, tr.points, "hog")
            hof = self._brute(images, flows, tr.start_frame, tr.points, "hof")
            mbu = self._brute(images, flows, tr.start_frame, tr.points, "mbhu")
            mbv = self._brute(images, flows, tr.start_frame, tr.points, "mbhv")
            mbh = np.concatenate([mbu, mbv])
            for ref, got in ((hog, tr.hog), (hof, tr.hof), (mbh, tr.mbh)):
                n = np.linalg.norm(ref)
                ref = ref / n if n > 0 else ref
                np.testing.assert_allclose(got, ref, atol=1e-9)


class TestFeatureDump:
    def _trajs(self, n=3, seed=0):
        rng = np.random.default_rng(seed)
        out = []
        for i in range(n):
            pts = np.cumsum(rng.normal(1.0, 0.2, size=(16, 2)), axis=0) + 20.0
            out.append(
                Trajectory(
                    start_frame=i,
                    points=pts,
                    traj=descriptor_traj(pts),
                    hog=rng.random(HOG_DIM),
                    hof=rng.random(HOF_DIM),
                    mbh=rng.random(MBH_DIM),
                )
            )
        return out

    def test_round_trip(self, tmp_path):
        trajs = self._trajs()
        path = tmp_path / "f.igtf"
        write_features(path, trajs)
        back = read_features(path)
        assert len(back) == len(trajs)
        for a, b in zip(trajs, back):
            assert a.start_frame == b.start_frame
            np.testing.assert_allclose(a.points, b.points, atol=1e-5)
            np.testing.assert_allclose(
                np.concatenate([a.traj, a.hog, a.hof, a.mbh]),
                np.concatenate([b.traj, b.hog, b.hof, b.mbh]),
                atol=1e-6,
            )

    def test_empty_round_trip(self, tmp_path):
        path = tmp_path / "f.igtf"
        write_features(path, [])
        assert read_features(path) == []

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "f.igtf"
        path.write_bytes(b"XXXX" + b"\0" * 16)
        with pytest.raises(FormatError):
            read_features(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "f.igtf"
        write_features(path, self._trajs())
        raw = path.read_bytes()
        path.write_bytes(raw[:-7])
        with pytest.raises(TruncatedPayloadError):
            read_features(path)

    def test_trajectory_length_mismatch_detected(self, tmp_path):
        path = tmp_path / "f.igtf"
        write_features(path, self._trajs())
        with pytest.raises(FormatError):
            read_features(path, traj_len=20)
