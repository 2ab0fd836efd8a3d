"""Dense point sampling, trajectory tracking, and the four local descriptors.

Points are sampled on a regular grid wherever the image has enough 2-D
structure, tracked through median-filtered dense flow for a fixed number of
steps, and pruned when static or erratic. Each surviving trajectory carries
four descriptors computed over a 32x32 space-time tube split into a 2x2
spatial by 3 temporal cell grid:

* traj: the 15 successive displacements, normalized by total path length
* hog:  8 orientation bins of image gradients per cell (96 values)
* hof:  8 flow-orientation bins plus one zero-motion bin per cell (108)
* mbh:  8 bins on the spatial gradients of u and of v separately (192)

hog/hof/mbh are each L2-normalized as a whole; an all-zero descriptor is
legal for structureless input.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    FormatError,
    InvalidParameterError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .flow import _sample_bilinear, dense_flow, median_filter_3x3
from .frames import Clip, GrayFrame

TRAJ_DIM = 30
HOG_DIM = 96
HOF_DIM = 108
MBH_DIM = 192
DESC_DIM = TRAJ_DIM + HOG_DIM + HOF_DIM + MBH_DIM  # 426

FEATURES_MAGIC = b"IGTF"
FEATURES_VERSION = 1


@dataclass(frozen=True)
class TrackerParams:
    traj_len: int = 15            # L: steps per trajectory (L+1 points)
    grid_step: int = 5            # sampling grid spacing, px
    quality: float = 0.001        # corner threshold, fraction of frame max
    sigma_min: float = math.sqrt(3.0)  # static-pruning position std, px
    erratic_frac: float = 0.7     # single step vs total path length
    pyramid_levels: int = 3
    tube_size: int = 32
    spatial_cells: int = 2
    temporal_cells: int = 3
    n_bins: int = 8
    hof_zero_thresh: float = 0.4  # px/frame; below this flow counts as still

    def __post_init__(self):
        if self.traj_len % self.temporal_cells != 0:
            raise InvalidParameterError("traj_len must be divisible by temporal_cells")
        if self.tube_size % self.spatial_cells != 0:
            raise InvalidParameterError("tube_size must be divisible by spatial_cells")


@dataclass(frozen=True)
class Trajectory:
    start_frame: int
    points: np.ndarray    # (L+1, 2) float64, columns (x, y)
    traj: np.ndarray      # (30,)
    hog: np.ndarray       # (96,)
    hof: np.ndarray       # (108,)
    mbh: np.ndarray       # (192,)

    def __post_init__(self):
        for name, dim in (("traj", TRAJ_DIM), ("hog", HOG_DIM), ("hof", HOF_DIM), ("mbh", MBH_DIM)):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape != (dim,):
                raise InvalidParameterError(f"{name} descriptor must have {dim} values")
            object.__setattr__(self, name, a)
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64))


@dataclass
class TrackResult:
    trajectories: list[Trajectory]
    too_short: bool = False


# ---------------------------------------------------------------------------
# pruning predicates (re-checkable post hoc)

def is_static(points: np.ndarray, sigma_min: float) -> bool:
    p = np.asarray(points, dtype=np.float64)
    std = math.sqrt(float(p[:, 0].var() + p[:, 1].var()))
    return std < sigma_min


def is_erratic(points: np.ndarray, frac: float = 0.7) -> bool:
    steps = np.diff(np.asarray(points, dtype=np.float64), axis=0)
    norms = np.hypot(steps[:, 0], steps[:, 1])
    total = float(norms.sum())
    if total <= 0.0:
        return False
    return float(norms.max()) > frac * total


# ---------------------------------------------------------------------------
# point sampling

def _structure_score(img: np.ndarray) -> np.ndarray:
    """Min eigenvalue of the 3x3-window gradient covariance, per pixel."""
    gy, gx = np.gradient(img)
    p = lambda a: np.pad(a, 1, mode="edge")
    sxx = np.zeros_like(img)
    sxy = np.zeros_like(img)
    syy = np.zeros_like(img)
    pgx2, pgxy, pgy2 = p(gx * gx), p(gx * gy), p(gy * gy)
    h, w = img.shape
    for dy in range(3):
        for dx in range(3):
            sxx += pgx2[dy : dy + h, dx : dx + w]
            sxy += pgxy[dy : dy + h, dx : dx + w]
            syy += pgy2[dy : dy + h, dx : dx + w]
    return 0.5 * (sxx + syy - np.sqrt(np.maximum((sxx - syy) ** 2 + 4.0 * sxy * sxy, 0.0)))


def sample_points(frame, step: int, occupied=(), quality: float = 0.001) -> list[tuple[float, float]]:
    """Grid positions with enough texture and no live trajectory in their cell.

    `occupied` is an iterable of (x, y) positions of currently tracked points;
    a grid node is skipped when its step-sized cell already holds one.
    """
    if step < 1:
        raise InvalidParameterError("step must be >= 1")
    img = frame.data.astype(np.float64) if isinstance(frame, GrayFrame) else np.asarray(frame, dtype=np.float64)
    h, w = img.shape
    score = _structure_score(img)
    max_score = float(score.max())
    if max_score <= 0.0:
        return []
    threshold = quality * max_score

    taken = set()
    for x, y in occupied:
        taken.add((int(x // step), int(y // step)))

    points = []
    for y in range(step // 2, h, step):
        for x in range(step // 2, w, step):
            if (x // step, y // step) in taken:
                continue
            if score[y, x] >= threshold and score[y, x] > 0.0:
                points.append((float(x), float(y)))
    return points


# ---------------------------------------------------------------------------
# orientation histograms

def _orientation_bins(gx: np.ndarray, gy: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    ang = np.arctan2(gy, gx) % (2.0 * np.pi)
    bins = np.minimum((ang * (n_bins / (2.0 * np.pi))).astype(np.intp), n_bins - 1)
    return bins, np.hypot(gx, gy)


def _cell_histogram(bins: np.ndarray, weights: np.ndarray, n_bins: int) -> np.ndarray:
    return np.bincount(bins.ravel(), weights=weights.ravel(), minlength=n_bins)[:n_bins]


def _l2(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / n if n > 0 else v


def _grid_histogram(bins, weights, spatial_cells, temporal_cells, n_bins):
    """(T, S, S) tube of bin/weight maps -> flat (temporal, cy, cx, bin) histogram."""
    t_total, size, _ = bins.shape
    ts = t_total // temporal_cells
    cs = size // spatial_cells
    out = np.zeros((temporal_cells, spatial_cells, spatial_cells, n_bins))
    for tc in range(temporal_cells):
        for cy in range(spatial_cells):
            for cx in range(spatial_cells):
                b = bins[tc * ts : (tc + 1) * ts, cy * cs : (cy + 1) * cs, cx * cs : (cx + 1) * cs]
                w = weights[tc * ts : (tc + 1) * ts, cy * cs : (cy + 1) * cs, cx * cs : (cx + 1) * cs]
                out[tc, cy, cx] = _cell_histogram(b, w, n_bins)
    return out.ravel()


def descriptor_traj(points: np.ndarray) -> np.ndarray:
    """Successive displacements divided by the total path length (30 values)."""
    p = np.asarray(points, dtype=np.float64)
    steps = np.diff(p, axis=0)
    total = float(np.hypot(steps[:, 0], steps[:, 1]).sum())
    if total <= 0.0:
        raise InvalidParameterError(
            "zero total displacement: static trajectories must be pruned before description"
        )
    return (steps / total).ravel()


def descriptor_hog(volume: np.ndarray, params: TrackerParams = TrackerParams()) -> np.ndarray:
    """Gradient orientation histogram over an intensity tube (L, S, S)."""
    vol = np.asarray(volume, dtype=np.float64)
    gy = np.gradient(vol, axis=1)
    gx = np.gradient(vol, axis=2)
    bins, weights = _orientation_bins(gx, gy, params.n_bins)
    return _l2(_grid_histogram(bins, weights, params.spatial_cells, params.temporal_cells, params.n_bins))


def descriptor_hof(flow_tube: np.ndarray, params: TrackerParams = TrackerParams()) -> np.ndarray:
    """Flow orientation histogram with a zero-motion bin; tube is (L, S, S, 2)."""
    ft = np.asarray(flow_tube, dtype=np.float64)
    u, v = ft[..., 0], ft[..., 1]
    bins, weights = _orientation_bins(u, v, params.n_bins)
    still = weights < params.hof_zero_thresh
    bins = np.where(still, params.n_bins, bins)
    weights = np.where(still, 1.0, weights)
    return _l2(
        _grid_histogram(bins, weights, params.spatial_cells, params.temporal_cells, params.n_bins + 1)
    )


def descriptor_mbh(flow_tube: np.ndarray, params: TrackerParams = TrackerParams()) -> np.ndarray:
    """Orientation histograms of the gradients of u and of v (96 + 96 values)."""
    ft = np.asarray(flow_tube, dtype=np.float64)
    halves = []
    for comp in (ft[..., 0], ft[..., 1]):
        gy = np.gradient(comp, axis=1)
        gx = np.gradient(comp, axis=2)
        bins, weights = _orientation_bins(gx, gy, params.n_bins)
        halves.append(
            _grid_histogram(bins, weights, params.spatial_cells, params.temporal_cells, params.n_bins)
        )
    return _l2(np.concatenate(halves))


# ---------------------------------------------------------------------------
# fast descriptor accumulation over integral histograms

def _integral_hist(bins: np.ndarray, weights: np.ndarray, n_bins: int) -> np.ndarray:
    h, w = bins.shape
    maps = np.zeros((h, w, n_bins))
    np.put_along_axis(maps, bins[..., None], weights[..., None], axis=2)
    integ = np.zeros((h + 1, w + 1, n_bins))
    integ[1:, 1:] = maps.cumsum(axis=0).cumsum(axis=1)
    return integ


def _rect_sums(integ, y0, y1, x0, x1):
    return integ[y1, x1] - integ[y0, x1] - integ[y1, x0] + integ[y0, x0]


def _frame_integrals(images, flows, f: int, bbox, params: TrackerParams) -> dict[str, np.ndarray]:
    """Integral orientation histograms restricted to a bounding box.

    Gradients are taken on a one-pixel-padded crop so interior values match
    the full-frame central differences exactly.
    """
    p = params
    y0, y1, x0, x1 = bbox
    h, w = images[0].shape
    gy0, gy1 = max(0, y0 - 1), min(h, y1 + 1)
    gx0, gx1 = max(0, x0 - 1), min(w, x1 + 1)
    oy, ox = y0 - gy0, x0 - gx0

    out = {}
    img = images[f][gy0:gy1, gx0:gx1]
    gy, gx = np.gradient(img)
    bins, weights = _orientation_bins(gx[oy:, ox:][: y1 - y0, : x1 - x0], gy[oy:, ox:][: y1 - y0, : x1 - x0], p.n_bins)
    out["hog"] = _integral_hist(bins, weights, p.n_bins)

    u, v = flows[f]
    uc = u[y0:y1, x0:x1]
    vc = v[y0:y1, x0:x1]
    bins, weights = _orientation_bins(uc, vc, p.n_bins)
    still = weights < p.hof_zero_thresh
    bins = np.where(still, p.n_bins, bins)
    weights = np.where(still, 1.0, weights)
    out["hof"] = _integral_hist(bins, weights, p.n_bins + 1)

    for kind, comp in (("mbhu", u), ("mbhv", v)):
        crop = comp[gy0:gy1, gx0:gx1]
        cgy, cgx = np.gradient(crop)
        bins, weights = _orientation_bins(
            cgx[oy:, ox:][: y1 - y0, : x1 - x0], cgy[oy:, ox:][: y1 - y0, : x1 - x0], p.n_bins
        )
        out[kind] = _integral_hist(bins, weights, p.n_bins)
    return out


def _describe_batch(candidates, images, flows, params: TrackerParams):
    """Compute hog/hof/mbh for candidate (start, points) pairs via integrals."""
    p = params
    half = p.tube_size // 2
    cs = p.tube_size // p.spatial_cells
    slots_per_tc = p.traj_len // p.temporal_cells
    n = len(candidates)

    hog = np.zeros((n, p.temporal_cells, p.spatial_cells, p.spatial_cells, p.n_bins))
    hof = np.zeros((n, p.temporal_cells, p.spatial_cells, p.spatial_cells, p.n_bins + 1))
    mbu = np.zeros_like(hog)
    mbv = np.zeros_like(hog)

    by_frame: dict[int, list[tuple[int, int, int, int]]] = {}
    for idx, (start, points) in enumerate(candidates):
        for t in range(p.traj_len):
            cx = int(round(points[t, 0]))
            cy = int(round(points[t, 1]))
            by_frame.setdefault(start + t, []).append((idx, t, cx, cy))

    for f, entries in by_frame.items():
        idxs = np.array([e[0] for e in entries], dtype=np.intp)
        tcs = np.array([e[1] // slots_per_tc for e in entries], dtype=np.intp)
        cxs = np.array([e[2] for e in entries], dtype=np.intp)
        cys = np.array([e[3] for e in entries], dtype=np.intp)
        bbox = (
            int(cys.min() - half),
            int(cys.max() + half),
            int(cxs.min() - half),
            int(cxs.max() + half),
        )
        stacks = _frame_integrals(images, flows, f, bbox, params)
        bys = cys - bbox[0]
        bxs = cxs - bbox[2]
        for cy_i in range(p.spatial_cells):
            y0 = bys - half + cy_i * cs
            y1 = y0 + cs
            for cx_i in range(p.spatial_cells):
                x0 = bxs - half + cx_i * cs
                x1 = x0 + cs
                hog[idxs, tcs, cy_i, cx_i] += _rect_sums(stacks["hog"], y0, y1, x0, x1)
                hof[idxs, tcs, cy_i, cx_i] += _rect_sums(stacks["hof"], y0, y1, x0, x1)
                mbu[idxs, tcs, cy_i, cx_i] += _rect_sums(stacks["mbhu"], y0, y1, x0, x1)
                mbv[idxs, tcs, cy_i, cx_i] += _rect_sums(stacks["mbhv"], y0, y1, x0, x1)

    out = []
    for i in range(n):
        mbh = np.concatenate([mbu[i].ravel(), mbv[i].ravel()])
        out.append((_l2(hog[i].ravel()), _l2(hof[i].ravel()), _l2(mbh)))
    return out


def _tube_inside(points: np.ndarray, traj_len: int, half: int, w: int, h: int) -> bool:
    for t in range(traj_len):
        cx = int(round(points[t, 0]))
        cy = int(round(points[t, 1]))
        if cx - half < 0 or cx + half > w or cy - half < 0 or cy + half > h:
            return False
    return True


def track(clip: Clip, params: TrackerParams = TrackerParams()) -> TrackResult:
    """Extract dense trajectories with descriptors from a clip.

    Returns an empty result with `too_short` set when the clip has fewer than
    traj_len + 1 frames. Output ordering is deterministic: trajectories are
    sorted by (start_frame, x0, y0).
    """
    L = params.traj_len
    n_frames = len(clip.frames)
    if n_frames < L + 1:
        return TrackResult([], too_short=True)

    images = [f.data.astype(np.float64) for f in clip.frames]
    h, w = images[0].shape
    half = params.tube_size // 2

    flows: list[tuple[np.ndarray, np.ndarray]] = []
    live: list[dict] = []
    finished: list[dict] = []

    def spawn(frame_idx: int):
        occupied = [tr["points"][-1] for tr in live]
        for x, y in sample_points(images[frame_idx], params.grid_step, occupied, params.quality):
            live.append({"start": frame_idx, "points": [(x, y)]})

    spawn(0)
    for t in range(n_frames - 1):
        field = dense_flow(images[t], images[t + 1], levels=params.pyramid_levels)
        flows.append((field.u, field.v))
        u_med = median_filter_3x3(field.u)
        v_med = median_filter_3x3(field.v)

        keep = []
        if live:
            xs = np.array([tr["points"][-1][0] for tr in live])
            ys = np.array([tr["points"][-1][1] for tr in live])
            nxs = xs + _sample_bilinear(u_med, ys, xs)
            nys = ys + _sample_bilinear(v_med, ys, xs)
            for tr, nx, ny in zip(live, nxs, nys):
                if not (0.0 <= nx <= w - 1.0 and 0.0 <= ny <= h - 1.0):
                    continue  # left the frame
                tr["points"].append((float(nx), float(ny)))
                if len(tr["points"]) == L + 1:
                    finished.append(tr)
                else:
                    keep.append(tr)
        live = keep
        # Refill only while a new track can still complete within the clip.
        if (n_frames - 1) - (t + 1) >= L:
            spawn(t + 1)

    candidates = []
    for tr in finished:
        points = np.asarray(tr["points"], dtype=np.float64)
        if is_static(points, params.sigma_min):
            continue
        if is_erratic(points, params.erratic_frac):
            continue
        if not _tube_inside(points, L, half, w, h):
            continue
        candidates.append((tr["start"], points))

    candidates.sort(key=lambda c: (c[0], c[1][0, 0], c[1][0, 1]))
    described = _describe_batch(candidates, images, flows, params)

    trajectories = [
        Trajectory(
            start_frame=start,
            points=points,
            traj=descriptor_traj(points),
            hog=hog,
            hof=hof,
            mbh=mbh,
        )
        for (start, points), (hog, hof, mbh) in zip(candidates, described)
    ]
    return TrackResult(trajectories)


# ---------------------------------------------------------------------------
# feature dump

def write_features(path: str | Path, trajectories: list[Trajectory]) -> None:
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<HI", FEATURES_VERSION, len(trajectories)))
        for tr in trajectories:
            fh.write(struct.pack("<I", tr.start_frame))
            fh.write(tr.points.astype("<f4").tobytes())
            payload = np.concatenate([tr.traj, tr.hog, tr.hof, tr.mbh]).astype("<f4")
            fh.write(payload.tobytes())


def read_features(path: str | Path, traj_len: int | None = None) -> list[Trajectory]:
    raw = Path(path).read_bytes()
    if len(raw) < 10:
        raise TruncatedPayloadError("feature file shorter than its header")
    if raw[:4] != FEATURES_MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}")
    version, count = struct.unpack_from("<HI", raw, 4)
    if version != FEATURES_VERSION:
        raise UnsupportedVersionError(f"feature version {version} not supported")
    body = len(raw) - 10
    if count == 0:
        if body:
            raise FormatError("feature file declares zero trajectories but has payload")
        return []
    if body % count:
        raise TruncatedPayloadError("payload size is not a multiple of the record size")
    record = body // count
    # record = 4 + (L+1)*8 + DESC_DIM*4
    inferred = (record - 4 - DESC_DIM * 4) / 8 - 1
    if inferred <= 0 or inferred != int(inferred):
        raise FormatError("record size does not match any trajectory length")
    L = int(inferred)
    if traj_len is not None and traj_len != L:
        raise FormatError(f"expected trajectory length {traj_len}, file has {L}")

    out = []
    off = 10
    for _ in range(count):
        (start,) = struct.unpack_from("<I", raw, off)
        off += 4
        points = np.frombuffer(raw, dtype="<f4", count=(L + 1) * 2, offset=off).reshape(L + 1, 2)
        off += (L + 1) * 8
        desc = np.frombuffer(raw, dtype="<f4", count=DESC_DIM, offset=off).astype(np.float64)
        off += DESC_DIM * 4
        out.append(
            Trajectory(
                start_frame=start,
                points=points.astype(np.float64),
                traj=desc[:TRAJ_DIM],
                hog=desc[TRAJ_DIM : TRAJ_DIM + HOG_DIM],
                hof=desc[TRAJ_DIM + HOG_DIM : TRAJ_DIM + HOG_DIM + HOF_DIM],
                mbh=desc[TRAJ_DIM + HOG_DIM + HOF_DIM :],
            )
        )
    return out
