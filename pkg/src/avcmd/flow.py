"""Dense optical flow via iterative pyramidal Lucas-Kanade.

The estimator builds Gaussian pyramids for both frames, then refines a dense
displacement field coarse-to-fine. At every level the second frame is warped
back by the current estimate and a windowed least-squares increment is solved
in closed form per pixel. Textureless pixels (small minimum eigenvalue of the
gradient normal matrix) receive no increment, which leaves them at the value
interpolated from coarser levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .frames import GrayFrame

# 5-tap binomial kernel used for pyramid smoothing.
_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement in pixels/frame; u is horizontal, v vertical."""

    width: int
    height: int
    u: np.ndarray  # shape (height, width), float64
    v: np.ndarray

    def __post_init__(self):
        for name in ("u", "v"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape != (self.height, self.width):
                raise InvalidParameterError(f"{name} must have shape (height, width)")
            if not np.all(np.isfinite(a)):
                raise InvalidParameterError(f"{name} contains non-finite values")
            a = np.ascontiguousarray(a)
            a.flags.writeable = False
            object.__setattr__(self, name, a)


def _as_float_image(frame) -> np.ndarray:
    if isinstance(frame, GrayFrame):
        return frame.data.astype(np.float64)
    a = np.asarray(frame, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidParameterError("expected a 2-D intensity image")
    return a


def _smooth(img: np.ndarray) -> np.ndarray:
    # Separable binomial blur with edge-replicated borders.
    p = np.pad(img, 2, mode="edge")
    out = np.zeros_like(img)
    tmp = np.zeros((img.shape[0], p.shape[1]))
    for k, w in enumerate(_BINOMIAL):
        tmp += w * p[k : k + img.shape[0], :]
    for k, w in enumerate(_BINOMIAL):
        out += w * tmp[:, k : k + img.shape[1]]
    return out


def _downsample(img: np.ndarray) -> np.ndarray:
    return _smooth(img)[::2, ::2]


def _build_pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(levels - 1):
        if min(pyr[-1].shape) < 8:
            break
        pyr.append(_downsample(pyr[-1]))
    return pyr


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy, gx = np.gradient(img)
    return gx, gy


def _box_sum(img: np.ndarray, radius: int) -> np.ndarray:
    """Sum over a (2r+1)^2 window, clipped at the borders.

    Uses an integral image embedded in a zero/saturated border so every
    window sum is a pure slice expression.
    """
    h, w = img.shape
    r = radius
    c = img.cumsum(axis=0).cumsum(axis=1)
    integ = np.zeros((h + 2 * r + 1, w + 2 * r + 1))
    integ[r + 1 : r + 1 + h, r + 1 : r + 1 + w] = c
    integ[r + 1 + h :, r + 1 : r + 1 + w] = c[-1]
    integ[r + 1 : r + 1 + h, r + 1 + w :] = c[:, -1:]
    integ[r + 1 + h :, r + 1 + w :] = c[-1, -1]
    return (
        integ[2 * r + 1 :, 2 * r + 1 :]
        - integ[:h, 2 * r + 1 :]
        - integ[2 * r + 1 :, :w]
        + integ[:h, :w]
    )


def _sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup at float coordinates, clamped to the image."""
    h, w = img.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _resize_flow(u: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = u.shape
    ht, wt = shape
    ys = (np.arange(ht) + 0.5) * (h / ht) - 0.5
    xs = (np.arange(wt) + 0.5) * (w / wt) - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    return _sample_bilinear(u, grid_y, grid_x)


def dense_flow(
    prev,
    nxt,
    levels: int = 3,
    window: int = 7,
    iterations: int = 3,
    min_eig: float = 1e-3,
) -> FlowField:
    """Estimate dense displacement from `prev` to `nxt`.

    Inputs are GrayFrames or 2-D arrays of equal shape; `levels` is the
    pyramid depth (>= 1). For a pure integer translation of a textured image
    the interior median of the result matches the translation to well under
    a quarter pixel per component.
    """
    a = _as_float_image(prev)
    b = _as_float_image(nxt)
    if a.shape != b.shape:
        raise InvalidParameterError("frames must share dimensions")
    if levels < 1:
        raise InvalidParameterError("levels must be >= 1")
    radius = max(1, window // 2)

    pyr_a = _build_pyramid(a, levels)
    pyr_b = _build_pyramid(b, levels)

    u = np.zeros_like(pyr_a[-1])
    v = np.zeros_like(pyr_a[-1])

    for lvl in range(len(pyr_a) - 1, -1, -1):
        pa, pb = pyr_a[lvl], pyr_b[lvl]
        h, w = pa.shape
        if u.shape != pa.shape:
            scale_y = h / u.shape[0]
            scale_x = w / u.shape[1]
            u = _resize_flow(u, (h, w)) * scale_x
            v = _resize_flow(v, (h, w)) * scale_y

        gx, gy = _gradients(pa)
        sxx = _box_sum(gx * gx, radius)
        sxy = _box_sum(gx * gy, radius)
        syy = _box_sum(gy * gy, radius)
        det = sxx * syy - sxy * sxy
        trace = sxx + syy
        lam_min = 0.5 * (trace - np.sqrt(np.maximum((sxx - syy) ** 2 + 4.0 * sxy * sxy, 0.0)))
        valid = (lam_min > min_eig) & (det > 1e-12)
        inv_det = np.where(valid, 1.0 / np.where(valid, det, 1.0), 0.0)

        grid_y, grid_x = np.meshgrid(
            np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
        )
        for _ in range(iterations):
            warped = _sample_bilinear(pb, grid_y + v, grid_x + u)
            it = warped - pa
            sxt = _box_sum(gx * it, radius)
            syt = _box_sum(gy * it, radius)
            du = (-syy * sxt + sxy * syt) * inv_det
            dv = (sxy * sxt - sxx * syt) * inv_det
            # A single increment larger than the window is never trustworthy.
            np.clip(du, -radius, radius, out=du)
            np.clip(dv, -radius, radius, out=dv)
            u = u + du
            v = v + dv

    return FlowField(width=a.shape[1], height=a.shape[0], u=u, v=v)


def median_filter_3x3(field: np.ndarray) -> np.ndarray:
    """3x3 median with edge replication; stabilizes flow before tracking."""
    p = np.pad(field, 1, mode="edge")
    h, w = field.shape
    stack = np.empty((9, h, w))
    k = 0
    for dy in range(3):
        for dx in range(3):
            stack[k] = p[dy : dy + h, dx : dx + w]
            k += 1
    return np.median(stack, axis=0)
