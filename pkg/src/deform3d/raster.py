"""Soft silhouette rasterization with an analytic backward pass, and a hard z-buffer.

Per face ``j`` and pixel center ``p`` the coverage is
``sigmoid(sign * dist(p, boundary)**2 / sigma)``, with ``sign`` positive
inside the projected triangle. Faces are aggregated as
``1 - prod_j (1 - d_j)``, accumulated in log space so the backward pass can
recover ``prod_{k != j}`` without dividing by ``1 - d_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .camera import PERSPECTIVE, project

# workqueue avoids the TBB version probe; the reduction below is order-fixed anyway
numba.config.THREADING_LAYER = "workqueue"

# sigmoid(-30) ~ 1e-13; contributions beyond this are dropped
_CUTOFF_LOGIT = 30.0
# derivative of the sigmoid below which a pixel is skipped in backward
_GRAD_FLOOR = 1e-14


@dataclass(frozen=True)
class RasterConfig:
    sigma: float = 1.0
    background_eps: float = 1e-6
    truncation_px: float = 30.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sharpness sigma must be positive")
        if not 0 <= self.background_eps < 0.5:
            raise ValueError("background_eps must lie in [0, 0.5)")
        if not self.truncation_px > 0:
            raise ValueError("truncation_px must be positive")

    @property
    def radius(self):
        """Distance beyond which an outside pixel gets no coverage from a face."""
        return min(self.truncation_px, math.sqrt(self.sigma * _CUTOFF_LOGIT))


@dataclass(frozen=True, eq=False)
class SoftSilhouette:
    """Soft coverage in ``[0, 1]`` plus ``sum_j log(1 - d_j)`` per pixel."""

    values: np.ndarray
    log_background: np.ndarray

    def clamped(self, eps):
        return np.clip(self.values, eps, 1.0 - eps)


@numba.njit(cache=True, inline="always")
def _softplus(x):
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@numba.njit(cache=True, inline="always")
def _seg_dist2(px, py, ax, ay, bx, by):
    ex, ey = bx - ax, by - ay
    l2 = ex * ex + ey * ey
    t = 0.0
    if l2 > 0:
        t = ((px - ax) * ex + (py - ay) * ey) / l2
        t = min(max(t, 0.0), 1.0)
    qx, qy = ax + t * ex, ay + t * ey
    return (px - qx) ** 2 + (py - qy) ** 2, t, px - qx, py - qy


@numba.njit(cache=True, inline="always")
def _inside(px, py, x0, y0, x1, y1, x2, y2, area2):
    if area2 == 0.0:
        return False
    e0 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    e1 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    e2 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
    if area2 > 0:
        return e0 > 0 and e1 > 0 and e2 > 0
    return e0 < 0 and e1 < 0 and e2 < 0


@numba.njit(cache=True, inline="always")
def _pixel_range(lo, hi, radius, n):
    a = max(0, int(math.floor(lo - radius - 0.5)))
    b = min(n - 1, int(math.ceil(hi + radius - 0.5)))
    return a, b


@numba.njit(cache=True)
def _soft_forward(pix, faces, height, width, inv_sigma, radius, logsum):
    r2 = radius * radius
    for f in range(faces.shape[0]):
        i0, i1, i2 = faces[f, 0], faces[f, 1], faces[f, 2]
        x0, y0 = pix[i0, 0], pix[i0, 1]
        x1, y1 = pix[i1, 0], pix[i1, 1]
        x2, y2 = pix[i2, 0], pix[i2, 1]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        ca, cb = _pixel_range(min(x0, x1, x2), max(x0, x1, x2), radius, width)
        ra, rb = _pixel_range(min(y0, y1, y2), max(y0, y1, y2), radius, height)
        for i in range(ra, rb + 1):
            py = i + 0.5
            for j in range(ca, cb + 1):
                px = j + 0.5
                d0 = _seg_dist2(px, py, x0, y0, x1, y1)[0]
                d1 = _seg_dist2(px, py, x1, y1, x2, y2)[0]
                d2 = _seg_dist2(px, py, x2, y2, x0, y0)[0]
                dist2 = min(d0, d1, d2)
                if _inside(px, py, x0, y0, x1, y1, x2, y2, area2):
                    s = dist2 * inv_sigma
                elif dist2 > r2:
                    continue
                else:
                    s = -dist2 * inv_sigma
                logsum[i, j] -= _softplus(s)


@numba.njit(cache=True, parallel=True)
def _soft_backward(grad_out, pix, faces, inv_sigma, radius, logsum, gface):
    height, width = grad_out.shape
    r2 = radius * radius
    for f in numba.prange(faces.shape[0]):
        idx = faces[f]
        xs = np.empty(3)
        ys = np.empty(3)
        for k in range(3):
            xs[k] = pix[idx[k], 0]
            ys[k] = pix[idx[k], 1]
        area2 = (xs[1] - xs[0]) * (ys[2] - ys[0]) - (ys[1] - ys[0]) * (xs[2] - xs[0])
        ca, cb = _pixel_range(xs.min(), xs.max(), radius, width)
        ra, rb = _pixel_range(ys.min(), ys.max(), radius, height)
        for i in range(ra, rb + 1):
            py = i + 0.5
            for j in range(ca, cb + 1):
                g = grad_out[i, j]
                if g == 0.0:
                    continue
                px = j + 0.5
                best = np.inf
                kbest = 0
                tbest = 0.0
                dxb = 0.0
                dyb = 0.0
                for k in range(3):
                    k2 = (k + 1) % 3
                    d, t, dx, dy = _seg_dist2(px, py, xs[k], ys[k], xs[k2], ys[k2])
                    if d < best:
                        best, kbest, tbest, dxb, dyb = d, k, t, dx, dy
                if _inside(px, py, xs[0], ys[0], xs[1], ys[1], xs[2], ys[2], area2):
                    sign = 1.0
                elif best > r2:
                    continue
                else:
                    sign = -1.0
                s = sign * best * inv_sigma
                sp = _softplus(s)
                # d(1-d) = exp(-softplus(s) - softplus(-s))
                dd_ds = math.exp(-sp - _softplus(-s))
                if dd_ds < _GRAD_FLOOR:
                    continue
                others = math.exp(logsum[i, j] + sp)
                coef = g * others * dd_ds * sign * inv_sigma
                # d dist2 / d a = -2 (1 - t)(p - q),  d dist2 / d b = -2 t (p - q)
                ka, kb = kbest, (kbest + 1) % 3
                gface[f, ka, 0] += coef * -2.0 * (1.0 - tbest) * dxb
                gface[f, ka, 1] += coef * -2.0 * (1.0 - tbest) * dyb
                gface[f, kb, 0] += coef * -2.0 * tbest * dxb
                gface[f, kb, 1] += coef * -2.0 * tbest * dyb


@numba.njit(cache=True)
def _reduce_faces(faces, gface, out):
    for f in range(faces.shape[0]):
        for k in range(3):
            out[faces[f, k], 0] += gface[f, k, 0]
            out[faces[f, k], 1] += gface[f, k, 1]


def _check_inputs(pix, faces):
    pix = np.ascontiguousarray(pix, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    if faces.ndim != 2 or faces.shape[1] != 3 or len(faces) == 0:
        raise ValueError("need a non-empty (F, 3) face array")
    if pix.ndim != 2 or pix.shape[1] != 2:
        raise ValueError("projected vertices must be an (N, 2) array")
    if not np.all(np.isfinite(pix)):
        raise ValueError("non-finite projected vertex coordinates")
    if faces.min() < 0 or faces.max() >= len(pix):
        raise ValueError("face index out of range")
    return pix, faces


def rasterize_soft(pix, faces, shape, cfg=RasterConfig()):
    """Soft silhouette of triangles given by 2D pixel-space vertices.

    ``shape`` is ``(height, width)``. Returned values are unclamped; callers
    clip with ``cfg.background_eps`` before feeding a loss.
    """
    pix, faces = _check_inputs(pix, faces)
    height, width = shape
    logsum = np.zeros((height, width))
    _soft_forward(pix, faces, height, width, 1.0 / cfg.sigma, cfg.radius, logsum)
    return SoftSilhouette(values=-np.expm1(logsum), log_background=logsum)


def rasterize_soft_backward(grad_out, pix, faces, forward, cfg=RasterConfig()):
    """Gradient of ``sum(grad_out * values)`` w.r.t. the ``(N, 2)`` vertex coords."""
    pix, faces = _check_inputs(pix, faces)
    grad_out = np.ascontiguousarray(grad_out, dtype=np.float64)
    if grad_out.shape != forward.values.shape:
        raise ValueError(
            f"grad_out shape {grad_out.shape} != silhouette shape {forward.values.shape}"
        )
    gface = np.zeros((len(faces), 3, 2))
    _soft_backward(grad_out, pix, faces, 1.0 / cfg.sigma, cfg.radius,
                   forward.log_background, gface)
    out = np.zeros_like(pix)
    _reduce_faces(faces, gface, out)
    return out


@numba.njit(cache=True)
def _zbuffer(pix, depth, faces, perspective, zbuf):
    height, width = zbuf.shape
    for f in range(faces.shape[0]):
        i0, i1, i2 = faces[f, 0], faces[f, 1], faces[f, 2]
        x0, y0, x1, y1, x2, y2 = pix[i0, 0], pix[i0, 1], pix[i1, 0], pix[i1, 1], pix[i2, 0], pix[i2, 1]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0.0:
            continue
        ca = max(0, int(math.ceil(min(x0, x1, x2) - 0.5)))
        cb = min(width - 1, int(math.floor(max(x0, x1, x2) - 0.5)))
        ra = max(0, int(math.ceil(min(y0, y1, y2) - 0.5)))
        rb = min(height - 1, int(math.floor(max(y0, y1, y2) - 0.5)))
        for i in range(ra, rb + 1):
            py = i + 0.5
            for j in range(ca, cb + 1):
                px = j + 0.5
                w0 = ((x1 - px) * (y2 - py) - (y1 - py) * (x2 - px)) / area2
                w1 = ((x2 - px) * (y0 - py) - (y2 - py) * (x0 - px)) / area2
                w2 = 1.0 - w0 - w1
                if w0 < 0 or w1 < 0 or w2 < 0:
                    continue
                if perspective:
                    z = 1.0 / (w0 / depth[i0] + w1 / depth[i1] + w2 / depth[i2])
                else:
                    z = w0 * depth[i0] + w1 * depth[i1] + w2 * depth[i2]
                if z > 0 and z < zbuf[i, j]:
                    zbuf[i, j] = z


def rasterize_depth(mesh, cam, vertices=None):
    """Hard z-buffer of the nearest face depth at each pixel center (``inf`` if empty)."""
    v = mesh.vertices if vertices is None else vertices
    pix, depth = project(cam, v)
    zbuf = np.full((cam.height, cam.width), np.inf)
    _zbuffer(np.ascontiguousarray(pix), np.ascontiguousarray(depth),
             np.ascontiguousarray(mesh.faces), cam.mode == PERSPECTIVE, zbuf)
    return zbuf


def to_uint8(img, depth=False):
    """Grayscale 8-bit view of a silhouette in ``[0, 1]`` or a depth map."""
    img = np.asarray(img, dtype=np.float64)
    if depth:
        out = np.full(img.shape, 255, dtype=np.uint8)
        fin = np.isfinite(img)
        if fin.any():
            lo, hi = img[fin].min(), img[fin].max()
            span = hi - lo if hi > lo else 1.0
            out[fin] = np.round((img[fin] - lo) / span * 254).astype(np.uint8)
        return out
    return np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
