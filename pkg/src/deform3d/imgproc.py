"""Semantic-image masks, exact Euclidean distance transforms, and image metrics."""
from __future__ import annotations

import numba
import numpy as np
from PIL import Image
from scipy import ndimage

WHITE = "white"
BLACK = "black"

_FAR = 1e30


class AmbiguousColorsError(ValueError):
    pass


def read_png(path):
    """8-bit image as ``(H, W)`` grayscale or ``(H, W, 3)`` RGB array."""
    with Image.open(path) as im:
        if im.mode in ("L", "1", "I", "I;16"):
            return np.asarray(im.convert("L"))
        return np.asarray(im.convert("RGB"))


def write_png(path, img):
    img = np.asarray(img)
    if img.dtype != np.uint8:
        img = np.round(np.clip(img, 0, 255)).astype(np.uint8)
    Image.fromarray(img).save(path, format="PNG", optimize=False, compress_level=6)


def as_rgb(img):
    img = np.asarray(img)
    if img.ndim == 2:
        return np.repeat(img[..., None], 3, axis=2)
    return img[..., :3]


def separate_masks(img, label_table, tolerance=0):
    """Split a flat-color semantic image into one binary mask per label.

    A pixel belongs to label ``n`` iff every channel is within ``tolerance``
    of that label's color. Colors closer than ``2 * tolerance`` are rejected
    because a pixel could then match both.
    """
    img = as_rgb(img).astype(np.int64)
    items = sorted(label_table.items())
    for a in range(len(items)):
        for b in range(a + 1, len(items)):
            ca, cb = np.array(items[a][1][1]), np.array(items[b][1][1])
            if np.abs(ca - cb).max() <= 2 * tolerance:
                raise AmbiguousColorsError(
                    f"labels {items[a][1][0]!r} and {items[b][1][0]!r} have colors "
                    f"{tuple(ca)} and {tuple(cb)} within 2*tolerance={2 * tolerance}"
                )
    masks = {}
    for lab, (_, rgb) in items:
        dist = np.abs(img - np.asarray(rgb, dtype=np.int64)).max(axis=2)
        masks[lab] = (dist <= tolerance).astype(np.uint8)
    return masks


@numba.njit(cache=True)
def _envelope_1d(f, out, v, z):
    """Squared distance lower envelope of parabolas rooted at finite ``f`` sites."""
    n = f.shape[0]
    k = -1
    for q in range(n):
        if f[q] >= _FAR:
            continue
        fq = f[q] + q * q
        while k >= 0:
            p = v[k]
            s = (fq - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        if k == 0:
            z[k] = -np.inf
        else:
            p = v[k - 1]
            z[k] = (fq - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
        z[k + 1] = np.inf
    if k < 0:
        for q in range(n):
            out[q] = _FAR
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        out[q] = (q - p) * (q - p) + f[p]


@numba.njit(cache=True)
def _edt_squared(seed):
    h, w = seed.shape
    g = np.empty((h, w))
    n = max(h, w)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    col = np.empty(h)
    tmp = np.empty(h)
    for j in range(w):
        for i in range(h):
            col[i] = 0.0 if seed[i, j] else _FAR
        _envelope_1d(col, tmp, v, z)
        for i in range(h):
            g[i, j] = tmp[i]
    out = np.empty((h, w))
    row = np.empty(w)
    for i in range(h):
        _envelope_1d(g[i], row, v, z)
        for j in range(w):
            out[i, j] = row[j]
    return out


def distance_transform(mask, to=WHITE):
    """Exact Euclidean distance from each pixel center to the nearest ``to`` pixel."""
    mask = np.asarray(mask).astype(bool)
    if to not in (WHITE, BLACK):
        raise ValueError(f"to must be 'white' or 'black', got {to!r}")
    seed = mask if to == WHITE else ~mask
    if not seed.any():
        raise ValueError(f"mask has no {to} pixels to measure distance to")
    return np.sqrt(_edt_squared(np.ascontiguousarray(seed)))


def boundary_weight(mask, rho=16.0, literal=False):
    """Per-pixel weight from the mean of the to-white and to-black distances.

    The half-sum distance is min-max normalized to ``[0, 1]``. By default the
    weight is ``(1 - d) ** rho``, largest next to the mask boundary; with
    ``literal=True`` it is ``d ** rho`` instead.
    """
    mask = np.asarray(mask).astype(bool)
    if mask.all() or not mask.any():
        raise ValueError("boundary weight needs a mask with both classes present")
    d = 0.5 * (distance_transform(mask, WHITE) + distance_transform(mask, BLACK))
    lo, hi = d.min(), d.max()
    dn = (d - lo) / (hi - lo) if hi > lo else np.zeros_like(d)
    return dn**rho if literal else (1.0 - dn) ** rho


def bilinear_sample(img, pix):
    """Sample ``img`` at continuous pixel coords ``(N, 2)``; edges are clamped."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    x = np.clip(np.asarray(pix)[:, 0] - 0.5, 0.0, w - 1.0)
    y = np.clip(np.asarray(pix)[:, 1] - 0.5, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 2 if w > 1 else 0)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 2 if h > 1 else 0)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def mse(a, b):
    """Squared error summed over all samples, divided by ``C*H*W*255``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(((a - b) ** 2).sum() / (a.size * 255.0))


def ssim(a, b, data_range=255.0, win_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean structural similarity with a Gaussian window, valid region only."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError("ssim expects 2-D grayscale images")
    if min(a.shape) < win_size:
        raise ValueError(f"image {a.shape} smaller than the {win_size}x{win_size} window")
    radius = (win_size - 1) // 2

    def filt(x):
        return ndimage.gaussian_filter(x, sigma, truncate=radius / sigma, mode="reflect")

    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a**2
    sbb = filt(b * b) - mu_b**2
    sab = filt(a * b) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    smap = num / den
    return float(smap[radius:-radius, radius:-radius].mean())


def to_gray(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img[..., :3] @ np.array([0.299, 0.587, 0.114])


def hard_iou(a, b):
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def ellipse_mask(shape, center, semi_axes):
    """Binary ellipse sampled at pixel centers; ``center``/``semi_axes`` are ``(x, y)`` px."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    r = ((xx - center[0]) / semi_axes[0]) ** 2 + ((yy - center[1]) / semi_axes[1]) ** 2
    return (r <= 1.0).astype(np.uint8)


__all__ = [
    "AmbiguousColorsError", "read_png", "write_png", "separate_masks",
    "distance_transform", "boundary_weight", "bilinear_sample", "mse", "ssim",
    "hard_iou", "ellipse_mask", "to_gray", "as_rgb",
]
