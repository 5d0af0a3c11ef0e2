"""Loss terms on the displacement field and their analytic gradients.

Every ``loss_*`` function returns ``(value, grad)`` where ``grad`` has the
shape of the differentiated input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .camera import project


@dataclass(frozen=True)
class BinarizeParams:
    t: float = 0.5
    k: float = 100.0

    def __post_init__(self):
        if not 0 < self.t < 1:
            raise ValueError("binarize threshold must lie in (0, 1)")
        if not self.k > 0:
            raise ValueError("binarize slope must be positive")


@dataclass(frozen=True)
class LossWeights:
    biou: float = 1e9
    gs: float = 1e3
    angle: float = 1e3
    rig: float = 1e6
    lap: float = 1e2

    def __post_init__(self):
        for name in ("biou", "gs", "angle", "rig", "lap"):
            w = getattr(self, name)
            if not (np.isfinite(w) and w >= 0):
                raise ValueError(f"loss weight {name}={w} must be finite and >= 0")

    def as_dict(self):
        return {"biou": self.biou, "gs": self.gs, "as": self.angle,
                "rig": self.rig, "lap": self.lap}


@dataclass(frozen=True)
class SyncConfig:
    """Gaussian matching of occluded to front vertices in the image plane.

    ``sigma_g`` and ``match_radius`` are in pixels; ``None`` means
    ``width / 100`` and ``2 * sigma_g`` respectively. ``visibility_eps`` is a
    fraction of the bounding-box diagonal.
    """

    sigma_g: float | None = None
    match_radius: float | None = None
    visibility_eps: float = 1e-3

    def resolve(self, width):
        sigma = self.sigma_g if self.sigma_g is not None else width / 100.0
        radius = self.match_radius if self.match_radius is not None else 2.0 * sigma
        if not (sigma > 0 and radius > 0 and self.visibility_eps > 0):
            raise ValueError("sync sigma, radius and visibility_eps must be positive")
        return SyncConfig(sigma, radius, self.visibility_eps)


@dataclass(frozen=True, eq=False)
class SyncForest:
    """Trees rooted at front vertices with weighted occluded leaves.

    ``roots``, ``leaves`` and ``weights`` are the flattened ``(root, leaf, w)``
    pairs, ordered by root then leaf id.
    """

    roots: np.ndarray
    leaves: np.ndarray
    weights: np.ndarray

    @property
    def trees(self):
        out = []
        for r in np.unique(self.roots).tolist():
            sel = self.roots == r
            out.append((r, list(zip(self.leaves[sel].tolist(), self.weights[sel].tolist()))))
        return out

    def __len__(self):
        return len(self.roots)


def binarize(s, p=BinarizeParams()):
    """Smooth squashing ``a / (1 + |a|)`` with ``a = k (s - t)``; range ``(-1, 1)``."""
    a = p.k * (np.asarray(s, dtype=np.float64) - p.t)
    return a / (1.0 + np.abs(a))


def binarize_grad(s, p=BinarizeParams()):
    a = p.k * (np.asarray(s, dtype=np.float64) - p.t)
    return p.k / (1.0 + np.abs(a)) ** 2


def binarize_backward(grad_out, s, p=BinarizeParams()):
    return np.asarray(grad_out) * binarize_grad(s, p)


def binarize_unit(s, p=BinarizeParams()):
    """Binarized map rescaled affinely so coverage 0 maps to 0 and coverage 1 to 1.

    Returns the map and the constant slope of the rescaling.
    """
    lo, hi = binarize(0.0, p), binarize(1.0, p)
    scale = 1.0 / (hi - lo)
    return (binarize(s, p) - lo) * scale, scale


def loss_biou(target, bmap):
    """``1 - sum(I*B) / sum(I + B - I*B)`` with plain sums over pixels."""
    i = np.asarray(target, dtype=np.float64)
    b = np.asarray(bmap, dtype=np.float64)
    if i.shape != b.shape:
        raise ValueError(f"target shape {i.shape} != map shape {b.shape}")
    inter = (i * b).sum()
    union = (i + b - i * b).sum()
    if union == 0:
        raise ZeroDivisionError("IoU denominator is zero (empty target and empty map)")
    loss = 1.0 - inter / union
    grad = -(i * union - inter * (1.0 - i)) / union**2
    return float(loss), grad


def classify_visibility(cam, vertices, depth, eps):
    """Split vertex ids into front and occluded using a rendered depth map.

    A vertex is front when its depth is within ``eps`` (absolute) of the
    farthest of the four pixel centers around it, so a slanted surface
    sampled half a pixel away cannot hide its own vertex. Background pixels
    count as infinitely far. Vertices projecting outside the image are
    occluded.
    """
    pix, z = project(cam, vertices)
    h, w = depth.shape
    inside = ((pix[:, 0] >= 0) & (pix[:, 0] <= w) & (pix[:, 1] >= 0) & (pix[:, 1] <= h))
    j0 = np.clip(np.floor(pix[:, 0] - 0.5).astype(np.int64), 0, w - 1)
    i0 = np.clip(np.floor(pix[:, 1] - 0.5).astype(np.int64), 0, h - 1)
    j1 = np.minimum(j0 + 1, w - 1)
    i1 = np.minimum(i0 + 1, h - 1)
    far = np.maximum.reduce([depth[i0, j0], depth[i0, j1], depth[i1, j0], depth[i1, j1]])
    front = inside & (z <= far + eps)
    return np.flatnonzero(front), np.flatnonzero(~front)


def gaussian_weight(r2, sigma):
    return np.exp(-np.asarray(r2) / (2.0 * sigma**2)) / (2.0 * np.pi * sigma**2)


def build_sync_forest(pix, front, occluded, cfg):
    """Match each front vertex to occluded vertices within ``cfg.match_radius`` px.

    ``pix`` holds projected coordinates of all vertices; ``cfg`` must be
    resolved (no ``None`` fields).
    """
    pix = np.asarray(pix, dtype=np.float64)
    front = np.asarray(front, dtype=np.int64)
    occluded = np.asarray(occluded, dtype=np.int64)
    empty = SyncForest(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    if len(front) == 0 or len(occluded) == 0:
        return empty
    r2max = cfg.match_radius**2
    tree = cKDTree(pix[occluded])
    # padded query, then the exact squared-distance rule decides membership
    cand = tree.query_ball_point(pix[front], cfg.match_radius * (1 + 1e-9) + 1e-12)
    roots, leaves, r2s = [], [], []
    for root, hits in zip(front.tolist(), cand):
        if not hits:
            continue
        ids = np.sort(occluded[hits])
        dx = pix[ids] - pix[root]
        r2 = dx[:, 0] ** 2 + dx[:, 1] ** 2
        keep = r2 <= r2max
        roots.extend([root] * int(keep.sum()))
        leaves.extend(ids[keep].tolist())
        r2s.extend(r2[keep].tolist())
    if not roots:
        return empty
    return SyncForest(np.array(roots, dtype=np.int64), np.array(leaves, dtype=np.int64),
                      gaussian_weight(np.array(r2s), cfg.sigma_g))


def loss_gs(d, forest):
    """Weighted squared displacement mismatch over all root/leaf pairs."""
    d = np.asarray(d, dtype=np.float64)
    grad = np.zeros_like(d)
    if len(forest) == 0:
        return 0.0, grad
    diff = d[forest.roots] - d[forest.leaves]
    w2 = forest.weights[:, None] ** 2
    loss = float((w2 * diff**2).sum())
    g = 2.0 * w2 * diff
    np.add.at(grad, forest.roots, g)
    np.add.at(grad, forest.leaves, -g)
    return loss, grad


def loss_as(positions, faces, vertex_weights):
    """Sum over triangle corners of ``(1 + cos angle) * weight(corner vertex)``.

    Corners with an edge shorter than 1e-12 contribute nothing.
    """
    p = np.asarray(positions, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    w = np.asarray(vertex_weights, dtype=np.float64)
    grad = np.zeros_like(p)
    total = 0.0
    for k in range(3):
        a, b, c = f[:, k], f[:, (k + 1) % 3], f[:, (k + 2) % 3]
        u = p[b] - p[a]
        v = p[c] - p[a]
        lu = np.linalg.norm(u, axis=1)
        lv = np.linalg.norm(v, axis=1)
        ok = (lu >= 1e-12) & (lv >= 1e-12) & (w[a] != 0)
        lu_s = np.where(ok, lu, 1.0)[:, None]
        lv_s = np.where(ok, lv, 1.0)[:, None]
        cos = (u * v).sum(1)[:, None] / (lu_s * lv_s)
        wk = np.where(ok, w[a], 0.0)[:, None]
        total += float((wk * (1.0 + cos)).sum())
        du = wk * (v / (lu_s * lv_s) - cos * u / lu_s**2)
        dv = wk * (u / (lu_s * lv_s) - cos * v / lv_s**2)
        np.add.at(grad, b, du)
        np.add.at(grad, c, dv)
        np.add.at(grad, a, -(du + dv))
    return total, grad


def loss_rig(d, edges):
    """Sum of squared displacement differences over undirected edges."""
    d = np.asarray(d, dtype=np.float64)
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    diff = d[e[:, 0]] - d[e[:, 1]]
    grad = np.zeros_like(d)
    g = 2.0 * diff
    np.add.at(grad, e[:, 0], g)
    np.add.at(grad, e[:, 1], -g)
    return float((diff**2).sum()), grad


def uniform_laplacian(adj, n_vertices):
    """Sparse ``I - A / deg``; rows of isolated vertices are zero."""
    rows, cols, vals = [], [], []
    for i, nb in enumerate(adj.vertex_neighbors):
        if not nb:
            continue
        rows.append(i)
        cols.append(i)
        vals.append(1.0)
        inv = 1.0 / len(nb)
        rows.extend([i] * len(nb))
        cols.extend(nb)
        vals.extend([-inv] * len(nb))
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n_vertices, n_vertices))


def loss_lap(positions, lap):
    """``sum_i |p_i - mean(neighbors)|^2``; ``lap`` is adjacency or its Laplacian."""
    p = np.asarray(positions, dtype=np.float64)
    if not sparse.issparse(lap):
        lap = uniform_laplacian(lap, len(p))
    r = lap @ p
    return float((r**2).sum()), 2.0 * (lap.T @ r)
