"""Central finite-difference checks for every differentiable path."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses
from .camera import PERSPECTIVE, Camera, default_camera, project, project_jacobian
from .imgproc import ellipse_mask
from .mesh import Mesh, build_adjacency, icosphere
from .objective import Objective
from .raster import RasterConfig, rasterize_soft, rasterize_soft_backward

TERMS = ("binarize", "biou", "raster", "projection", "gs", "as", "rig", "lap",
         "total", "total_perspective")


@dataclass(frozen=True)
class GradReport:
    term: str
    max_rel_error: float
    max_abs_error: float
    worst_index: int
    passed: bool

    def row(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.term:<18} {self.max_rel_error:12.3e} {self.max_abs_error:12.3e} "
                f"{self.worst_index:8d}  {status}")


def finite_diff_grad(f, x, h):
    """Central differences of a scalar function at every coordinate of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def compare(term, analytic, numeric, tol):
    """Relative error is ``max|a - n| / max(|a|_inf, |n|_inf)``.

    When both gradients are below 1e-8 everywhere the absolute error must
    stay under 1e-6 instead.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    err = np.abs(a - n)
    worst = int(np.argmax(err)) if err.size else -1
    abs_err = float(err.max()) if err.size else 0.0
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    if scale > 1e-8:
        rel = abs_err / scale
        ok = rel < tol
    else:
        rel = 0.0
        ok = abs_err < 1e-6
    return GradReport(term, float(rel), abs_err, worst, bool(ok))


def _flip(term, corrupt):
    return -1.0 if term in corrupt else 1.0


def _small_mesh(rng, subdivisions=1):
    m = icosphere(subdivisions)
    v = m.vertices * rng.uniform(0.8, 1.2, size=3) + rng.normal(0, 0.03, m.vertices.shape)
    labels = (v[m.faces].mean(1)[:, 0] > rng.uniform(-0.3, 0.3)).astype(np.int64) + 1
    table = {1: ("left", (255, 0, 0)), 2: ("right", (0, 0, 255))}
    return Mesh(v, m.faces, labels, table)


def _check_binarize(rng, tol, corrupt):
    p = losses.BinarizeParams(t=rng.uniform(0.3, 0.7), k=rng.uniform(5, 100))
    s = rng.uniform(0, 1, 50)
    w = rng.normal(size=50)
    a = _flip("binarize", corrupt) * losses.binarize_backward(w, s, p)
    n = finite_diff_grad(lambda x: float((w * losses.binarize(x, p)).sum()), s, 1e-6)
    return compare("binarize", a, n, tol)


def _check_biou(rng, tol, corrupt):
    target = (rng.random((12, 12)) < 0.4).astype(np.float64)
    b = rng.uniform(0.05, 0.95, (12, 12))
    _, a = losses.loss_biou(target, b)
    n = finite_diff_grad(lambda x: losses.loss_biou(target, x)[0], b, 1e-6)
    return compare("biou", _flip("biou", corrupt) * a, n, tol)


def _check_raster(rng, tol, corrupt):
    pix = rng.uniform(2, 14, (8, 2))
    faces = np.array([rng.choice(8, 3, replace=False) for _ in range(8)])
    cfg = RasterConfig(sigma=rng.uniform(0.5, 2.0))
    w = rng.normal(size=(16, 16))
    fwd = rasterize_soft(pix, faces, (16, 16), cfg)
    a = rasterize_soft_backward(w, pix, faces, fwd, cfg)
    n = finite_diff_grad(
        lambda x: float((w * rasterize_soft(x, faces, (16, 16), cfg).values).sum()), pix, 1e-4)
    return compare("raster", _flip("raster", corrupt) * a, n, tol)


def _random_perspective(rng):
    eye = rng.normal(size=3)
    eye = 6.0 * eye / np.linalg.norm(eye)
    return Camera(mode=PERSPECTIVE, eye=tuple(eye), look_at=(0.0, 0.0, 0.0),
                  up=(0.0, 1.0, 0.0) if abs(eye[1]) < 5.5 else (1.0, 0.0, 0.0),
                  fov=rng.uniform(0.4, 1.2), image_size=(32, 32))


def _check_projection(rng, tol, corrupt):
    cam = _random_perspective(rng)
    pts = rng.normal(0, 0.5, (10, 3))
    w = rng.normal(size=(10, 2))
    a = np.einsum("nr,nrc->nc", w, project_jacobian(cam, pts))
    n = finite_diff_grad(lambda x: float((w * project(cam, x)[0]).sum()), pts, 1e-6)
    return compare("projection", _flip("projection", corrupt) * a, n, tol)


def _check_gs(rng, tol, corrupt):
    pix = rng.uniform(0, 20, (40, 2))
    front = np.arange(0, 40, 2)
    occl = np.arange(1, 40, 2)
    cfg = losses.SyncConfig(1.5, 4.0, 1e-3)
    forest = losses.build_sync_forest(pix, front, occl, cfg)
    d = rng.normal(size=(40, 3))
    a = losses.loss_gs(d, forest)[1]
    n = finite_diff_grad(lambda x: losses.loss_gs(x, forest)[0], d, 1e-5)
    return compare("gs", _flip("gs", corrupt) * a, n, tol)


def _check_as(rng, tol, corrupt):
    m = _small_mesh(rng)
    w = rng.uniform(0, 1, m.n_vertices)
    a = losses.loss_as(m.vertices, m.faces, w)[1]
    n = finite_diff_grad(lambda x: losses.loss_as(x, m.faces, w)[0], m.vertices, 1e-6)
    return compare("as", _flip("as", corrupt) * a, n, tol)


def _check_rig(rng, tol, corrupt):
    m = _small_mesh(rng)
    edges = build_adjacency(m).edges
    d = rng.normal(0, 0.1, m.vertices.shape)
    a = losses.loss_rig(d, edges)[1]
    n = finite_diff_grad(lambda x: losses.loss_rig(x, edges)[0], d, 1e-5)
    return compare("rig", _flip("rig", corrupt) * a, n, tol)


def _check_lap(rng, tol, corrupt):
    m = _small_mesh(rng)
    lap = losses.uniform_laplacian(build_adjacency(m), m.n_vertices)
    a = losses.loss_lap(m.vertices, lap)[1]
    n = finite_diff_grad(lambda x: losses.loss_lap(x, lap)[0], m.vertices, 1e-6)
    return compare("lap", _flip("lap", corrupt) * a, n, tol)


def small_problem(rng, perspective=False, size=32):
    """Randomized two-label problem on a 42-vertex sphere with unit loss weights.

    Unit weights keep every term at a comparable scale; the composition is
    linear in the weights, so this checks the same code path.
    """
    m = _small_mesh(rng)
    cam = default_camera(m, (size, size))
    if perspective:
        eye = np.array([0.3, 0.2, 5.0])
        cam = Camera(mode=PERSPECTIVE, eye=tuple(eye), look_at=(0.0, 0.0, 0.0),
                     fov=0.6, image_size=(size, size))
    c = size / 2 + rng.uniform(-2, 2, 2)
    masks = {
        1: ellipse_mask((size, size), (c[0] - 4, c[1]), (6, 9)),
        2: ellipse_mask((size, size), (c[0] + 4, c[1]), (7, 8)),
    }
    obj = Objective(m, masks, cam, weights=losses.LossWeights(1.0, 1.0, 1.0, 1.0, 1.0),
                    sync=losses.SyncConfig(sigma_g=1.0, match_radius=3.0))
    d = rng.normal(0, 0.02, m.vertices.shape)
    return obj, d


def _check_total(rng, tol, corrupt, perspective=False):
    name = "total_perspective" if perspective else "total"
    obj, d = small_problem(rng, perspective)
    # angle weights are non-differentiable inputs: sample once, then freeze
    vw = obj.vertex_weights(d, obj.boundary_weights(d))
    a = obj.evaluate(d, vertex_weights=vw).grad
    # k=100 binarization is steep: larger steps leave up to 1e-2 truncation error
    h = 1e-6 * obj.mesh.bbox_diagonal()
    n = finite_diff_grad(lambda x: obj.evaluate(x, vertex_weights=vw).total, d, h)
    return compare(name, _flip(name, corrupt) * a, n, tol)


_CHECKS = {
    "binarize": _check_binarize,
    "biou": _check_biou,
    "raster": _check_raster,
    "projection": _check_projection,
    "gs": _check_gs,
    "as": _check_as,
    "rig": _check_rig,
    "lap": _check_lap,
    "total": _check_total,
    "total_perspective": lambda rng, tol, corrupt: _check_total(rng, tol, corrupt, True),
}


def check_all(seed=0, tolerance=1e-3, terms=TERMS, corrupt=()):
    """Run each check on a fresh random instance; ``corrupt`` sign-flips analytic gradients."""
    reports = []
    for i, term in enumerate(terms):
        rng = np.random.default_rng([seed, i])
        reports.append(_CHECKS[term](rng, tolerance, set(corrupt)))
    return reports


def format_reports(reports):
    head = f"{'term':<18} {'max rel err':>12} {'max abs err':>12} {'worst':>8}  status"
    return "\n".join([head, "-" * len(head)] + [r.row() for r in reports])
