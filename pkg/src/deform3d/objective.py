"""The composed deformation objective over the global displacement field."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import losses
from .camera import ORTHOGRAPHIC, project, project_jacobian
from .imgproc import bilinear_sample, boundary_weight
from .mesh import build_adjacency
from .raster import RasterConfig, rasterize_depth, rasterize_soft, rasterize_soft_backward
from .views import build_local_views, gather, scatter_add

log = logging.getLogger(__name__)

TERMS = ("biou", "gs", "as", "rig", "lap")


class NumericalError(FloatingPointError):
    """A loss term or its gradient became non-finite."""

    def __init__(self, term, detail=""):
        super().__init__(f"non-finite values in loss term {term!r}{': ' + detail if detail else ''}")
        self.term = term


@dataclass(frozen=True, eq=False)
class Evaluation:
    total: float
    terms: dict
    grad: np.ndarray


class Objective:
    """Weighted sum of the five loss terms for one mesh, camera and mask set.

    Visibility, the sync forest, adjacency and local views are fixed at
    construction from the undeformed source. Boundary-distance weights are
    inputs to :meth:`evaluate` so callers control when they are refreshed.
    """

    def __init__(self, mesh, masks, camera, weights=losses.LossWeights(),
                 binarize=losses.BinarizeParams(), raster=None, sync=None,
                 rho=16.0, as_weight_literal=False, biou_mode="binary"):
        self.mesh = mesh
        self.camera = camera
        self.weights = weights
        self.binarize = binarize
        self.raster = raster if raster is not None else RasterConfig()
        self.sync = (sync if sync is not None else losses.SyncConfig()).resolve(camera.width)
        self.rho = rho
        self.as_weight_literal = as_weight_literal
        self.biou_mode = biou_mode
        self.shape = (camera.height, camera.width)

        self.views = build_local_views(mesh)
        self.masks = {}
        for view in self.views:
            m = masks.get(view.label)
            if m is None:
                raise KeyError(f"no target mask for label {view.label}")
            m = np.asarray(m, dtype=np.float64)
            if m.shape != self.shape:
                raise ValueError(f"mask for label {view.label} has shape {m.shape}, "
                                 f"camera renders {self.shape}")
            if not m.any():
                log.warning("empty target mask for label %s; skipping its image losses",
                            view.label)
            self.masks[view.label] = m
        self.adjacency = build_adjacency(mesh)
        self.laplacian = losses.uniform_laplacian(self.adjacency, mesh.n_vertices)

        depth = rasterize_depth(mesh, camera)
        eps = self.sync.visibility_eps * mesh.bbox_diagonal()
        self.front, self.occluded = losses.classify_visibility(camera, mesh.vertices, depth, eps)
        pix, _ = project(camera, mesh.vertices)
        self.forest = losses.build_sync_forest(pix, self.front, self.occluded, self.sync)
        self._ortho_jac = (project_jacobian(camera, mesh.vertices[:1])[0]
                           if camera.mode == ORTHOGRAPHIC else None)

    @property
    def n_vertices(self):
        return self.mesh.n_vertices

    def active_views(self):
        return [v for v in self.views if self.masks[v.label].any()]

    def positions(self, d):
        return self.mesh.vertices + d

    def render(self, d):
        """Soft silhouette per label at displacement ``d``."""
        pos = self.positions(d)
        pix, _ = project(self.camera, pos)
        return {v.label: rasterize_soft(gather(pix, v), v.local_faces, self.shape, self.raster)
                for v in self.views}

    def hard_masks(self, d):
        """Thresholded renders: coverage above the binarization threshold."""
        return {lab: (sil.values > self.binarize.t).astype(np.uint8)
                for lab, sil in self.render(d).items()}

    def boundary_weights(self, d):
        """Boundary-distance weight image per active label from the current render."""
        out = {}
        for lab, m in self.hard_masks(d).items():
            if not self.masks[lab].any():
                continue
            if m.all() or not m.any():
                out[lab] = np.zeros(self.shape)
            else:
                out[lab] = boundary_weight(m, self.rho, literal=self.as_weight_literal)
        return out

    def _jacobian(self, pos):
        if self._ortho_jac is not None:
            return None
        return project_jacobian(self.camera, pos)

    def _to_world(self, g2, jac, ids):
        if jac is None:
            return g2 @ self._ortho_jac
        return np.einsum("nr,nrc->nc", g2, jac[ids])

    def image_term(self, d, view, pix=None, jac=None):
        """Region IoU loss for one view and its gradient w.r.t. global ``d``."""
        pos = self.positions(d)
        if pix is None:
            pix, _ = project(self.camera, pos)
            jac = self._jacobian(pos)
        lp = gather(pix, view)
        sil = rasterize_soft(lp, view.local_faces, self.shape, self.raster)
        eps = self.raster.background_eps
        s = sil.clamped(eps)
        live = (sil.values > eps) & (sil.values < 1.0 - eps)
        target = self.masks[view.label]
        if self.biou_mode == "binary":
            m, scale = losses.binarize_unit(s, self.binarize)
            value, gm = losses.loss_biou(target, m)
            gs = scale * losses.binarize_backward(gm, s, self.binarize)
        else:
            value, gs = losses.loss_biou(target, s)
        gs = np.where(live, gs, 0.0)
        g2 = rasterize_soft_backward(gs, lp, view.local_faces, sil, self.raster)
        grad = np.zeros_like(pos)
        scatter_add(self._to_world(g2, jac, view.global_vertex_ids), view, grad)
        return value, grad

    def vertex_weights(self, d, as_weights):
        """Boundary weights sampled at each view's projected vertices."""
        pix, _ = project(self.camera, self.positions(d))
        return {v.label: bilinear_sample(as_weights[v.label], gather(pix, v))
                for v in self.views if v.label in as_weights}

    def angle_term(self, d, view, vertex_weights):
        pos = self.positions(d)
        value, g = losses.loss_as(gather(pos, view), view.local_faces, vertex_weights)
        grad = np.zeros_like(pos)
        scatter_add(g, view, grad)
        return value, grad

    def evaluate(self, d, as_weights=None, vertex_weights=None):
        """Total loss, raw per-term values and the gradient w.r.t. ``d``.

        ``as_weights`` maps label to a boundary-weight image, sampled at the
        current vertex projections. ``vertex_weights`` (label to per-local-vertex
        array) overrides the sampling. Either way the weights carry no gradient.
        Labels without weights contribute no angle loss.
        """
        d = np.asarray(d, dtype=np.float64)
        pos = self.positions(d)
        with np.errstate(over="ignore", invalid="ignore"):
            pix, _ = project(self.camera, pos)
        if not np.all(np.isfinite(pix)):
            raise NumericalError("biou", "projected vertex coordinates overflowed")
        jac = self._jacobian(pos)
        w = self.weights.as_dict()
        terms = dict.fromkeys(TERMS, 0.0)
        grads = {t: np.zeros_like(pos) for t in TERMS}
        if vertex_weights is None:
            vertex_weights = self.vertex_weights(d, as_weights or {})
        for view in self.active_views():
            v, g = self.image_term(d, view, pix, jac)
            terms["biou"] += v
            grads["biou"] += g
            if view.label in vertex_weights:
                v, g = self.angle_term(d, view, vertex_weights[view.label])
                terms["as"] += v
                grads["as"] += g
        terms["gs"], grads["gs"] = losses.loss_gs(d, self.forest)
        terms["rig"], grads["rig"] = losses.loss_rig(d, self.adjacency.edges)
        terms["lap"], grads["lap"] = losses.loss_lap(pos, self.laplacian)
        total = 0.0
        grad = np.zeros_like(pos)
        for t in TERMS:
            if not (np.isfinite(terms[t]) and np.all(np.isfinite(grads[t]))):
                raise NumericalError(t)
            total += w[t] * terms[t]
            grad += w[t] * grads[t]
        return Evaluation(total=float(total), terms=terms, grad=grad)
