"""Scikit-learn style front end: fit a displacement field, transform meshes."""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import RunConfig
from .imgproc import hard_iou
from .mesh import Mesh, apply_displacement
from .optim import build_objective, run_deformation


def check_mesh(mesh):
    """Reject anything that is not a non-empty labeled triangle mesh."""
    if not isinstance(mesh, Mesh):
        raise TypeError(f"expected a Mesh, got {type(mesh).__name__}")
    if mesh.n_vertices == 0 or mesh.n_faces == 0:
        raise ValueError("mesh has no vertices or no faces")
    if not np.all(np.isfinite(mesh.vertices)):
        raise ValueError("mesh has non-finite vertex coordinates")
    if mesh.faces.min() < 0 or mesh.faces.max() >= mesh.n_vertices:
        raise ValueError("mesh face indices out of range")
    return mesh


def check_semantic_image(image):
    """Return an ``(H, W)`` or ``(H, W, 3)`` uint8 array."""
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[2] == 4:
        img = img[..., :3]
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ValueError(f"semantic image must be HxW or HxWx3, got shape {img.shape}")
    if img.shape[0] < 8 or img.shape[1] < 8:
        raise ValueError(f"semantic image too small: {img.shape[:2]}")
    if img.dtype != np.uint8:
        if not np.issubdtype(img.dtype, np.number) or img.min() < 0 or img.max() > 255:
            raise ValueError("semantic image values must lie in 0..255")
        if not np.array_equal(img, np.round(img)):
            raise ValueError("semantic image must hold integer color values")
        img = img.astype(np.uint8)
    return img


class MeshDeformer(TransformerMixin, BaseEstimator):
    """Deform a labeled mesh so its silhouettes match a flat-color semantic image.

    ``fit(mesh, image)`` optimizes a per-vertex displacement field starting
    from zero; ``transform(mesh)`` adds it to a mesh with the same vertex
    count. Parameters mirror :class:`deform3d.config.RunConfig`.

    Attributes
    ----------
    displacement_ : ndarray (n_vertices, 3)
    history_ : list of tuples ``(iteration, total, biou, gs, as, rig, lap)``
    camera_ : Camera used for the supervised view
    objective_ : Objective built from the source mesh
    final_ : Evaluation after the last step
    n_iter_ : int
    """

    def __init__(self, iterations=2000, lr=1e-3, lambda_biou=1e9, lambda_gs=1e3,
                 lambda_as=1e3, lambda_rig=1e6, lambda_lap=1e2, rho=16.0,
                 as_weight_literal=False, refresh_interval=50, binarize_t=0.5,
                 binarize_k=100.0, biou_mode="binary", raster_sigma=1.0, raster_eps=1e-6,
                 raster_truncation=30.0, sync_sigma=None, sync_radius=None,
                 visibility_eps=1e-3, grad_clip=1e6, color_tolerance=0, seed=0,
                 checkpoint_every=0, camera_mode="orthographic", camera_eye=None,
                 camera_look_at=None, camera_up=(0.0, 1.0, 0.0), camera_half_width=None,
                 camera_fov=math.pi / 4):
        self.iterations = iterations
        self.lr = lr
        self.lambda_biou = lambda_biou
        self.lambda_gs = lambda_gs
        self.lambda_as = lambda_as
        self.lambda_rig = lambda_rig
        self.lambda_lap = lambda_lap
        self.rho = rho
        self.as_weight_literal = as_weight_literal
        self.refresh_interval = refresh_interval
        self.binarize_t = binarize_t
        self.binarize_k = binarize_k
        self.biou_mode = biou_mode
        self.raster_sigma = raster_sigma
        self.raster_eps = raster_eps
        self.raster_truncation = raster_truncation
        self.sync_sigma = sync_sigma
        self.sync_radius = sync_radius
        self.visibility_eps = visibility_eps
        self.grad_clip = grad_clip
        self.color_tolerance = color_tolerance
        self.seed = seed
        self.checkpoint_every = checkpoint_every
        self.camera_mode = camera_mode
        self.camera_eye = camera_eye
        self.camera_look_at = camera_look_at
        self.camera_up = camera_up
        self.camera_half_width = camera_half_width
        self.camera_fov = camera_fov

    @classmethod
    def from_config(cls, cfg):
        return cls(**{k: getattr(cfg, k) for k in cls._get_param_names()})

    def to_config(self):
        return RunConfig(**self.get_params())

    def fit(self, X, y, progress=None, checkpoint=None):
        """Optimize the displacement of source mesh ``X`` toward semantic image ``y``."""
        mesh = check_mesh(X)
        image = check_semantic_image(y)
        cfg = self.to_config()
        obj = build_objective(mesh, image, cfg)
        res = run_deformation(mesh, image, cfg, progress=progress, checkpoint=checkpoint,
                              objective=obj)
        self.displacement_ = res.displacement
        self.history_ = res.history
        self.camera_ = obj.camera
        self.objective_ = obj
        self.final_ = res.final
        self.n_iter_ = len(res.history)
        self.n_vertices_in_ = mesh.n_vertices
        return self

    def transform(self, X):
        check_is_fitted(self, "displacement_")
        mesh = check_mesh(X)
        if mesh.n_vertices != self.n_vertices_in_:
            raise ValueError(f"mesh has {mesh.n_vertices} vertices, "
                             f"fitted on {self.n_vertices_in_}")
        return apply_displacement(mesh, self.displacement_)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).transform(X)

    def render(self, displacement=None):
        """Hard per-label masks of the source plus ``displacement`` (default: fitted)."""
        check_is_fitted(self, "objective_")
        d = self.displacement_ if displacement is None else np.asarray(displacement, float)
        return self.objective_.hard_masks(d)

    def score(self, X=None, y=None):
        """Mean hard IoU over labels between the fitted render and the target masks.

        ``X`` and ``y`` are accepted for API compatibility; the fitted
        objective already holds the source and its masks.
        """
        check_is_fitted(self, "objective_")
        masks = self.render()
        obj = self.objective_
        labs = [v.label for v in obj.active_views()]
        return float(np.mean([hard_iou(masks[lab], obj.masks[lab]) for lab in labs]))
