"""Adam on the displacement field and the deformation loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .imgproc import separate_masks
from .mesh import apply_displacement
from .objective import TERMS, NumericalError, Objective

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("iteration", "total") + TERMS


class UnmatchedLabelsError(ValueError):
    def __init__(self, labels):
        names = ", ".join(f"{lab} ({name})" for lab, name in labels)
        super().__init__(f"mesh labels with no matching color in the image: {names}")
        self.labels = labels


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, shape, lr=1e-3):
        return cls(np.zeros(shape), np.zeros(shape), 0, lr)


def adam_step(state, d, grad):
    """One bias-corrected Adam update; returns the new ``d`` and mutates ``state``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != d.shape or state.m.shape != d.shape:
        raise ValueError(f"shape mismatch: d {d.shape}, grad {grad.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("total", "gradient passed to Adam")
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = state.m / (1 - state.beta1**state.step)
    v_hat = state.v / (1 - state.beta2**state.step)
    # overflow shows up as inf in d, which the caller reports
    with np.errstate(over="ignore"):
        return d - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_rows(grad, max_norm):
    norms = np.linalg.norm(grad, axis=1, keepdims=True)
    scale = np.minimum(1.0, max_norm / np.maximum(norms, 1e-300))
    return grad * scale


def build_objective(source, image, cfg, camera=None):
    """Masks from the semantic image plus the fixed initialization structures."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    masks = separate_masks(image, source.label_table, cfg.color_tolerance)
    used = source.labels
    missing = [(lab, source.label_table[lab][0]) for lab in used if not masks[lab].any()]
    if missing:
        raise UnmatchedLabelsError(missing)
    cam = camera if camera is not None else cfg.camera(source, (w, h))
    return Objective(source, masks, cam, weights=cfg.weights, binarize=cfg.binarize,
                     raster=cfg.raster, sync=cfg.sync, rho=cfg.rho,
                     as_weight_literal=cfg.as_weight_literal, biou_mode=cfg.biou_mode)


@dataclass
class DeformationResult:
    mesh: object
    displacement: np.ndarray
    history: list = field(default_factory=list)
    final: object = None
    objective: object = None


def run_deformation(source, image, cfg, progress=None, checkpoint=None, objective=None):
    """Optimize the displacement field from zero for ``cfg.iterations`` Adam steps.

    ``progress(row)`` receives one history row per iteration; ``checkpoint(it, d)``
    is called every ``cfg.checkpoint_every`` iterations when that is positive.
    The history row for iteration ``i`` holds the losses before step ``i``.
    """
    obj = objective if objective is not None else build_objective(source, image, cfg)
    d = np.zeros((source.n_vertices, 3))
    state = AdamState.zeros(d.shape, cfg.lr)
    history = []
    as_weights = None
    for it in range(cfg.iterations):
        if it % cfg.refresh_interval == 0:
            as_weights = obj.boundary_weights(d)
        ev = obj.evaluate(d, as_weights)
        row = (it, ev.total) + tuple(ev.terms[t] for t in TERMS)
        history.append(row)
        if progress is not None:
            progress(row)
        d = adam_step(state, d, clip_rows(ev.grad, cfg.grad_clip))
        if not np.all(np.isfinite(d)):
            raise NumericalError("total", f"displacement at iteration {it}")
        if checkpoint is not None and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            checkpoint(it + 1, d)
    final = obj.evaluate(d, obj.boundary_weights(d))
    return DeformationResult(apply_displacement(source, d), d, history, final, obj)
