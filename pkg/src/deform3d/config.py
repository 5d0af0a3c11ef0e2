"""Run configuration and the flat ``key = value`` config file format."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

from .camera import ORTHOGRAPHIC, Camera, default_camera
from .losses import BinarizeParams, LossWeights, SyncConfig
from .raster import RasterConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """All optimization settings; defaults follow the reference setup.

    Camera fields left as ``None`` fall back to an orthographic front view
    framing the source mesh with a 10% margin. Angles are in radians.
    """

    iterations: int = 2000
    lr: float = 1e-3
    lambda_biou: float = 1e9
    lambda_gs: float = 1e3
    lambda_as: float = 1e3
    lambda_rig: float = 1e6
    lambda_lap: float = 1e2
    rho: float = 16.0
    as_weight_literal: bool = False
    refresh_interval: int = 50
    binarize_t: float = 0.5
    binarize_k: float = 100.0
    biou_mode: str = "binary"
    raster_sigma: float = 1.0
    raster_eps: float = 1e-6
    raster_truncation: float = 30.0
    sync_sigma: float | None = None
    sync_radius: float | None = None
    visibility_eps: float = 1e-3
    grad_clip: float = 1e6
    color_tolerance: int = 0
    seed: int = 0
    checkpoint_every: int = 0
    camera_mode: str = ORTHOGRAPHIC
    camera_eye: tuple | None = None
    camera_look_at: tuple | None = None
    camera_up: tuple = (0.0, 1.0, 0.0)
    camera_half_width: float | None = None
    camera_fov: float = math.pi / 4

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.refresh_interval < 1:
            raise ConfigError("refresh_interval must be >= 1")
        if self.biou_mode not in ("binary", "soft"):
            raise ConfigError("biou_mode must be 'binary' or 'soft'")
        if self.rho < 0:
            raise ConfigError("rho must be >= 0")
        if not self.grad_clip > 0:
            raise ConfigError("grad_clip must be positive")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        try:
            self.weights, self.binarize, self.raster, self.sync
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def weights(self):
        return LossWeights(self.lambda_biou, self.lambda_gs, self.lambda_as,
                           self.lambda_rig, self.lambda_lap)

    @property
    def binarize(self):
        return BinarizeParams(self.binarize_t, self.binarize_k)

    @property
    def raster(self):
        return RasterConfig(self.raster_sigma, self.raster_eps, self.raster_truncation)

    @property
    def sync(self):
        return SyncConfig(self.sync_sigma, self.sync_radius, self.visibility_eps)

    def camera(self, mesh, image_size):
        """Camera for ``image_size = (width, height)``, defaulted from the mesh."""
        base = default_camera(mesh, image_size)
        try:
            return Camera(
                mode=self.camera_mode,
                eye=tuple(self.camera_eye) if self.camera_eye is not None else base.eye,
                look_at=tuple(self.camera_look_at) if self.camera_look_at is not None
                else base.look_at,
                up=tuple(self.camera_up),
                ortho_half_width=self.camera_half_width if self.camera_half_width is not None
                else base.ortho_half_width,
                fov=self.camera_fov,
                image_size=tuple(image_size),
            )
        except ValueError as exc:
            raise ConfigError(f"bad camera: {exc}") from exc

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# keys in a config file that are paths, not RunConfig fields
PATH_KEYS = ("mesh", "mtl", "image", "output_dir")

_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(name, text):
    f = _FIELDS[name]
    t = str(f.type)
    text = text.strip()
    if text.lower() in ("none", "auto", "") and "None" in t:
        return None
    try:
        if t.startswith("tuple"):
            vals = tuple(float(x) for x in text.replace(",", " ").split())
            if len(vals) != 3:
                raise ValueError("expected three numbers")
            return vals
        if t.startswith("bool"):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError("expected a boolean")
        if t.startswith("int"):
            return int(float(text)) if float(text).is_integer() else int(text)
        if t.startswith("float"):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}: {exc}") from None


def parse_config_text(text):
    """Parse ``key = value`` lines into ``(run_fields, paths)`` dicts."""
    run, paths = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in PATH_KEYS:
            paths[key] = value
        elif key in _FIELDS:
            run[key] = _parse_value(key, value)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return run, paths


def apply_overrides(run, paths, overrides):
    """Apply ``key=value`` strings on top of parsed config dicts (copies)."""
    run, paths = dict(run), dict(paths)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if key in PATH_KEYS:
            paths[key] = value
        elif key in _FIELDS:
            run[key] = _parse_value(key, value)
        else:
            raise ConfigError(f"unknown override key {key!r}")
    return run, paths


def build_run_config(run):
    try:
        return RunConfig(**run)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def format_config(cfg, paths=None):
    """Inverse of :func:`parse_config_text` for a full RunConfig."""
    lines = [f"{k} = {v}" for k, v in (paths or {}).items()]
    for name in _FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, tuple):
            v = ", ".join(repr(float(x)) for x in v)
        lines.append(f"{name} = {v}")
    return "\n".join(lines) + "\n"


__all__ = ["RunConfig", "ConfigError", "parse_config_text", "apply_overrides",
           "build_run_config", "format_config", "PATH_KEYS"]
