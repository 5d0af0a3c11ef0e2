"""Single supervised viewpoint: projection to pixels and its Jacobian.

Pixel coordinates are continuous with the origin at the top-left image
corner, +x right, +y down; pixel ``(i, j)`` has its center at
``(j + 0.5, i + 0.5)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHOGRAPHIC = "orthographic"
PERSPECTIVE = "perspective"


class ProjectionError(ValueError):
    pass


@dataclass(frozen=True)
class Camera:
    mode: str = ORTHOGRAPHIC
    eye: tuple = (0.0, 0.0, 10.0)
    look_at: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    ortho_half_width: float = 1.0
    fov: float = np.pi / 4
    image_size: tuple = (128, 128)

    def __post_init__(self):
        if self.mode not in (ORTHOGRAPHIC, PERSPECTIVE):
            raise ValueError(f"unknown camera mode {self.mode!r}")
        w, h = self.image_size
        if w < 8 or h < 8:
            raise ValueError(f"image must be at least 8x8 pixels, got {w}x{h}")
        fwd = np.subtract(self.look_at, self.eye, dtype=np.float64)
        if np.linalg.norm(fwd) == 0:
            raise ValueError("eye and look_at coincide")
        if np.linalg.norm(np.cross(fwd, self.up)) < 1e-12 * np.linalg.norm(fwd):
            raise ValueError("up vector is parallel to the viewing direction")
        if self.mode == ORTHOGRAPHIC and not self.ortho_half_width > 0:
            raise ValueError("ortho_half_width must be positive")
        if self.mode == PERSPECTIVE and not 0 < self.fov < np.pi:
            raise ValueError("fov must lie in (0, pi)")

    @property
    def width(self):
        return int(self.image_size[0])

    @property
    def height(self):
        return int(self.image_size[1])

    def basis(self):
        """Rows are camera right, up and forward unit vectors in world space."""
        f = np.subtract(self.look_at, self.eye, dtype=np.float64)
        f /= np.linalg.norm(f)
        r = np.cross(f, self.up)
        r /= np.linalg.norm(r)
        u = np.cross(r, f)
        return np.stack([r, u, f])

    @property
    def scale(self):
        """Pixels per model unit (orthographic) or focal length in pixels."""
        if self.mode == ORTHOGRAPHIC:
            return self.width / (2.0 * self.ortho_half_width)
        return (self.height / 2.0) / np.tan(self.fov / 2.0)

    def to_camera(self, points):
        p = np.asarray(points, dtype=np.float64)
        return (p - np.asarray(self.eye, dtype=np.float64)) @ self.basis().T


def default_camera(mesh, image_size=(128, 128), margin=0.1):
    """Orthographic front view framing the mesh bounding box."""
    lo, hi = mesh.vertices.min(0), mesh.vertices.max(0)
    center = (lo + hi) / 2
    half = (hi - lo) / 2
    w, h = image_size
    half_width = (1.0 + margin) * max(half[0], half[1] * w / h, 1e-9)
    depth = max(half[2], 1e-9)
    eye = center + np.array([0.0, 0.0, depth + 2.0 * max(half_width, depth)])
    return Camera(
        mode=ORTHOGRAPHIC,
        eye=tuple(eye.tolist()),
        look_at=tuple(center.tolist()),
        up=(0.0, 1.0, 0.0),
        ortho_half_width=float(half_width),
        image_size=(int(w), int(h)),
    )


def project(cam, points):
    """Project ``(..., 3)`` points to ``(..., 2)`` pixel coords and camera depth."""
    pc = cam.to_camera(points)
    x, y, z = pc[..., 0], pc[..., 1], pc[..., 2]
    s = cam.scale
    if cam.mode == PERSPECTIVE:
        if np.any(z <= 1e-9):
            raise ProjectionError("point at or behind the eye in perspective mode")
        x, y = x / z, y / z
    pix = np.stack([cam.width / 2.0 + s * x, cam.height / 2.0 - s * y], axis=-1)
    return pix, z


def project_jacobian(cam, points):
    """``(..., 2, 3)`` derivative of pixel coordinates w.r.t. world position."""
    pc = cam.to_camera(points)
    r, u, f = cam.basis()
    s = cam.scale
    shape = pc.shape[:-1]
    if cam.mode == ORTHOGRAPHIC:
        jac = np.stack([s * r, -s * u])
        return np.broadcast_to(jac, shape + (2, 3)).copy()
    z = pc[..., 2:3]
    if np.any(z <= 1e-9):
        raise ProjectionError("point at or behind the eye in perspective mode")
    jx = s * (r / z - pc[..., 0:1] * f / z**2)
    jy = -s * (u / z - pc[..., 1:2] * f / z**2)
    return np.stack([jx, jy], axis=-2)
