"""Shared mesh and image fixtures built from the package's own primitives."""
import numpy as np

from deform3d.imgproc import ellipse_mask
from deform3d.mesh import Mesh, icosphere


def two_label_sphere(subdivisions=3):
    """Icosphere split into left (red) and right (blue) halves by face centroid."""
    m = icosphere(subdivisions)
    lab = np.where(m.vertices[m.faces].mean(1)[:, 0] > 0, 2, 1)
    return Mesh(m.vertices, m.faces, lab, {1: ("left", (255, 0, 0)), 2: ("right", (0, 0, 255))})


def single_label(mesh, color=(255, 0, 0)):
    return Mesh(mesh.vertices, mesh.faces, np.ones(mesh.n_faces, int), {1: ("body", color)})


def red_sphere(subdivisions=3):
    return single_label(icosphere(subdivisions))


def ellipse_image(size, semi_axes, color=(255, 0, 0), center=None):
    c = (size / 2, size / 2) if center is None else center
    img = np.zeros((size, size, 3), np.uint8)
    img[ellipse_mask((size, size), c, semi_axes).astype(bool)] = color
    return img


def split_ellipse_image(size, semi_axes):
    """Ellipse whose left half is red and right half blue, matching two_label_sphere."""
    img = np.zeros((size, size, 3), np.uint8)
    inside = ellipse_mask((size, size), (size / 2, size / 2), semi_axes).astype(bool)
    left = (np.arange(size) + 0.5 < size / 2)[None, :]
    img[inside & left] = (255, 0, 0)
    img[inside & ~left] = (0, 0, 255)
    return img
