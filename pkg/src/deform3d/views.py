"""Per-label virtual local meshes as index remaps into the global mesh.

A :class:`LocalView` never copies geometry. Reading a region is ``gather``,
and pushing region gradients back is ``scatter_add``, its exact transpose.
Vertices on the border of two regions belong to both views and collect the
gradient of each.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class LocalView:
    label: int
    global_vertex_ids: np.ndarray
    local_faces: np.ndarray
    face_ids: np.ndarray

    @property
    def n_vertices(self):
        return len(self.global_vertex_ids)


def build_local_views(mesh):
    """One view per distinct face label, in ascending label order."""
    views = []
    for lab in mesh.labels:
        face_ids = np.flatnonzero(mesh.face_labels == lab)
        faces = mesh.faces[face_ids]
        ids, inverse = np.unique(faces, return_inverse=True)
        for a in (ids, face_ids):
            a.setflags(write=False)
        local = inverse.reshape(-1, 3)
        local.setflags(write=False)
        views.append(LocalView(int(lab), ids, local, face_ids))
    return views


def gather(values, view):
    """Rows of a global per-vertex array that belong to ``view``."""
    values = np.asarray(values)
    if len(view.global_vertex_ids) and view.global_vertex_ids[-1] >= len(values):
        raise IndexError("view references vertices beyond the global array")
    return values[view.global_vertex_ids]


def scatter_add(local, view, accum):
    """Add per-local-vertex rows of ``local`` into the global buffer ``accum`` in place."""
    local = np.asarray(local)
    if len(local) != view.n_vertices:
        raise ValueError(f"expected {view.n_vertices} local rows, got {len(local)}")
    # ids are unique within a view, so fancy-index += is exact
    accum[view.global_vertex_ids] += local
    return accum


def remap_matrix(view, n_global):
    """Dense 0/1 matrix ``M`` with ``gather(x) == M @ x``; meant for small checks."""
    m = np.zeros((view.n_vertices, n_global))
    m[np.arange(view.n_vertices), view.global_vertex_ids] = 1.0
    return m
