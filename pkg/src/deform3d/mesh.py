"""Triangle meshes with per-face semantic labels, OBJ/MTL I/O and adjacency."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LABEL = 0
DEFAULT_NAME = "default"
DEFAULT_COLOR = (255, 255, 255)

# used when no MTL is supplied; distinct enough for exact color matching
_PALETTE = [
    (255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0), (255, 0, 255),
    (0, 255, 255), (255, 128, 0), (128, 0, 255), (0, 128, 255), (128, 255, 0),
]


class ObjParseError(ValueError):
    """Malformed OBJ/MTL input; ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable labeled triangle mesh.

    ``label_table`` maps a label id to ``(name, (r, g, b))`` with 0-255 colors.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_labels: np.ndarray = None
    label_table: dict = field(default_factory=dict)

    def __post_init__(self):
        v = _readonly(self.vertices, np.float64).reshape(-1, 3)
        f = _readonly(self.faces, np.int64).reshape(-1, 3)
        if self.face_labels is None:
            labels = np.full(len(f), DEFAULT_LABEL, dtype=np.int64)
        else:
            labels = np.asarray(self.face_labels, dtype=np.int64).ravel()
        table = dict(self.label_table)
        if DEFAULT_LABEL in set(labels.tolist()) and DEFAULT_LABEL not in table:
            table[DEFAULT_LABEL] = (DEFAULT_NAME, DEFAULT_COLOR)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "face_labels", _readonly(labels, np.int64))
        object.__setattr__(self, "label_table", table)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def labels(self):
        """Distinct face labels in ascending order."""
        return sorted(set(self.face_labels.tolist()))

    def bbox_diagonal(self):
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    def with_vertices(self, vertices):
        return Mesh(vertices, self.faces, self.face_labels, self.label_table)


@dataclass(frozen=True, eq=False)
class AdjacencyInfo:
    vertex_neighbors: list
    edges: np.ndarray
    vertex_faces: list


def check_displacement(mesh, d):
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (mesh.n_vertices, 3):
        raise ValueError(
            f"displacement shape {d.shape} does not match mesh with {mesh.n_vertices} vertices"
        )
    if not np.all(np.isfinite(d)):
        raise ValueError("displacement contains non-finite entries")
    return d


def apply_displacement(mesh, d):
    """Return the mesh with vertices ``V + D``; topology and labels are shared."""
    d = check_displacement(mesh, d)
    return mesh.with_vertices(mesh.vertices + d)


def build_adjacency(mesh):
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e = np.sort(e, axis=1)
    e = e[e[:, 0] != e[:, 1]]
    edges = np.unique(e, axis=0)
    n = mesh.n_vertices
    nbrs = [[] for _ in range(n)]
    for i, j in edges.tolist():
        nbrs[i].append(j)
        nbrs[j].append(i)
    vfaces = [[] for _ in range(n)]
    for fi, tri in enumerate(f.tolist()):
        for v in tri:
            vfaces[v].append(fi)
    return AdjacencyInfo(
        vertex_neighbors=[sorted(x) for x in nbrs],
        edges=edges.reshape(-1, 2),
        vertex_faces=vfaces,
    )


def face_areas(vertices, faces):
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def validate(mesh):
    """List invariant violations as human-readable strings; empty means valid."""
    out = []
    v, f = mesh.vertices, mesh.faces
    if len(v) < 3:
        out.append(f"too few vertices: {len(v)} < 3")
    if len(f) < 1:
        out.append("mesh has no faces")
    if not np.all(np.isfinite(v)):
        out.append("non-finite vertex coordinates")
    bad = np.flatnonzero(np.any((f < 0) | (f >= len(v)), axis=1))
    for fi in bad.tolist():
        out.append(f"face {fi}: vertex index out of range {f[fi].tolist()}")
    for fi in np.flatnonzero(
        (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
    ).tolist():
        out.append(f"face {fi}: degenerate index triple {f[fi].tolist()}")
    if len(mesh.face_labels) != len(f):
        out.append(f"face_labels length {len(mesh.face_labels)} != {len(f)} faces")
    for lab in sorted(set(mesh.face_labels.tolist()) - set(mesh.label_table)):
        out.append(f"label {lab} missing from label table")
    if out or len(f) == 0:
        return out
    diag2 = mesh.bbox_diagonal() ** 2
    areas = face_areas(v, f)
    for fi in np.flatnonzero(areas < 1e-12 * diag2).tolist():
        out.append(f"face {fi}: zero-area face")
    return out


def _parse_index(tok, n_vertices, lineno):
    s = tok.split("/")[0]
    try:
        i = int(s)
    except ValueError:
        raise ObjParseError(f"bad face index {tok!r}", lineno) from None
    if i == 0:
        raise ObjParseError("face index 0 is invalid (OBJ indices are 1-based)", lineno)
    idx = i - 1 if i > 0 else n_vertices + i
    if not 0 <= idx < n_vertices:
        raise ObjParseError(f"face index {i} out of range", lineno)
    return idx


def parse_mtl(text):
    """Map material name to an 8-bit RGB triple taken from ``Kd``."""
    colors = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "newmtl":
            if len(parts) < 2:
                raise ObjParseError("newmtl without a name", lineno)
            current = " ".join(parts[1:])
            colors.setdefault(current, None)
        elif parts[0] == "Kd":
            if current is None:
                raise ObjParseError("Kd before newmtl", lineno)
            try:
                rgb = [float(x) for x in parts[1:4]]
            except ValueError:
                raise ObjParseError(f"bad Kd values {parts[1:]}", lineno) from None
            if len(rgb) != 3:
                raise ObjParseError("Kd needs three components", lineno)
            colors[current] = tuple(int(round(min(max(c, 0.0), 1.0) * 255)) for c in rgb)
    return colors


def load_obj(text, mtl_text=None):
    """Parse OBJ text (plus optional MTL text) into a :class:`Mesh`.

    Each ``usemtl`` material becomes one semantic label, numbered from 1 in
    order of first use. Faces before any ``usemtl`` get label 0. Polygons are
    fan-triangulated.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if isinstance(mtl_text, bytes):
        mtl_text = mtl_text.decode("utf-8")
    verts, faces, labels = [], [], []
    names = {}
    current = DEFAULT_LABEL
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        key = parts[0]
        if key == "v":
            try:
                xyz = [float(x) for x in parts[1:4]]
            except ValueError:
                raise ObjParseError(f"bad vertex {parts[1:]}", lineno) from None
            if len(xyz) != 3:
                raise ObjParseError("vertex needs three coordinates", lineno)
            verts.append(xyz)
        elif key == "f":
            idx = [_parse_index(t, len(verts), lineno) for t in parts[1:]]
            if len(idx) < 3:
                raise ObjParseError("face with fewer than 3 vertices", lineno)
            if len(set(idx)) != len(idx):
                raise ObjParseError(f"face repeats a vertex {idx}", lineno)
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
                labels.append(current)
        elif key == "usemtl":
            if len(parts) < 2:
                raise ObjParseError("usemtl without a name", lineno)
            name = " ".join(parts[1:])
            current = names.setdefault(name, len(names) + 1)
        # mtllib, vt, vn, o, g, s are ignored
    if len(verts) < 3 or not faces:
        raise ObjParseError("OBJ needs at least 3 vertices and 1 face")

    colors = parse_mtl(mtl_text) if mtl_text is not None else None
    table = {}
    for name, lab in names.items():
        if colors is None:
            rgb = _PALETTE[(lab - 1) % len(_PALETTE)]
        else:
            rgb = colors.get(name)
            if rgb is None:
                raise ObjParseError(f"material {name!r} has no Kd color in the MTL")
        table[lab] = (name, rgb)
    return Mesh(np.array(verts), np.array(faces), np.array(labels), table)


def _fmt(x):
    return format(float(x), ".17g")


def save_obj(mesh, d=None, mtllib=None):
    """Serialize ``mesh`` with vertices ``V + D`` as OBJ text."""
    v = mesh.vertices if d is None else mesh.vertices + check_displacement(mesh, d)
    lines = []
    if mtllib:
        lines.append(f"mtllib {mtllib}")
    lines.extend(f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in v)
    current = None
    for lab, (a, b, c) in zip(mesh.face_labels.tolist(), mesh.faces.tolist()):
        if lab != current:
            if lab != DEFAULT_LABEL or current is not None:
                lines.append(f"usemtl {mesh.label_table[lab][0]}")
            current = lab
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    return "\n".join(lines) + "\n"


def save_mtl(mesh):
    lines = []
    for lab in sorted(mesh.label_table):
        name, rgb = mesh.label_table[lab]
        kd = " ".join(format(c / 255.0, ".6f") for c in rgb)
        lines += [f"newmtl {name}", f"Kd {kd}", ""]
    return "\n".join(lines)


def icosphere(subdivisions=3, radius=1.0):
    """Geodesic sphere; 3 subdivisions give 642 vertices and 1280 faces."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return Mesh(np.array(verts) * radius, np.array(faces))


def uv_sphere(n_rings, n_segments, radius=1.0):
    """Latitude/longitude sphere with ``n_segments * (n_rings - 1) + 2`` vertices."""
    verts = [(0.0, radius, 0.0)]
    for r in range(1, n_rings):
        phi = np.pi * r / n_rings
        for s in range(n_segments):
            th = 2 * np.pi * s / n_segments
            verts.append((radius * np.sin(phi) * np.cos(th), radius * np.cos(phi),
                          radius * np.sin(phi) * np.sin(th)))
    verts.append((0.0, -radius, 0.0))
    south = len(verts) - 1

    def ring(r, s):
        return 1 + (r - 1) * n_segments + s % n_segments

    faces = []
    for s in range(n_segments):
        faces.append((0, ring(1, s + 1), ring(1, s)))
        faces.append((south, ring(n_rings - 1, s), ring(n_rings - 1, s + 1)))
    for r in range(1, n_rings - 1):
        for s in range(n_segments):
            a, b = ring(r, s), ring(r, s + 1)
            c, d = ring(r + 1, s), ring(r + 1, s + 1)
            faces += [(a, b, d), (a, d, c)]
    return Mesh(np.array(verts), np.array(faces))
