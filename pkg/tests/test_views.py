import numpy as np

from deform3d.mesh import Mesh, icosphere
from deform3d.views import build_local_views, gather, remap_matrix, scatter_add


def cube_per_face_labels():
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces, labels = [], []
    for lab, (a, b, c, d) in enumerate(quads, 1):
        faces += [(a, b, c), (a, c, d)]
        labels += [lab, lab]
    table = {k: (f"side{k}", (k * 40, 0, 0)) for k in range(1, 7)}
    return Mesh(v, faces, labels, table)


def random_labeled(rng, n_labels=3):
    m = icosphere(1)
    return Mesh(m.vertices, m.faces, rng.integers(1, n_labels + 1, m.n_faces),
                {k: (str(k), (k, k, k)) for k in range(1, n_labels + 1)})


def test_single_label_is_identity():
    m = icosphere(1)
    (view,) = build_local_views(m)
    assert np.array_equal(view.global_vertex_ids, np.arange(m.n_vertices))
    assert np.array_equal(view.local_faces, m.faces)
    x = np.random.default_rng(0).normal(size=(m.n_vertices, 3))
    assert np.array_equal(gather(x, view), x)


def test_shared_edge_vertices_in_both_views():
    m = Mesh(np.eye(4)[:, :3], [[0, 1, 2], [1, 3, 2]], [1, 2], {1: ("a", (1, 1, 1)),
                                                                2: ("b", (2, 2, 2))})
    a, b = build_local_views(m)
    assert {1, 2} <= set(a.global_vertex_ids.tolist()) & set(b.global_vertex_ids.tolist())


def test_cube_incidence_count():
    views = build_local_views(cube_per_face_labels())
    assert len(views) == 6
    counts = np.zeros(8, int)
    for v in views:
        counts[v.global_vertex_ids] += 1
    assert np.all(counts == 3)


def test_local_faces_reference_the_same_triangles(rng):
    m = random_labeled(rng)
    for v in build_local_views(m):
        assert np.array_equal(v.global_vertex_ids[v.local_faces], m.faces[v.face_ids])
        assert np.all(m.face_labels[v.face_ids] == v.label)


def test_gather_equals_direct_indexing(rng):
    m = random_labeled(rng)
    x = rng.normal(size=(m.n_vertices, 3))
    for v in build_local_views(m):
        want = np.array([x[g] for g in v.global_vertex_ids])
        assert np.array_equal(gather(x, v), want)


def test_scatter_zero_and_additivity():
    m = Mesh(np.eye(4)[:, :3], [[0, 1, 2], [1, 3, 2]], [1, 2], {1: ("a", (1, 1, 1)),
                                                                2: ("b", (2, 2, 2))})
    acc = np.zeros((4, 3))
    views = build_local_views(m)
    for v in views:
        scatter_add(np.zeros((v.n_vertices, 3)), v, acc)
    assert not acc.any()
    for v in views:
        scatter_add(np.tile([1.0, 0, 0], (v.n_vertices, 1)), v, acc)
    assert acc[1].tolist() == [2.0, 0, 0] and acc[0].tolist() == [1.0, 0, 0]


def test_one_hot_round_trip(rng):
    m = random_labeled(rng)
    for v in build_local_views(m):
        k = int(rng.integers(v.n_vertices))
        local = np.zeros((v.n_vertices, 3))
        local[k] = [1.5, -2.0, 3.0]
        acc = scatter_add(local, v, np.zeros((m.n_vertices, 3)))
        assert gather(acc, v)[k].tolist() == [1.5, -2.0, 3.0]


def test_scatter_equals_dense_transpose(rng):
    for _ in range(50):
        m = random_labeled(rng, int(rng.integers(1, 5)))
        acc = np.zeros((m.n_vertices, 3))
        dense = np.zeros((m.n_vertices, 3))
        for v in build_local_views(m):
            y = rng.normal(size=(v.n_vertices, 3))
            scatter_add(y, v, acc)
            dense += remap_matrix(v, m.n_vertices).T @ y
        assert np.allclose(acc, dense, rtol=0, atol=1e-12)


def test_adjoint_identity(rng):
    for _ in range(50):
        m = random_labeled(rng, int(rng.integers(1, 5)))
        for v in build_local_views(m):
            x = rng.normal(size=(m.n_vertices, 3))
            y = rng.normal(size=(v.n_vertices, 3))
            lhs = (gather(x, v) * y).sum()
            rhs = (x * scatter_add(y, v, np.zeros_like(x))).sum()
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_per_view_sum_equals_global_gradient(rng):
    # sum over views of |gather(D)|^2 has gradient 2 * multiplicity * D
    m = random_labeled(rng)
    d = rng.normal(size=(m.n_vertices, 3))
    acc = np.zeros_like(d)
    mult = np.zeros(m.n_vertices)
    for v in build_local_views(m):
        scatter_add(2 * gather(d, v), v, acc)
        mult[v.global_vertex_ids] += 1
    assert np.array_equal(acc, 2 * mult[:, None] * d)
