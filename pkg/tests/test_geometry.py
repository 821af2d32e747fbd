import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import ConvexHull

from randpolytope import geometry as g
from randpolytope.errors import DimensionUnsupported


def edges_by_orientation(pts):
    """O(n^3) oracle: (i, j) is an edge iff every other point is strictly on one side."""
    n = len(pts)
    out = set()
    for i, j in itertools.combinations(range(n), 2):
        e = pts[j] - pts[i]
        s = e[0] * (pts[:, 1] - pts[i, 1]) - e[1] * (pts[:, 0] - pts[i, 0])
        s = np.delete(s, [i, j])
        if np.all(s > 0) or np.all(s < 0):
            out.add((i, j))
    return out


def facets_by_subsets(pts):
    """Supporting hyperplanes through every d-subset."""
    n, d = pts.shape
    out = set()
    for S in itertools.combinations(range(n), d):
        P = pts[list(S)]
        A = P[1:] - P[0]
        nrm = np.linalg.svd(A)[2][-1]
        s = (pts - P[0]) @ nrm
        s = np.delete(s, S)
        if np.all(s < 0) or np.all(s > 0):
            out.add(tuple(S))
    return out


def shoelace(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def test_square_corners():
    h = g.convex_hull(np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]]), 2)
    assert g.face_counts(h).f == (4, 4)
    assert g.hull_volume(h, np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])) == pytest.approx(1.0)


def test_tetrahedron():
    pts = np.vstack([np.zeros(3), np.eye(3)])
    h = g.convex_hull(pts, 3)
    assert g.face_counts(h).f == (4, 6, 4)
    assert g.hull_volume(h, pts) == pytest.approx(1 / 6, abs=1e-15)


def test_dimension_cap():
    with pytest.raises(DimensionUnsupported):
        g.convex_hull(np.random.default_rng(0).random((10, 7)), 7)


def test_planar_hull_matches_orientation_oracle(rng):
    for _ in range(20):
        pts = rng.random((20, 2))
        h = g.convex_hull(pts, 2)
        fc = g.face_counts(h)
        assert fc.f[0] == fc.f[1]
        got = {tuple(sorted(e)) for e in h.faces_by_dim[1]}
        assert got == edges_by_orientation(pts)


@pytest.mark.parametrize("d,n", [(3, 12), (3, 15), (4, 12)])
def test_facets_match_subset_oracle(rng, d, n):
    for _ in range(5):
        pts = rng.random((n, d))
        h = g.convex_hull(pts, d)
        got = {tuple(sorted(f)) for f in h.facets}
        assert got == facets_by_subsets(pts)


def test_volume_against_shoelace_and_qhull(rng):
    pts = rng.random((50, 2))
    h = g.convex_hull(pts, 2)
    ref = ConvexHull(pts)
    assert g.hull_volume(h, pts) == pytest.approx(shoelace(pts[ref.vertices]), abs=1e-12)
    p3 = rng.random((40, 3))
    assert g.hull_volume(g.convex_hull(p3, 3), p3) == pytest.approx(ConvexHull(p3).volume, rel=1e-12)


def test_euler_relation_on_seeded_hulls():
    for s in range(100):
        r = np.random.default_rng(s)
        d = 2 + s % 3
        n = {2: 30, 3: 30, 4: 12}[d]
        fc = g.face_counts(g.convex_hull(r.random((n, d)), d))
        assert fc.euler_ok(), (s, fc.f)


def test_hull_idempotence(rng):
    for d in (2, 3):
        pts = rng.random((60, d))
        h = g.convex_hull(pts, d)
        vs = sorted(set(h.vertex_indices))
        h2 = g.convex_hull(pts[vs], d)
        assert g.face_counts(h2).f == g.face_counts(h).f


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.sampled_from([2, 3]))
def test_affine_invariance(seed, d):
    r = np.random.default_rng(seed)
    pts = r.random((25, d))
    A = r.normal(size=(d, d))
    if abs(np.linalg.det(A)) < 0.1:
        A += 2 * np.eye(d)
    moved = pts @ A.T + r.normal(size=d)
    assert g.face_counts(g.convex_hull(moved, d)).f == g.face_counts(g.convex_hull(pts, d)).f


def test_prune_keeps_hull(rng):
    pts = rng.random((5000, 2))
    full = g.convex_hull(pts, 2)
    fast = g.hull_2d(pts)
    assert sorted(fast.vertex_indices) == sorted(full.vertex_indices)


def test_cone_extreme_small_example():
    pts = np.array([[1, 3], [3, 1], [2, 2.5]])
    _, flags = g.cone_extreme_faces(g.convex_hull(pts, 2))
    assert flags.tolist() == [True, True, False]


def test_cone_extreme_hyperboloid_points(rng):
    for d in (2, 3):
        u = rng.normal(size=(15, d))
        u -= u.mean(axis=1, keepdims=True)
        on = np.exp(u)  # prod = 1
        pts = np.vstack([on, np.full(d, 5.0)])
        _, flags = g.cone_extreme_faces(g.convex_hull(pts, d))
        assert flags[:-1].all() and not flags[-1]


def test_single_point_cone_extreme():
    assert g.cone_extreme_points([[0.3, 0.7]]).tolist() == [True]


def test_polytope_charts_preserve_volume():
    for K in (g.SimplePolytope.cube(2), g.SimplePolytope.simplex(2), g.SimplePolytope.cube(3)):
        for i, A in enumerate(K.charts):
            assert abs(abs(np.linalg.det(A)) - 1) < 1e-12
            y = K.to_chart(i, K.vertices)
            assert np.all(y >= -1e-12)
            assert np.allclose(y[i], 0)


def test_cap_volume_square():
    K = g.SimplePolytope.cube(2)
    assert g.cap_volume(K, [1, 1], 1.0) == pytest.approx(0.5)
    assert g.cap_volume(K, [1, 0], 0.25) == pytest.approx(0.25)


def test_flat_input_raises():
    from randpolytope.errors import DegenerateInput
    t = np.linspace(0, 1, 10)
    with pytest.raises(DegenerateInput):
        g.convex_hull(np.column_stack([t, 2 * t]), 2)
    r = np.random.default_rng(1).random((20, 2))
    with pytest.raises(DegenerateInput):
        g.convex_hull(np.column_stack([r, r.sum(axis=1)]), 3)
