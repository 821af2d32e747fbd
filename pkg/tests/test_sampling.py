import math

import numpy as np
import pytest
from scipy import stats

from randpolytope import geometry as g, rescale, sampling as s


def test_determinism():
    K = g.SimplePolytope.cube(2)
    a = s.sample_homogeneous(K, 500, s.RunSeed(5).child(1, 2)).points
    b = s.sample_homogeneous(K, 500, s.RunSeed(5).child(1, 2)).points
    c = s.sample_homogeneous(K, 500, s.RunSeed(5).child(1, 3)).points
    assert a.tobytes() == b.tobytes()
    assert len(c) != len(a) or not np.array_equal(a, c)


def test_poisson_mean_count():
    K = g.SimplePolytope.cube(2)
    n = np.array([len(s.sample_homogeneous(K, 1000, s.RunSeed(1).child(r))) for r in range(10_000)])
    assert abs(n.mean() - 1000) < 3 * math.sqrt(1000 / len(n))
    assert n.var(ddof=1) == pytest.approx(1000, rel=0.05)


def test_cube3_coordinates_uniform():
    K = g.SimplePolytope.cube(3)
    pts = s.sample_homogeneous(K, 20_000, 3).points
    for j in range(3):
        counts, _ = np.histogram(pts[:, j], bins=20, range=(0, 1))
        assert stats.chisquare(counts).pvalue > 0.01


def test_triangle_points_inside_and_uniform():
    K = g.SimplePolytope.simplex(2)
    pts = s.sample_homogeneous(K, 5000, 4).points
    assert K.contains(pts, tol=1e-12).all()
    # x-marginal density on the triangle with legs 2 is (2 - x) / 2
    cdf = lambda x: x - x**2 / 4
    assert stats.kstest(pts[:, 0], cdf).pvalue > 0.01


def test_rejection_path_for_general_polytope():
    K = g.SimplePolytope.from_vertices([[0, 0], [2, 0], [3, 1], [1, 2]])
    out = s.sample_homogeneous(K, 2000, 6)
    assert K.contains(out.points, tol=1e-12).all()
    assert 0 < out.acceptance_rate <= 1


def test_limit_mass_closed_form():
    assert s.limit_mass(2.0, -20.0, 0.0, 2) == pytest.approx(math.sqrt(2) * (1 - math.exp(-40)))
    w = s.LimitWindow.centered(1.0, -20.0, 0.0)
    counts = [len(s.sample_limit_process(w, 2, s.RunSeed(9).child(r))[1]) for r in range(4000)]
    assert abs(np.mean(counts) - math.sqrt(2)) < 3 * math.sqrt(math.sqrt(2) / 4000)


def test_empty_height_window():
    w = s.LimitWindow.centered(3.0, 0.5, 0.5)
    v, h = s.sample_limit_process(w, 2, 0)
    assert len(h) == 0 and v.shape == (0, 1)


def test_height_density():
    w = s.LimitWindow.centered(10_000.0, -3.0, 1.0)
    _, h = s.sample_limit_process(w, 2, 11)
    assert len(h) > 100_000
    a, b = math.exp(-6.0), math.exp(2.0)
    cdf = lambda x: (np.exp(2 * x) - a) / (b - a)
    assert stats.kstest(h[:100_000], cdf).pvalue > 0.01


def test_thinning_consistency():
    big = s.LimitWindow.centered(4.0, -2.0, 1.0)
    small = s.LimitWindow((0.0,), (2.0,), -1.0, 0.5)
    a, b = [], []
    for r in range(3000):
        v, h = s.sample_limit_process(big, 2, s.RunSeed(2).child(r))
        a.append(np.sum((v[:, 0] >= 0) & (v[:, 0] <= 2) & (h >= -1) & (h <= 0.5)))
        b.append(len(s.sample_limit_process(small, 2, s.RunSeed(3).child(r))[1]))
    mu = s.limit_mass(2.0, -1.0, 0.5, 2)
    se = math.sqrt(mu / 3000)
    assert abs(np.mean(a) - mu) < 3 * se and abs(np.mean(b) - mu) < 3 * se
    assert abs(np.var(a) - np.var(b)) < 3 * mu * math.sqrt(2 / 3000) * 1.5


def test_restrict_to_window():
    v = np.array([[0.0], [0.0]])
    lam = 1e4
    roof = rescale.window_roof(lam, 2)
    keep_v, keep_h = s.restrict_to_Wlambda(v, np.array([roof, roof + 50]), lam)
    assert keep_h.tolist() == [roof]
    out = s.restrict_to_Wlambda(v, np.array([1e6, -1e6]), math.inf)
    assert len(out[1]) == 2


def test_restrict_boundary_case_direct_inequality():
    lam = math.exp(4.0)
    d0 = rescale.delta0(lam, 2)
    t = 0.3
    h_edge = -abs(t) / math.sqrt(2) + 2.0 + math.log(d0)
    v = np.array([[t], [t]])
    h = np.array([h_edge - 1e-12, h_edge + 1e-9])
    _, kept = s.restrict_to_Wlambda(v, h, lam)
    assert len(kept) == 1


def test_csv_round_trip(tmp_path):
    pts = np.random.default_rng(0).random((7, 3))
    s.write_points_csv(tmp_path / "p.csv", points=pts)
    assert np.array_equal(s.read_points_csv(tmp_path / "p.csv")["points"], pts)
    v, h = np.random.default_rng(1).random((5, 1)), np.random.default_rng(2).random(5)
    s.write_points_csv(tmp_path / "w.csv", v=v, h=h)
    back = s.read_points_csv(tmp_path / "w.csv")
    assert np.array_equal(back["v"], v) and np.array_equal(back["h"], h)
