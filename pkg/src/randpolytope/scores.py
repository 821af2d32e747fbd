"""Per-point scores of a Euclidean sample: face counts, vertex-local defect volume,
and the split of a total into vertex-box contributions.

Vertex-local work is done in the chart of the vertex, where the incident
facets are coordinate hyperplanes and the vertex box ``p_d(V_i, delta)`` is
the cube ``[0, delta]^d``.  Charts preserve volume, so areas and volumes can
be measured there directly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import ChartMissing
from .sampling import as_seed

MC_PROPOSALS = 100_000


@dataclass
class ScoreTable:
    points: np.ndarray = field(repr=False)
    is_vertex: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)  # (n, d): xi_0 .. xi_{d-1}
    xi_v: np.ndarray = field(repr=False)
    box_id: np.ndarray = field(repr=False)  # owning vertex box or -1
    xi_v_se: float = 0.0

    @property
    def totals(self):
        return self.xi.sum(axis=0)

    def box_totals(self, column, n_boxes):
        vals = self.xi_v if column == "V" else self.xi[:, column]
        inside = self.box_id >= 0
        return np.bincount(self.box_id[inside], weights=vals[inside], minlength=n_boxes)

    def to_csv(self, path):
        n, d = self.points.shape
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["point_id"] + [f"x{i}" for i in range(d)] + ["is_hull_vertex"]
                        + [f"xi_{k}" for k in range(d)] + ["xi_V", "vertex_box_id"])
            for i in range(n):
                box = "" if self.box_id[i] < 0 else int(self.box_id[i])
                wr.writerow([i] + [format(x, ".17g") for x in self.points[i]]
                            + [int(self.is_vertex[i])]
                            + [format(x, ".17g") for x in self.xi[i]]
                            + [format(self.xi_v[i], ".17g"), box])


# ---------------------------------------------------------------------------
# Face scores
# ---------------------------------------------------------------------------
def xi_k_scores(n_points: int, hull: geometry.HullComplex):
    """``(k+1)^{-1}`` times the number of k-faces through each point, for every k."""
    out = np.zeros((n_points, hull.d))
    for k in range(hull.d):
        faces = np.asarray(hull.faces_by_dim[k], dtype=int).reshape(-1)
        out[:, k] = np.bincount(faces, minlength=n_points) / (k + 1)
    return out


def defect_volume(points, K: geometry.SimplePolytope, hull=None) -> float:
    pts = np.asarray(points, dtype=float)
    hull = geometry.convex_hull(pts, K.d) if hull is None else hull
    return K.volume - geometry.hull_volume(hull, pts)


# ---------------------------------------------------------------------------
# Charts
# ---------------------------------------------------------------------------
def _chart(K, i):
    if not 0 <= i < len(getattr(K, "charts", [])):
        raise ChartMissing(f"no chart for vertex {i}")
    return K.charts[i]


def hull_in_chart(hull, K, i):
    """Facet inequalities ``n.y <= b`` of the hull in the chart of vertex ``i``."""
    A = _chart(K, i)
    N = hull.normals @ np.linalg.inv(A)  # rows are A^{-T} n
    B = hull.offsets - hull.normals @ K.vertices[i]
    s = np.linalg.norm(N, axis=1)
    return N / s[:, None], B / s


def box_members(points, K, i, delta):
    y = K.to_chart(i, points)
    return np.all((y >= 0) & (y <= delta), axis=1), y


def owning_boxes(points, K, delta):
    """Index of the vertex box holding each point, or -1."""
    owner = np.full(len(points), -1, dtype=int)
    for i in range(K.f0):
        inside, _ = box_members(points, K, i, delta)
        owner[inside & (owner < 0)] = i
    return owner


def _plus_facets(hull, Ny, inside):
    """Facets with every generator in the box and chart normal in the closed negative orthant."""
    rows = []
    for r, fct in enumerate(hull.facets):
        if np.all(inside[list(fct)]) and np.all(Ny[r] <= 0):
            rows.append(r)
    return rows


# ---------------------------------------------------------------------------
# Volume scores
# ---------------------------------------------------------------------------
def _wedge_box_2d(ya, yb, delta):
    box = np.array([[0, 0], [delta, 0], [delta, delta], [0, delta]], dtype=float)
    if ya[0] * yb[1] - ya[1] * yb[0] < 0:
        ya, yb = yb, ya
    poly = geometry.clip_polygon(box, [ya[1], -ya[0]], 0.0)
    return geometry.clip_polygon(poly, [-yb[1], yb[0]], 0.0)


def _cone_defect_2d(ya, yb, delta, Ny, By):
    wedge = _wedge_box_2d(ya, yb, delta)
    inner = wedge
    for n, b in zip(Ny, By):
        inner = geometry.clip_polygon(inner, n, b)
        if len(inner) == 0:
            break
    return geometry.polygon_area(wedge) - geometry.polygon_area(inner)


def _cone_defect_3d(Y, delta, Ny, By, rng, proposals):
    """Exact tetrahedron ``co(0, Y)`` plus a Monte Carlo estimate of the part beyond it."""
    tetra = abs(np.linalg.det(Y)) / 6.0
    n = np.cross(Y[1] - Y[0], Y[2] - Y[0])
    c = n @ Y[0]
    if c < 0:
        n, c = -n, -c
    R = max(1.0, delta * np.clip(n, 0, None).sum() / c)
    # uniform points of the scaled tetrahedron co(0, R Y)
    u = np.sort(rng.random((proposals, 3)), axis=1)
    w = np.diff(u, axis=1, prepend=0.0)
    P = R * (w @ Y)
    beyond = P @ n > c
    in_box = np.all(P <= delta, axis=1)
    outside = np.any(P @ Ny.T > By + 1e-15, axis=1)
    hit = beyond & in_box & outside
    vol = R**3 * tetra
    p = hit.mean()
    return tetra + vol * p, vol * math.sqrt(p * (1 - p) / proposals)


def xi_v_scores_vertex(points, K, i, delta0, lam, hull=None, seed=0,
                       proposals=MC_PROPOSALS):
    """``d^{-1} lam Vol(cone(x) cap (K minus K_lam))`` for points in the box of vertex ``i``.

    The cone is clipped at the box.  Returns ``(scores, se)`` with ``se`` the
    Monte Carlo standard error of the box total (zero in d=2).
    """
    pts = np.asarray(points, dtype=float)
    d = pts.shape[1]
    hull = geometry.convex_hull(pts, d) if hull is None else hull
    inside, y = box_members(pts, K, i, delta0)
    Ny, By = hull_in_chart(hull, K, i)
    out = np.zeros(len(pts))
    var = 0.0
    rng = as_seed(seed).child(i).generator()
    for r in _plus_facets(hull, Ny, inside):
        fct = list(hull.facets[r])
        if d == 2:
            area = _cone_defect_2d(y[fct[0]], y[fct[1]], delta0, Ny, By)
        elif d == 3:
            area, se = _cone_defect_3d(y[fct], delta0, Ny, By, rng, proposals)
            var += (lam / d * se) ** 2 * d
        else:
            raise ChartMissing("volume scores implemented for d <= 3")
        out[fct] += lam * area / d
    return out, math.sqrt(var)


def vertex_box_defect(points, K, i, delta0, hull):
    """``Vol(Q0 cap (K minus K_lam))`` for the box of vertex ``i``, d=2 exact."""
    if K.d != 2:
        raise ChartMissing("exact box defect implemented for d=2")
    Ny, By = hull_in_chart(hull, K, i)
    box = np.array([[0, 0], [delta0, 0], [delta0, delta0], [0, delta0]], dtype=float)
    inner = box
    for n, b in zip(Ny, By):
        inner = geometry.clip_polygon(inner, n, b)
    return delta0**2 - geometry.polygon_area(inner)


def cone_extreme_in_box(points, K, i, delta, hull):
    """Every hull vertex in the box has a supporting hyperplane with negative chart normal."""
    inside, _ = box_members(points, K, i, delta)
    Ny, _ = hull_in_chart(hull, K, i)
    vf = hull.vertex_facets
    for v in np.flatnonzero(inside):
        if v in vf and not geometry._cone_meets_negative_orthant(Ny[vf[v]]):
            return False
    return True


# ---------------------------------------------------------------------------
# Tables and decompositions
# ---------------------------------------------------------------------------
def score_table(points, K, lam, delta0, hull=None, seed=0) -> ScoreTable:
    pts = np.asarray(points, dtype=float)
    hull = geometry.convex_hull(pts, K.d) if hull is None else hull
    xi = xi_k_scores(len(pts), hull)
    is_vertex = xi[:, 0] > 0
    owner = owning_boxes(pts, K, delta0)
    xi_v = np.zeros(len(pts))
    var = 0.0
    for i in range(K.f0):
        s, se = xi_v_scores_vertex(pts, K, i, delta0, lam, hull, seed)
        xi_v += s
        var += se**2
    return ScoreTable(pts, is_vertex, xi, xi_v, owner, math.sqrt(var))


def z_decomposition(points, K, delta, kind="xi0", lam=None, hull=None, seed=0):
    """Total ``Z`` and vertex-box sums ``Z_i(delta)``; ``Z0 = Z - sum Z_i``.

    ``kind`` is ``"xi<k>"`` for face scores or ``"xiV"``, whose total is
    ``lam`` times the defect volume.
    """
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    pts = np.asarray(points, dtype=float)
    hull = geometry.convex_hull(pts, K.d) if hull is None else hull
    owner = owning_boxes(pts, K, delta)
    if kind == "xiV":
        if lam is None:
            raise ValueError("volume score needs lam")
        Z = lam * defect_volume(pts, K, hull)
        Zi = np.array([xi_v_scores_vertex(pts, K, i, delta, lam, hull, seed)[0].sum()
                       for i in range(K.f0)])
        return float(Z), Zi
    k = int(kind[2:])
    s = xi_k_scores(len(pts), hull)[:, k]
    inside = owner >= 0
    Zi = np.bincount(owner[inside], weights=s[inside], minlength=K.f0)
    return float(s.sum()), Zi
