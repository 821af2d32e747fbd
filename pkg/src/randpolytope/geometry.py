"""Convex hulls in small dimension, face lattices, volumes and cone-extremality.

Faces are stored as sorted tuples of input-point indices, so face sets can be
compared exactly.  Inputs are assumed to be in general position (Poisson
samples); near-degenerate inputs are perturbed once, deterministically, before
:class:`DegenerateInput` is raised.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize

from .errors import DegenerateInput, DimensionUnsupported

REL_TOL = 1e-12
PERTURBATION = 1e-9
MAX_DIM = 6


# ---------------------------------------------------------------------------
# Bodies
# ---------------------------------------------------------------------------
class SimplePolytope:
    """A simple polytope given by vertices and facet inequalities ``n.x <= b``.

    ``charts[i]`` is a matrix ``A`` with ``|det A| = 1`` such that
    ``a_i(x) = A (x - V_i)`` sends the facets through vertex ``V_i`` onto the
    coordinate hyperplanes and the polytope into the positive orthant near 0.
    """

    def __init__(self, vertices, normals, offsets, name="polytope", kind="general"):
        self.vertices = np.asarray(vertices, dtype=float)
        self.d = self.vertices.shape[1]
        nrm = np.asarray(normals, dtype=float)
        scale = np.linalg.norm(nrm, axis=1)
        self.normals = nrm / scale[:, None]
        self.offsets = np.asarray(offsets, dtype=float) / scale
        self.name = name
        self.kind = kind
        slack = self.vertices @ self.normals.T - self.offsets
        tol = 1e-9 * (1 + np.abs(self.vertices).max())
        self.incidence = np.abs(slack) <= tol
        if np.any(slack > tol):
            raise ValueError("vertex violates a facet inequality")
        counts = self.incidence.sum(axis=1)
        if np.any(counts != self.d):
            raise ValueError("polytope is not simple")
        self.charts = [self._chart(i) for i in range(len(self.vertices))]

    # construction helpers -------------------------------------------------
    @classmethod
    def cube(cls, d=2, side=1.0):
        verts = np.array(list(itertools.product([0.0, side], repeat=d)))
        normals = np.vstack([-np.eye(d), np.eye(d)])
        offsets = np.concatenate([np.zeros(d), np.full(d, side)])
        name = "square" if d == 2 else f"cube{d}"
        return cls(verts, normals, offsets, name=name, kind="box")

    @classmethod
    def simplex(cls, d=2, leg=2.0):
        """Corner simplex ``conv{0, leg e_1, ..., leg e_d}``."""
        verts = np.vstack([np.zeros(d), leg * np.eye(d)])
        normals = np.vstack([-np.eye(d), np.ones((1, d))])
        offsets = np.concatenate([np.zeros(d), [leg]])
        name = "triangle" if d == 2 else f"simplex{d}"
        return cls(verts, normals, offsets, name=name, kind="simplex")

    @classmethod
    def from_vertices(cls, vertices, name="polytope"):
        verts = np.asarray(vertices, dtype=float)
        hull = convex_hull(verts, verts.shape[1])
        normals, offsets = [], []
        for n, b in zip(hull.normals, hull.offsets):
            if not any(np.allclose(n, m, atol=1e-9) for m in normals):
                normals.append(n)
                offsets.append(b)
        return cls(verts[sorted(set(hull.vertex_indices))], normals, offsets, name=name)

    def _chart(self, i):
        inc = np.flatnonzero(self.incidence[i])
        N = self.normals[inc]
        dirs = []
        for j in range(self.d):
            sub = np.delete(N, j, axis=0)
            u = np.linalg.svd(sub)[2][-1] if len(sub) else np.ones(1)
            if N[j] @ u > 0:
                u = -u
            dirs.append(u / np.linalg.norm(u))
        M = np.column_stack(dirs)
        s = abs(np.linalg.det(M)) ** (1.0 / self.d)
        return s * np.linalg.inv(M)

    # queries ------------------------------------------------------------
    @cached_property
    def volume(self) -> float:
        return hull_volume(convex_hull(self.vertices, self.d), self.vertices)

    @property
    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def contains(self, x, tol=0.0):
        x = np.atleast_2d(x)
        return np.all(x @ self.normals.T <= self.offsets + tol, axis=1)

    def to_chart(self, i, x):
        return (np.asarray(x, dtype=float) - self.vertices[i]) @ self.charts[i].T

    def from_chart(self, i, y):
        return np.asarray(y, dtype=float) @ np.linalg.inv(self.charts[i]).T + self.vertices[i]

    @cached_property
    def edges(self):
        """Vertex pairs sharing ``d - 1`` facets."""
        out = []
        for a, b in itertools.combinations(range(len(self.vertices)), 2):
            if (self.incidence[a] & self.incidence[b]).sum() == self.d - 1:
                out.append((a, b))
        return out

    @property
    def f0(self) -> int:
        return len(self.vertices)

    def __repr__(self):
        return f"SimplePolytope({self.name!r}, d={self.d}, f0={self.f0})"


def body_from_name(name: str, d: int = 2) -> SimplePolytope:
    if name in ("square", "cube"):
        return SimplePolytope.cube(d)
    if name in ("triangle", "simplex"):
        return SimplePolytope.simplex(d)
    raise ValueError(f"unknown body {name!r}")


# ---------------------------------------------------------------------------
# Hull complex
# ---------------------------------------------------------------------------
@dataclass
class FaceCounts:
    f: tuple

    def euler_ok(self) -> bool:
        d = len(self.f)
        return sum((-1) ** k * fk for k, fk in enumerate(self.f)) == 1 + (-1) ** (d - 1)

    def __getitem__(self, k):
        return self.f[k]


@dataclass
class HullComplex:
    """Boundary complex of a simplicial hull.

    ``facets`` holds sorted index tuples; ``normals`` / ``offsets`` give the
    outward unit normal and offset of each facet (``n.x <= b`` inside).
    """

    n: int
    d: int
    facets: np.ndarray
    normals: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    order: np.ndarray = field(default=None, repr=False)  # d=2: ccw vertex cycle

    @cached_property
    def faces_by_dim(self):
        out = {self.d - 1: sorted(map(tuple, self.facets))}
        for k in range(self.d - 2, -1, -1):
            faces = set()
            for fct in self.facets:
                faces.update(itertools.combinations(fct, k + 1))
            out[k] = sorted(faces)
        return out

    @property
    def vertex_indices(self):
        return [f[0] for f in self.faces_by_dim[0]]

    @cached_property
    def vertex_facets(self):
        """vertex index -> list of facet rows containing it."""
        out = {}
        for r, fct in enumerate(self.facets):
            for i in fct:
                out.setdefault(int(i), []).append(r)
        return out


def _tol(points):
    span = float(np.ptp(points, axis=0).max()) if len(points) else 1.0
    return REL_TOL * max(span, 1e-300)


def _hull2d_order(pts, tol):
    """Angular sweep (Graham scan) about the lowest point; ccw vertex indices."""
    n = len(pts)
    start = int(np.lexsort((pts[:, 0], pts[:, 1]))[0])
    rel = pts - pts[start]
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    dist = np.hypot(rel[:, 0], rel[:, 1])
    idx = [i for i in np.lexsort((dist, ang)) if i != start]
    stack = [start]
    area_tol = tol * max(float(dist.max()), 1e-300)
    for i in idx:
        p = pts[i]
        while len(stack) >= 2:
            a, b = pts[stack[-2]], pts[stack[-1]]
            cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
            if cross > area_tol:
                break
            stack.pop()
        stack.append(i)
    if len(stack) < 3:
        raise DegenerateInput("points are collinear")
    # collinear degeneracy check along the closing edge
    return np.asarray(stack)


def _complex_from_order_2d(n, pts, order):
    m = len(order)
    facets, normals, offsets = [], [], []
    for j in range(m):
        a, b = order[j], order[(j + 1) % m]
        e = pts[b] - pts[a]
        nv = np.array([e[1], -e[0]])
        nv /= np.linalg.norm(nv)
        facets.append(tuple(sorted((int(a), int(b)))))
        normals.append(nv)
        offsets.append(nv @ pts[a])
    return HullComplex(n, 2, np.array(facets), np.array(normals), np.array(offsets),
                       order=np.asarray(order))


def _facet_plane(P, interior):
    """Unit normal and offset of the hyperplane through rows of ``P``, pointing away from ``interior``."""
    A = P[1:] - P[0]
    nv = np.linalg.svd(A)[2][-1]
    b = nv @ P[0]
    if nv @ interior > b:
        nv, b = -nv, -b
    return nv, b


def _hull3d_incremental(pts, tol, rng):
    n = len(pts)
    # initial tetrahedron from extreme, affinely independent points
    i0 = int(np.argmin(pts[:, 0]))
    i1 = int(np.argmax(np.linalg.norm(pts - pts[i0], axis=1)))
    line = pts[i1] - pts[i0]
    d2 = np.linalg.norm(np.cross(pts - pts[i0], line), axis=1)
    i2 = int(np.argmax(d2))
    nrm = np.cross(pts[i1] - pts[i0], pts[i2] - pts[i0])
    d3 = np.abs((pts - pts[i0]) @ nrm)
    i3 = int(np.argmax(d3))
    scale = max(float(np.ptp(pts, axis=0).max()), 1e-300)
    if d2[i2] <= tol * scale or d3[i3] <= tol * scale**2:
        raise DegenerateInput("affine hull has dimension < 3")
    simplex = [i0, i1, i2, i3]
    centre = pts[simplex].mean(axis=0)
    faces, normals, offsets = [], [], []

    def add(tri):
        nv = np.cross(pts[tri[1]] - pts[tri[0]], pts[tri[2]] - pts[tri[0]])
        nv /= np.linalg.norm(nv)
        b = nv @ pts[tri[0]]
        if nv @ centre > b:
            tri = (tri[0], tri[2], tri[1])
            nv, b = -nv, -b
        faces.append(tri)
        normals.append(nv)
        offsets.append(b)

    for tri in itertools.combinations(simplex, 3):
        add(tri)
    alive = [True] * 4
    rest = [i for i in rng.permutation(n) if i not in simplex]
    plane_tol = tol * scale
    for p in rest:
        N = np.asarray(normals)
        B = np.asarray(offsets)
        dist = N @ pts[p] - B
        vis = np.flatnonzero((dist > plane_tol) & np.asarray(alive))
        if len(vis) == 0:
            continue
        edges = set()
        for r in vis:
            a, b, c = faces[r]
            edges.update(((a, b), (b, c), (c, a)))
            alive[r] = False
        for (a, b) in edges:
            if (b, a) not in edges:
                nv = np.cross(pts[b] - pts[a], pts[p] - pts[a])
                nrm_ = np.linalg.norm(nv)
                if nrm_ <= tol * scale**2:
                    raise DegenerateInput("coplanar horizon face")
                nv /= nrm_
                faces.append((a, b, p))
                normals.append(nv)
                offsets.append(nv @ pts[a])
                alive.append(True)
    keep = [r for r in range(len(faces)) if alive[r]]
    facets = np.array([tuple(sorted(faces[r])) for r in keep])
    N = np.asarray(normals)[keep]
    B = np.asarray(offsets)[keep]
    # every point inside every facet plane
    if np.any(pts @ N.T - B > 1e3 * plane_tol):
        raise DegenerateInput("incremental hull failed verification")
    return HullComplex(n, 3, facets, N, B)


def _hull_bruteforce(pts, d, tol):
    n = len(pts)
    scale = max(float(np.ptp(pts, axis=0).max()), 1e-300)
    centre = pts.mean(axis=0)
    facets, normals, offsets = [], [], []
    for sub in itertools.combinations(range(n), d):
        P = pts[list(sub)]
        sv = np.linalg.svd(P[1:] - P[0], compute_uv=False)
        if sv[-1] <= tol * scale:
            continue
        nv, b = _facet_plane(P, centre)
        s = pts @ nv - b
        s[list(sub)] = 0.0
        if np.all(s <= tol * scale):
            if np.sum(np.abs(s) <= tol * scale) > d:
                raise DegenerateInput("more than d points on a supporting hyperplane")
            facets.append(sub)
            normals.append(nv)
            offsets.append(b)
    if not facets:
        raise DegenerateInput("affine hull has dimension < d")
    return HullComplex(n, d, np.array(facets), np.array(normals), np.array(offsets))


def _hull_once(pts, d, rng):
    tol = REL_TOL
    if d == 2:
        order = _hull2d_order(pts, _tol(pts))
        return _complex_from_order_2d(len(pts), pts, order)
    if d == 3:
        return _hull3d_incremental(pts, tol, rng)
    return _hull_bruteforce(pts, d, tol)


def convex_hull(points, d=None, seed=0) -> HullComplex:
    """Boundary face lattice of ``co(points)``.

    d=2 uses an angular sweep, d=3 incremental insertion, 4 <= d <= 6 an
    exhaustive scan of all d-subsets (meant for n <= 60).
    """
    pts = np.asarray(points, dtype=float)
    d = pts.shape[1] if d is None else d
    if d > MAX_DIM:
        raise DimensionUnsupported(f"d={d} > {MAX_DIM}")
    if d < 2:
        raise DimensionUnsupported("d must be >= 2")
    if len(pts) < d + 1:
        raise DegenerateInput("need at least d + 1 points")
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[-1] <= REL_TOL * max(sv[0], 1e-300):
        raise DegenerateInput("affine hull has dimension below d")
    rng = np.random.default_rng(seed)
    try:
        return _hull_once(pts, d, rng)
    except DegenerateInput:
        span = max(float(np.ptp(pts, axis=0).max()), 1.0)
        jitter = np.random.default_rng([seed, 0x5EED]).uniform(-1, 1, pts.shape)
        return _hull_once(pts + PERTURBATION * span * jitter, d, rng)


def face_counts(h: HullComplex) -> FaceCounts:
    return FaceCounts(tuple(len(h.faces_by_dim[k]) for k in range(h.d)))


def hull_volume(h: HullComplex, points) -> float:
    """Fan triangulation from the centroid of the hull vertices."""
    pts = np.asarray(points, dtype=float)
    c = pts[h.vertex_indices].mean(axis=0)
    simp = pts[h.facets] - c  # (F, d, d)
    return float(np.abs(np.linalg.det(simp)).sum() / math.factorial(h.d))


# ---------------------------------------------------------------------------
# Fast planar hull for large samples
# ---------------------------------------------------------------------------
_OCTAGON = np.array([[1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1], [1, -1]],
                    dtype=float)


def prune_interior_2d(points):
    """Akl-Toussaint filter: drop points strictly inside the extreme octagon."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 16:
        return np.arange(len(pts))
    x = np.ascontiguousarray(pts[:, 0])
    y = np.ascontiguousarray(pts[:, 1])
    proj = _OCTAGON[:, :1] * x + _OCTAGON[:, 1:] * y
    ext = np.unique(proj.argmax(axis=1))
    c = pts[ext].mean(axis=0)
    poly = pts[ext[np.argsort(np.arctan2(pts[ext, 1] - c[1], pts[ext, 0] - c[0]))]]
    if len(poly) < 3:
        return np.arange(len(pts))
    # the edge test (b - a) x (p - a) > 0 is affine in p
    inside = np.ones(len(pts), dtype=bool)
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        e = b - a
        inside &= (e[0] * y - e[1] * x) > (e[0] * a[1] - e[1] * a[0])
    return np.flatnonzero(~inside)


def hull_2d(points, seed=0) -> HullComplex:
    """Planar hull with interior pruning; indices refer to the full input."""
    pts = np.asarray(points, dtype=float)
    keep = prune_interior_2d(pts)
    sub = convex_hull(pts[keep], 2, seed=seed)
    order = keep[sub.order]
    return _complex_from_order_2d(len(pts), pts, order)


# ---------------------------------------------------------------------------
# Cone-extremality (hull side)
# ---------------------------------------------------------------------------
def _cone_meets_negative_orthant(gens, tol=1e-12) -> bool:
    """Does ``cone(gens)`` meet ``(-inf, 0)^d``?  Max-min LP over the simplex of weights."""
    gens = np.atleast_2d(gens)
    if gens.shape[0] == 0 or gens.size == 0:
        # no supporting facets: the normal cone is all of R^d
        return True
    if np.any(np.all(gens < -tol, axis=1)):
        return True
    m, d = gens.shape
    # variables (alpha_1..alpha_m, t): max t s.t. sum alpha_j g_j + t <= 0
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([gens.T, np.ones((d, 1))])
    res = optimize.linprog(c, A_ub=A_ub, b_ub=np.zeros(d),
                           A_eq=np.append(np.ones(m), 0.0)[None, :], b_eq=[1.0],
                           bounds=[(0, None)] * m + [(None, 1.0)], method="highs")
    return res.status == 0 and res.x[-1] > tol


def cone_extreme_faces(h: HullComplex, points=None):
    """Faces whose outward normal cone reaches into ``C_0 = (-inf, 0)^d``.

    Returns ``(faces, flags)``: ``faces[k]`` lists the qualifying k-faces and
    ``flags[i]`` is True when input point ``i`` lies on one of them.  For a
    facet this is the condition that its normal is negative; for a vertex it
    is the existence of a supporting hyperplane through it with negative
    outward normal.
    """
    vf = h.vertex_facets
    faces = {k: [] for k in range(h.d)}
    flags = np.zeros(h.n, dtype=bool)
    for k in range(h.d):
        for face in h.faces_by_dim[k]:
            rows = set(vf[face[0]])
            for i in face[1:]:
                rows &= set(vf[i])
            if _cone_meets_negative_orthant(h.normals[sorted(rows)]):
                faces[k].append(face)
                flags[list(face)] = True
    return faces, flags


def cone_extreme_points(points, seed=0) -> np.ndarray:
    """Flags of the points lying on a cone-extreme face of their hull."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 1:
        return np.ones(1, dtype=bool)
    return cone_extreme_faces(convex_hull(pts, pts.shape[1], seed))[1]


# ---------------------------------------------------------------------------
# Planar polygon helpers
# ---------------------------------------------------------------------------
def polygon_area(poly) -> float:
    """Shoelace formula (absolute value)."""
    p = np.asarray(poly, dtype=float)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_polygon(poly, normal, offset):
    """Sutherland-Hodgman clip of a convex polygon to ``normal . x <= offset``."""
    out = []
    p = np.asarray(poly, dtype=float)
    m = len(p)
    if m == 0:
        return p
    s = p @ np.asarray(normal, dtype=float) - offset
    for j in range(m):
        a, b = p[j], p[(j + 1) % m]
        sa, sb = s[j], s[(j + 1) % m]
        if sa <= 0:
            out.append(a)
        if (sa < 0 < sb) or (sb < 0 < sa):
            t = sa / (sa - sb)
            out.append(a + t * (b - a))
    return np.asarray(out).reshape(-1, 2)


def clip_polytope_vertices(K: SimplePolytope, normal, offset):
    """Vertices of ``K`` intersected with ``normal . x <= offset``."""
    s = K.vertices @ np.asarray(normal, dtype=float) - offset
    pts = [K.vertices[s <= 0]]
    for a, b in K.edges:
        if (s[a] < 0 < s[b]) or (s[b] < 0 < s[a]):
            t = s[a] / (s[a] - s[b])
            pts.append((K.vertices[a] + t * (K.vertices[b] - K.vertices[a]))[None, :])
    return np.concatenate(pts)


def cap_volume(K: SimplePolytope, normal, offset) -> float:
    """Exact ``Vol(K cap {normal . x <= offset})``."""
    P = clip_polytope_vertices(K, normal, offset)
    if len(P) < K.d + 1:
        return 0.0
    if K.d == 2:
        c = P.mean(axis=0)
        P = P[np.argsort(np.arctan2(P[:, 1] - c[1], P[:, 0] - c[0]))]
        return polygon_area(P)
    try:
        h = convex_hull(P, K.d)
    except DegenerateInput:
        return 0.0
    return hull_volume(h, P)
