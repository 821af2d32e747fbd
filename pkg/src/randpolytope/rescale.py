"""Scaling transform between a vertex neighbourhood and the limit space V x R.

Points near the vertex 0 of a simple polytope (chart coordinates, so the
incident facets lie in the coordinate hyperplanes) are mapped to
``w = (v, h)`` where ``v`` lives in the sum-zero hyperplane ``V`` and ``h``
is a logarithmic depth.  Pseudo-hyperboloids become horizontal slices,
supporting half-spaces with negative outward normal become down-grains and
petals become up-grains.

Arrays follow the numpy convention ``(..., d)`` for Euclidean points and
``(..., d - 1)`` for V-coordinates; heights are separate arrays.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .errors import LPNumericalFailure, NonPositiveCoordinate

LP_EPS_Y = 1e-9
LP_TIE_TOL = 1e-9


# ---------------------------------------------------------------------------
# V-coordinates
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class VBasis:
    """Orthonormal basis of ``V = {x : sum(x) = 0}`` stored as rows."""

    d: int
    rows: np.ndarray = field(repr=False)

    def embed(self, v):
        """V-coordinates -> vector ``l(v)`` in R^d."""
        return np.asarray(v, dtype=float) @ self.rows

    def project(self, x):
        """Orthogonal projection of R^d onto V, in basis coordinates."""
        return np.asarray(x, dtype=float) @ self.rows.T


@functools.lru_cache(maxsize=None)
def v_basis(d: int) -> VBasis:
    """Helmert basis of V: row k has k entries +1, one entry -k, zeros after."""
    if d < 2:
        raise ValueError("d must be >= 2")
    rows = np.zeros((d - 1, d))
    for k in range(1, d):
        rows[k - 1, :k] = 1.0
        rows[k - 1, k] = -float(k)
        rows[k - 1] /= np.sqrt(k * (k + 1))
    rows.setflags(write=False)
    return VBasis(d, rows)


# ---------------------------------------------------------------------------
# Cone function G
# ---------------------------------------------------------------------------
def _norm_equivalence(d: int, n_dirs: int = 10**6, seed: int = 20140801):
    """Extremes of ``max_i |l_i(v)|`` over the unit sphere of V."""
    basis = v_basis(d)
    if d == 2:
        c = 1.0 / np.sqrt(2.0)
        return c, c
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_dirs, d - 1))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = np.abs(dirs @ basis.rows).max(axis=1)

    def f(u, sign):
        u = np.asarray(u)
        return sign * np.abs(basis.embed(u / np.linalg.norm(u))).max()

    lo = optimize.minimize(f, dirs[np.argmin(vals)], args=(1.0,),
                           method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-14})
    hi = optimize.minimize(f, dirs[np.argmax(vals)], args=(-1.0,),
                           method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-14})
    return min(vals.min(), lo.fun), max(vals.max(), -hi.fun)


@dataclass(frozen=True)
class ConeFunction:
    """``G(v) = log(mean_i exp(l_i(v)))`` with its cone sandwich constants.

    ``c1 ||v|| - log d <= G(v) <= c2 ||v||`` holds with
    ``c1 = c1' / (d - 1)`` and ``c2 = c2'`` where ``c1', c2'`` bound
    ``max_i |l_i(v)|`` against the Euclidean norm.
    """

    d: int
    basis: VBasis = field(repr=False)
    c1: float
    c2: float

    def __call__(self, v):
        return G(self, v)


@functools.lru_cache(maxsize=None)
def cone_function(d: int) -> ConeFunction:
    c1p, c2p = _norm_equivalence(d)
    return ConeFunction(d, v_basis(d), c1p / (d - 1), c2p)


def G(cf: ConeFunction, v):
    """Evaluate the cone function; ``v`` has shape ``(..., d-1)``."""
    v = np.asarray(v, dtype=float)
    if cf.d == 2:
        # log cosh(t / sqrt 2), overflow-safe
        t = np.abs(v[..., 0]) / np.sqrt(2.0)
        return t + np.log1p(np.exp(-2.0 * t)) - np.log(2.0)
    l = cf.basis.embed(v)
    return logsumexp(l, axis=-1) - np.log(cf.d)


# ---------------------------------------------------------------------------
# Scale parameters
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ScaleParams:
    """Intensity-dependent constants for one vertex neighbourhood."""

    lam: float
    d: int

    def __post_init__(self):
        if not self.lam >= 3:
            raise ValueError("ScaleParams requires lambda >= 3")

    @property
    def delta0(self) -> float:
        return float(np.exp(-np.log(self.lam) ** (1.0 / self.d)))

    @property
    def beta(self) -> float:
        return 4.0 * self.d**2 + self.d - 1.0

    @property
    def alpha(self) -> float:
        return (6.0 * self.d) ** self.d * self.beta

    @property
    def s(self) -> float:
        return 1.0 / (self.lam * np.log(self.lam) ** self.beta)

    @property
    def T(self) -> float:
        return self.alpha * np.log(np.log(self.lam)) / self.lam

    @property
    def Tstar(self) -> float:
        return self.d * 6.0**self.d * self.T


def delta0(lam: float, d: int) -> float:
    """Side of the vertex box in which the rescaled picture is exact."""
    return float(np.exp(-np.log(lam) ** (1.0 / d)))


# ---------------------------------------------------------------------------
# The transform and its inverse
# ---------------------------------------------------------------------------
def _check_positive(z):
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise NonPositiveCoordinate("all coordinates must be > 0")
    return z


def forward(z, lam):
    """Map points of ``(0, inf)^d`` to ``(v, h)``; returns two arrays."""
    z = _check_positive(z)
    d = z.shape[-1]
    logz = np.log(z)
    v = v_basis(d).project(logz)
    h = (np.log(lam) + logz.sum(axis=-1)) / d
    return v, h


def inverse(v, h, lam):
    """``lam^(-1/d) e^h e^{l(v)}``."""
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    d = v.shape[-1] + 1
    l = v_basis(d).embed(v)
    return np.exp(l + (h - np.log(lam) / d)[..., None])


def window_roof(lam, d) -> float:
    """``log(lam^(1/d) delta0)``; the apex height of the pyramid W_lambda."""
    return np.log(lam) / d + np.log(delta0(lam, d))


def window_contains(v, h, lam, d=None):
    """Membership in ``W_lambda = T(Q0)``; ``lam = inf`` accepts everything."""
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.isinf(lam):
        return np.ones(h.shape, dtype=bool)
    d = v.shape[-1] + 1 if d is None else d
    roof = window_roof(lam, d)
    l = v_basis(d).embed(v)
    return np.all(h[..., None] <= -l + roof, axis=-1)


# ---------------------------------------------------------------------------
# Petals, tangent half-spaces, hyperboloids
# ---------------------------------------------------------------------------
def petal_contains(z0, z):
    """``z`` in the petal of ``z0``: ``sum z0_i / z_i <= d``."""
    z0 = _check_positive(z0)
    z = _check_positive(z)
    return (z0 / z).sum(axis=-1) <= z.shape[-1]


def halfspace_contains(z0, z):
    """``z`` on the origin side of the hyperplane tangent at ``z0``."""
    z0 = _check_positive(z0)
    z = np.asarray(z, dtype=float)
    return (z / z0).sum(axis=-1) <= z.shape[-1]


def hyperboloid_level(z):
    return np.prod(np.asarray(z, dtype=float), axis=-1)


def cone_extreme_by_petals(points, i: int) -> bool:
    """Petal criterion for cone-extremality of ``points[i]``.

    Looks for a normal ``y > 0`` with ``<z_i, y> = d`` and ``<z_q, y> >= d``
    for every other point, i.e. a supporting hyperplane through ``z_i`` whose
    outward normal lies in the open negative orthant.  The LP maximises the
    smallest slack; non-negative optimum (within ``LP_TIE_TOL``) means the
    petal of ``z_i`` is not covered by the others.
    """
    pts = _check_positive(np.atleast_2d(points))
    n, d = pts.shape
    if n == 1:
        return True
    zi = pts[i]
    others = np.delete(pts, i, axis=0)
    # variables (y_1..y_d, t); maximise t
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-others, np.ones((n - 1, 1))])
    b_ub = -np.full(n - 1, float(d))
    A_eq = np.append(zi, 0.0)[None, :]
    b_eq = [float(d)]
    bounds = [(LP_EPS_Y, None)] * d + [(None, float(d))]
    res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                           bounds=bounds, method="highs")
    if res.status == 2:
        return False
    if res.status != 0:
        raise LPNumericalFailure(f"linprog status {res.status}: {res.message}")
    y, t = res.x[:d], res.x[-1]
    if t < -LP_TIE_TOL * d:
        return False
    # verify the witness against the original conditions
    scale = d * (1.0 + np.abs(others @ y).max())
    if (np.any(y <= 0) or abs(zi @ y - d) > 1e-7 * scale
            or np.any(others @ y < d - 1e-7 * scale)):
        raise LPNumericalFailure("petal witness failed verification")
    return True


def cone_extreme_set_by_petals(points) -> np.ndarray:
    pts = np.atleast_2d(points)
    return np.array([cone_extreme_by_petals(pts, i) for i in range(len(pts))],
                    dtype=bool)


# ---------------------------------------------------------------------------
# Grains
# ---------------------------------------------------------------------------
def grain_contains(kind: str, apex_v, apex_h, v, h, cf: ConeFunction = None):
    """Membership of ``(v, h)`` in the up- or down-grain with the given apex."""
    apex_v = np.asarray(apex_v, dtype=float)
    v = np.asarray(v, dtype=float)
    cf = cone_function(v.shape[-1] + 1) if cf is None else cf
    dh = np.asarray(h, dtype=float) - np.asarray(apex_h, dtype=float)
    if kind == "down":
        return dh <= -G(cf, v - apex_v)
    if kind == "up":
        return dh >= G(cf, apex_v - v)
    raise ValueError(f"unknown grain kind {kind!r}")
