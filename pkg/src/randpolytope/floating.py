"""Floating bodies near a vertex: the minimal cap function ``v``, the annulus
between two of its level sets, Macbeath boxes and the dyadic saturated
collection used to localise dependence.

Dyadic work is done in log coordinates ``u_i = log3(z_i / delta)``.  The box
``[z_i/2, 3 z_i/2]`` of a point becomes ``log3(2 x_i / delta) in [u_i, u_i + 1]``,
so two boxes share interior points iff their log centres differ by less than
one in every coordinate.
"""
from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from . import geometry
from .errors import NonIntegerDyadicLevel, PointOutsideBody
from .rescale import ScaleParams
from .sampling import as_seed

N_DIRECTIONS = 10_000
MC_PROPOSALS = 100_000
LEVEL_TOL = 1e-9
N_PROBES = 100_000


def simplex_constant(d: int) -> float:
    """Lower bound ``c`` with ``Vol(cap) >= c * Delta * prod(z)`` for the corner pyramid."""
    return 1.0 / (2 * d)


def box_side(d: int) -> float:
    """Side ``Delta_d`` of the cube whose corner is modelled by the orthant."""
    if d == 2:
        return 1.0
    return max(d / 2.0, d**d / (2.0 * simplex_constant(d) * math.factorial(d)))


def floating_cube(d: int) -> geometry.SimplePolytope:
    return geometry.SimplePolytope.cube(d, side=box_side(d))


# ---------------------------------------------------------------------------
# Cap volumes
# ---------------------------------------------------------------------------
def cap_volume_orthant(z0) -> float:
    """Volume cut from the positive orthant by the hyperplane with ``z0`` as face centroid."""
    z0 = np.asarray(z0, dtype=float)
    d = len(z0)
    return float(d**d * np.prod(z0) / math.factorial(d))


def cap_volume_orthant_mc(z0, proposals=MC_PROPOSALS, seed=0):
    """Monte Carlo version of :func:`cap_volume_orthant`; returns ``(estimate, se)``."""
    z0 = np.asarray(z0, dtype=float)
    d = len(z0)
    legs = d * z0
    x = as_seed(seed).generator().random((proposals, d))
    p = float(np.mean(x.sum(axis=1) <= 1.0))
    box = float(np.prod(legs))
    return box * p, box * math.sqrt(p * (1 - p) / proposals)


def _box_caps(lo, hi, U, t):
    """``Vol([lo, hi] cap {u.x <= t})`` for every row of ``U`` by inclusion-exclusion.

    Rows with a nearly vanishing component are returned as NaN; the caller
    falls back to exact clipping for those.
    """
    d = len(lo)
    side = hi - lo
    t = t - U @ lo
    neg = U < 0
    a = np.abs(U)
    t = t + np.sum(np.where(neg, a * side, 0.0), axis=1)
    vol = np.zeros(len(U))
    for S in itertools.product([0, 1], repeat=d):
        S = np.array(S, dtype=bool)
        r = t - (a[:, S] * side[S]).sum(axis=1)
        vol += (-1) ** S.sum() * np.clip(r, 0, None) ** d
    with np.errstate(divide="ignore", invalid="ignore"):
        vol = vol / (math.factorial(d) * np.prod(a, axis=1))
    bad = a.min(axis=1) < 1e-4 * a.max(axis=1)
    vol[bad] = np.nan
    return np.clip(vol, 0.0, np.prod(side))


def _caps(K, U, z):
    t = U @ z
    if K.kind == "box":
        lo, hi = K.bounds
        vol = _box_caps(lo, hi, U, t)
    else:
        vol = np.full(len(U), np.nan)
    for r in np.flatnonzero(np.isnan(vol)):
        vol[r] = geometry.cap_volume(K, U[r], t[r])
    return vol


def _directions(d, n):
    if d == 2:
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        return np.column_stack([np.cos(th), np.sin(th)])
    if d == 3:
        # Fibonacci sphere
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        th = np.pi * (1 + 5**0.5) * i
        return np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])
    raise ValueError("direction grids implemented for d in {2, 3}")


def _unit(ang, d):
    if d == 2:
        return np.array([[np.cos(ang[0]), np.sin(ang[0])]])
    th, ph = ang
    return np.array([[np.cos(th) * np.sin(ph), np.sin(th) * np.sin(ph), np.cos(ph)]])


def _angles(u):
    if len(u) == 2:
        return np.array([np.arctan2(u[1], u[0])])
    return np.array([np.arctan2(u[1], u[0]), np.arccos(np.clip(u[2], -1, 1))])


def _corner_coords(z, K):
    lo, hi = K.bounds
    return np.minimum(z - lo, hi - z), hi - lo


def fast_path_applies(z, K) -> bool:
    """Cube corner with the optimal simplex fitting inside the body."""
    if K.kind != "box":
        return False
    y, side = _corner_coords(np.asarray(z, dtype=float), K)
    return bool(np.all(K.d * y <= side * (1 + 1e-12)))


def _check_inside(z, K):
    z = np.asarray(z, dtype=float)
    if z.shape != (K.d,):
        raise PointOutsideBody(f"expected a point of dimension {K.d}")
    if np.any(K.normals @ z - K.offsets >= 0):
        raise PointOutsideBody("v is defined on the interior of K only")
    return z


def v_function(z, K, method="auto", n_dirs=N_DIRECTIONS) -> float:
    """Smallest volume of ``K cap H`` over closed half-spaces ``H`` containing ``z``.

    ``method`` is ``"fast"`` (cube corner formula), ``"general"`` (direction
    grid plus local refinement) or ``"auto"``.
    """
    z = _check_inside(z, K)
    d = K.d
    if method == "fast" or (method == "auto" and fast_path_applies(z, K)):
        if not fast_path_applies(z, K):
            raise ValueError("corner formula does not apply at this point")
        y, _ = _corner_coords(z, K)
        return cap_volume_orthant(y)
    U = _directions(d, n_dirs)
    caps = _caps(K, U, z)
    best = np.argsort(caps)[:3 if d == 2 else 1]
    f = lambda ang: float(_caps(K, _unit(ang, d), z)[0])
    val = float(caps[best[0]])
    step = math.sqrt(4 * math.pi / n_dirs) if d == 3 else 2 * math.pi / n_dirs
    for b in best:
        a0 = _angles(U[b])
        if d == 2:
            res = optimize.minimize_scalar(lambda x: f([x]), bounds=(a0[0] - 2 * step, a0[0] + 2 * step),
                                           method="bounded", options={"xatol": 1e-10})
            val = min(val, float(res.fun))
        else:
            simplex = np.array([a0, a0 + [2 * step, 0], a0 + [0, 2 * step]])
            res = optimize.minimize(f, a0, method="Nelder-Mead",
                                    options={"initial_simplex": simplex, "xatol": 1e-8,
                                             "fatol": 1e-12 * val, "maxiter": 300})
            val = min(val, float(res.fun))
    return val


def annulus_contains(z, K, params: ScaleParams) -> bool:
    """``s <= v(z) < T*``."""
    v = v_function(z, K)
    return bool(params.s <= v < params.Tstar)


def annulus_rate(points, K, params: ScaleParams) -> float:
    """Fraction of the given points lying in the annulus."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return float("nan")
    return float(np.mean([annulus_contains(p, K, params) for p in pts]))


# ---------------------------------------------------------------------------
# Macbeath regions
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class MRegion:
    center: tuple
    delta: float | None = None
    code: tuple | None = None

    @property
    def lower(self):
        return np.asarray(self.center) / 2

    @property
    def upper(self):
        return 1.5 * np.asarray(self.center)

    @property
    def volume(self) -> float:
        return float(np.prod(self.center))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((self.lower <= x) & (x <= self.upper)))


def macbeath_region(z) -> MRegion:
    """``M(z) = prod [z_i/2, 3 z_i/2]`` (corner of a cube, ``z`` in ``[0, 1/2]^d``)."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise PointOutsideBody("Macbeath boxes need positive coordinates")
    return MRegion(tuple(float(x) for x in z))


def regions_overlap(a: MRegion, b: MRegion, rtol=1e-12) -> bool:
    """True when the two boxes share interior points.

    Faces that agree to ``rtol`` count as touching, so boxes whose centres
    differ by a factor 3 are disjoint despite rounding in ``1.5 c``.
    """
    lo = np.maximum(a.lower, b.lower)
    hi = np.minimum(a.upper, b.upper)
    return bool(np.all(hi - lo > rtol * hi))


def _T(params):
    return params.T if isinstance(params, ScaleParams) else float(params)


def dyadic_level(delta, params, d) -> int:
    m = math.log(_T(params) / delta**d, 3)
    k = round(m)
    if abs(m - k) > LEVEL_TOL * max(1.0, abs(m)):
        raise NonIntegerDyadicLevel(f"log3(T/delta^d) = {m!r} is not an integer")
    return int(k)


def top_code(delta) -> int:
    """Largest ``k`` with ``3^k <= 1/(3 delta)``."""
    return int(math.floor(math.log(1.0 / (3 * delta), 3) + 1e-12))


def adjust_delta(delta, params, d) -> float:
    """Smallest ``delta * r``, ``r in [1, 3^(1/d))``, making the dyadic level an integer."""
    x = math.log(_T(params) / delta**d, 3)
    frac = x - math.floor(x)
    if frac > 1 - 1e-12:
        frac = 0.0
    return float(delta * 3 ** (frac / d))


def _codes(m, d, K):
    lo = m - (d - 1) * K
    if lo > K:
        return []
    rng = range(lo, K + 1)
    return [c + (m - sum(c),) for c in itertools.product(rng, repeat=d - 1) if lo <= m - sum(c) <= K]


def dyadic_collection(delta, params, d) -> list:
    """All boxes with centres ``3^k delta``, ``sum k = log3(T/delta^d)``, ``3^{k_i} <= 1/(3 delta)``."""
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    m = dyadic_level(delta, params, d)
    K = top_code(delta)
    out = []
    for code in _codes(m, d, K):
        c = tuple(float(3.0**k * delta) for k in code)
        out.append(MRegion(c, float(delta), tuple(int(k) for k in code)))
    return out


def dump_regions(path, regions):
    d = len(regions[0].center) if regions else 0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"k{i}" for i in range(d)] + [f"z{i}" for i in range(d)]
                    + [f"lo{i}" for i in range(d)] + [f"hi{i}" for i in range(d)])
        for r in regions:
            code = list(r.code) if r.code is not None else [""] * d
            wr.writerow(code + [format(x, ".17g") for x in
                                list(r.center) + list(r.lower) + list(r.upper)])


# ---------------------------------------------------------------------------
# Maximality
# ---------------------------------------------------------------------------
def rounding_witness(u, m):
    """Integer code ``k`` with ``sum k = m`` and ``|u_i - k_i| < 1``.

    Round ``u`` down, then raise the non-integer coordinates with the largest
    fractional parts until the sum is right.
    """
    u = np.asarray(u, dtype=float)
    fl = np.floor(u + 1e-12)
    frac = u - fl
    need = int(round(m - fl.sum()))
    k = fl.astype(int)
    order = np.argsort(-frac, kind="stable")
    order = order[frac[order] > 1e-12]
    if need < 0 or need > len(order):
        return None
    k[order[:need]] += 1
    return k


def _rounding_witness_many(u, m):
    fl = np.floor(u + 1e-12)
    frac = u - fl
    need = np.round(m - fl.sum(axis=1)).astype(np.int64)
    rank = np.argsort(np.argsort(-frac, axis=1, kind="stable"), axis=1)
    up = (rank < need[:, None]) & (frac > 1e-12)
    return fl.astype(np.int64) + up


def probe_net(m, d, K, n=N_PROBES):
    """Deterministic points ``u`` of the level set ``sum u = m`` in ``[m-(d-1)K, K]^d``."""
    lo = m - (d - 1) * K
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = qmc.Sobol(d - 1, scramble=False).random_base2(int(math.ceil(math.log2(n))))
    free = lo + (K - lo) * s
    last = m - free.sum(axis=1)
    u = np.column_stack([free, last])
    return u[(last >= lo) & (last <= K)]


def _encode(codes, base, width):
    codes = np.asarray(codes, dtype=np.int64) - base
    return (codes * width ** np.arange(codes.shape[1], dtype=np.int64)).sum(axis=1)


def maximality_check(collection, delta, params, n_probes=N_PROBES, report=False, d=None):
    """No level-set point ``z`` with ``z_i <= 3^K delta`` has a box missing the collection.

    Probes are a Sobol net in log coordinates plus every admissible dyadic
    centre.  For each probe the rounding witness is also checked: it must be
    a member of the collection whose box meets the probe's box.  When the
    level set misses the probe domain the check holds vacuously.
    """
    if d is None:
        d = len(collection[0].center) if collection else getattr(params, "d", None)
    if d is None:
        raise ValueError("dimension unknown for an empty collection")
    m = dyadic_level(delta, params, d)
    K = top_code(delta)
    if m - (d - 1) * K > K:
        info = {"probes": 0, "misses": 0, "witness_misses": 0}
        return (not collection, info) if report else not collection
    if not collection:
        info = {"probes": 1, "misses": 1, "witness_misses": 1}
        return (False, info) if report else False
    grid = np.array(_codes(m, d, K), dtype=np.int64)
    u = np.vstack([probe_net(m, d, K, n_probes), grid.astype(float)])
    base = m - (d - 1) * K - 2
    width = np.int64(K - base + 3)
    have = np.sort(_encode([r.code for r in collection], base, width))

    def member(codes):
        e = _encode(codes, base, width)
        pos = np.clip(np.searchsorted(have, e), 0, len(have) - 1)
        return have[pos] == e

    # boxes meet iff |u_i - k_i| < 1: candidates are floor(u) + {0, 1}
    fl = np.floor(u + 1e-12).astype(np.int64)
    isint = np.abs(u - np.round(u)) <= 1e-12
    hit = np.zeros(len(u), dtype=bool)
    for e in itertools.product([0, 1], repeat=d):
        e = np.array(e, dtype=np.int64)
        k = fl + e
        ok = (k.sum(axis=1) == m) & ~np.any(isint & (e == 1), axis=1)
        if ok.any():
            idx = np.flatnonzero(ok)
            hit[idx[member(k[idx])]] = True
    kw = _rounding_witness_many(u, m)
    good = (kw.sum(axis=1) == m) & np.all(np.abs(u - kw) < 1, axis=1)
    good[good] = member(kw[good])
    witness_miss = int((~good).sum())
    ok = bool(hit.all())
    if report:
        return ok, {"probes": len(u), "misses": int((~hit).sum()), "witness_misses": witness_miss}
    return ok
