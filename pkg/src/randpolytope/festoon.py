"""The limit germ-grain model: extreme points, festoon boundary and limit scores.

Points live in ``V x R`` with intensity ``sqrt(d) exp(d h) dh dv``.  A point
``q`` contributes the function ``f_q(a) = h_q + G(v_q - a)`` and the lower
envelope ``E(a) = min_q f_q(a)`` bounds the admissible apices of empty
down-grains.  A point is extreme when it attains ``E`` somewhere; the festoon
boundary is ``sup_a [E(a) - G(v - a)]``.

In d=2 with ``A_q = exp(h_q + v_q/sqrt2)`` and ``B_q = exp(h_q - v_q/sqrt2)``
one has ``2 exp(f_q(a)) = A_q exp(-a/sqrt2) + B_q exp(a/sqrt2)``, so two
functions cross at most once and the crossing is explicit.  The envelope is
then built by a stack sweep over points sorted by ``v``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import geometry, rescale
from .errors import DegenerateInput, DimensionUnsupported, EmptyInput
from .sampling import as_seed, limit_mass

SQ2 = math.sqrt(2.0)
LOG2 = math.log(2.0)
TIE_TOL = 1e-9
MIN_SEPARATION = 1e-9

# default simulation window
CORE_HALF_WIDTH = 8.0
GUARD = 4.0
H_MIN = -8.0
H_MAX = 6.0
LAYER = 0.25


def G2(t):
    """Cone function for d=2 as a function of the scalar V-coordinate."""
    t = np.abs(np.asarray(t, dtype=float)) / SQ2
    return t + np.log1p(np.exp(-2.0 * t)) - LOG2


def _g2(t):
    t = abs(t) / SQ2
    return t + math.log1p(math.exp(-2.0 * t)) - LOG2


def _log_diff(big, small):
    """``log(e^big - e^small)`` for ``big > small``."""
    return big + math.log1p(-math.exp(small - big))


def crossing(vp, hp, vq, hq):
    """Crossing of ``f_p`` and ``f_q`` for ``v_p <= v_q``.

    Returns ``(kind, a)`` with kind ``"p"`` when p never lies strictly below q,
    ``"q"`` when q never lies strictly below p, and ``"x"`` with the unique
    crossing abscissa otherwise (p wins to the left of it).
    """
    la_p, la_q = hp + vp / SQ2, hq + vq / SQ2
    lb_p, lb_q = hp - vp / SQ2, hq - vq / SQ2
    if la_p >= la_q:
        return "p", math.nan
    if lb_q >= lb_p:
        return "q", math.nan
    return "x", (_log_diff(la_q, la_p) - _log_diff(lb_p, lb_q)) / SQ2


def _sweep(v, h, order):
    """Stack sweep; ``order`` sorts by (v, h).  Returns winner indices and left breakpoints."""
    stack, left = [], []
    for i in order:
        vi, hi = float(v[i]), float(h[i])
        keep = True
        while stack:
            p = stack[-1]
            kind, a = crossing(float(v[p]), float(h[p]), vi, hi)
            if kind == "q":
                keep = False
                break
            if kind == "p" or a <= left[-1]:
                stack.pop()
                left.pop()
                continue
            stack.append(i)
            left.append(a)
            keep = False
            break
        if keep:
            stack.append(i)
            left.append(-math.inf)
    return np.asarray(stack, dtype=int), np.asarray(left[1:], dtype=float)


@dataclass
class Envelope2D:
    """Winners of the lower envelope in increasing ``v``, with tie apices ``(a*, b*)``."""

    idx: np.ndarray
    v: np.ndarray
    h: np.ndarray
    breaks: np.ndarray
    apex_h: np.ndarray

    @classmethod
    def build(cls, v, h):
        v = np.asarray(v, dtype=float).reshape(-1)
        h = np.asarray(h, dtype=float)
        if len(v) == 0:
            raise EmptyInput("no points")
        order = np.lexsort((h, v))
        idx, breaks = _sweep(v, h, order)
        ev, eh = v[idx], h[idx]
        apex = eh[:-1] + G2(ev[:-1] - breaks)
        return cls(idx, ev, eh, breaks, apex)

    def __len__(self):
        return len(self.idx)

    def winner(self, a):
        """Position (into ``idx``) of the envelope winner at ``a``."""
        return np.searchsorted(self.breaks, np.asarray(a, dtype=float), side="right")

    def value(self, a):
        a = np.asarray(a, dtype=float)
        j = self.winner(a)
        return self.h[j] + G2(self.v[j] - a)

    def boundary(self, v):
        """Festoon boundary height; linear rays beyond the outermost winners."""
        v = np.asarray(v, dtype=float)
        m = len(self.idx)
        j = np.clip(np.searchsorted(self.v, v, side="right") - 1, 0, max(m - 2, 0))
        out = np.empty(v.shape)
        left = v <= self.v[0]
        right = v >= self.v[-1]
        mid = ~(left | right)
        if m >= 2:
            out[mid] = self.apex_h[j[mid]] - G2(v[mid] - self.breaks[j[mid]])
        out[left] = self.h[0] + (self.v[0] - v[left]) / SQ2
        out[right] = self.h[-1] + (v[right] - self.v[-1]) / SQ2
        return out

    def block_max(self, lo, hi):
        """``max E`` over ``[lo, hi]``; each piece is convex so endpoints suffice."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        out = np.maximum(self.value(lo), self.value(hi))
        if len(self.breaks):
            a0 = np.searchsorted(self.breaks, lo, side="right")
            a1 = np.searchsorted(self.breaks, hi, side="left")
            for b in np.flatnonzero(a1 > a0):
                out[b] = max(out[b], self.apex_h[a0[b]:a1[b]].max())
        return out

    def span_integrals(self):
        """``int exp(2 dPhi)`` over each face span, in closed form."""
        if len(self.idx) < 2:
            return np.zeros(0)
        a, b = self.breaks, self.apex_h
        t1 = np.tanh((self.v[1:] - a) / SQ2)
        t0 = np.tanh((self.v[:-1] - a) / SQ2)
        return np.exp(2.0 * b) * SQ2 * (t1 - t0)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------
@dataclass
class FestoonFace:
    k: int
    points: tuple
    apex_v: np.ndarray
    apex_h: float


@dataclass
class LimitScore:
    index: int
    xi_k: tuple
    xi_v: float


@dataclass
class FestoonModel:
    """Festoon of a finite point set in ``V x R``.

    For d=2 ``envelope`` carries the ordered winners and breakpoints.  For
    d >= 3 extremality is decided through the exact dual hull test and
    ``raster`` holds ``E`` sampled on a grid of spacing ``eta``.
    """

    d: int
    v: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    extreme: np.ndarray = field(repr=False)
    envelope: Envelope2D = field(default=None, repr=False)
    raster: dict = field(default=None, repr=False)

    @property
    def n(self):
        return len(self.h)

    @property
    def ext_indices(self):
        if self.envelope is not None:
            return self.envelope.idx
        return np.flatnonzero(self.extreme)

    def margins(self):
        """``min_a [f_i(a) - E(a)]``; zero for winners, positive otherwise (d=2)."""
        env = self.envelope
        if env is None:
            raise DimensionUnsupported("margins are exact only for d=2")
        v, h = self.v[:, 0], self.h
        la = h + v / SQ2
        lb = h - v / SQ2
        cand = [la - (env.h[0] + env.v[0] / SQ2), lb - (env.h[-1] - env.v[-1] / SQ2)]
        if len(env.breaks):
            f = h[:, None] + G2(v[:, None] - env.breaks[None, :])
            cand.append((f - env.apex_h[None, :]).min(axis=1))
        out = np.min(np.vstack([np.broadcast_to(c, v.shape) for c in cand]), axis=0)
        out[env.idx] = 0.0
        return out


def _as_vh(v, h, d=None):
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float).reshape(-1)
    if v.ndim == 1:
        v = v[:, None] if d in (None, 2) else v[None, :]
    return v, h


def envelope_min(a, v, h, d=None):
    """Exact ``min_q f_q(a)`` and all indices attaining it within ``TIE_TOL``."""
    v, h = _as_vh(v, h, d)
    if len(h) == 0:
        raise EmptyInput("envelope of an empty set")
    d = v.shape[1] + 1
    a = np.atleast_1d(np.asarray(a, dtype=float))
    cf = rescale.cone_function(d)
    f = h + rescale.G(cf, v - a[None, :])
    val = f.min()
    return float(val), np.flatnonzero(f <= val + TIE_TOL)


def _check_separation(v, h):
    if len(h) < 2:
        return
    w = np.column_stack([v, h])
    o = np.lexsort(w.T[::-1])
    gaps = np.abs(np.diff(w[o], axis=0)).max(axis=1)
    if np.any(gaps < MIN_SEPARATION):
        raise DegenerateInput("points closer than 1e-9 in (v, h)")


def _ext_dual(v, h, d):
    """Extremality in d >= 3 via the inverse images and the hull-side test."""
    z = rescale.inverse(v, h, 1.0)
    n = len(h)
    if n <= d:
        # hull undefined; fall back to the dual LP
        return rescale.cone_extreme_set_by_petals(z)
    # the far corner makes the point set full dimensional without touching C0
    far = np.full((1, d), 10.0 * z.max() * d)
    hull = geometry.convex_hull(np.vstack([z, far]), d)
    _, flags = geometry.cone_extreme_faces(hull)
    return flags[:n]


def _raster(v, h, d, eta, pad=2.0):
    lo = v.min(axis=0) - pad
    hi = v.max(axis=0) + pad
    axes = [np.arange(l, u + eta, eta) for l, u in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d - 1)
    cf = rescale.cone_function(d)
    vals = np.full(len(grid), np.inf)
    for q in range(len(h)):
        np.minimum(vals, h[q] + rescale.G(cf, v[q] - grid), out=vals)
    return {"eta": eta, "axes": axes, "grid": grid, "E": vals}


def build_model(v, h, d=2, eta=0.05, check=True) -> FestoonModel:
    v, h = _as_vh(v, h, d)
    if len(h) == 0:
        raise EmptyInput("no points")
    if v.shape[1] != d - 1:
        raise ValueError("v must have d - 1 columns")
    if check:
        _check_separation(v, h)
    if d == 2:
        env = Envelope2D.build(v[:, 0], h)
        ext = np.zeros(len(h), dtype=bool)
        ext[env.idx] = True
        return FestoonModel(d, v, h, ext, envelope=env)
    ext = _ext_dual(v, h, d)
    return FestoonModel(d, v, h, ext, raster=_raster(v, h, d, eta))


def ext_points(v, h, d=2):
    """Extreme flags of a finite point set."""
    return build_model(v, h, d).extreme


def ext_by_intervals(v, h):
    """Definition-based d=2 check: the set ``{a : f_i(a) < f_q(a) for all q != i}``.

    Each constraint is a half-line, so the set is an interval; the point is
    extreme iff the interval is nonempty.  Quadratic in n, used as an
    independent route.
    """
    v, h = _as_vh(v, h, 2)
    v = v[:, 0]
    n = len(h)
    out = np.zeros(n, dtype=bool)
    for i in range(n):
        lo, hi = -math.inf, math.inf
        alive = True
        for q in range(n):
            if q == i:
                continue
            if (v[q], h[q]) < (v[i], h[i]):
                kind, a = crossing(v[q], h[q], v[i], h[i])
                # i (right function) wins to the right of the crossing
                if kind == "q":
                    alive = False
                elif kind == "x":
                    lo = max(lo, a)
            else:
                kind, a = crossing(v[i], h[i], v[q], h[q])
                if kind == "p":
                    alive = False
                elif kind == "x":
                    hi = min(hi, a)
            if not alive:
                break
        out[i] = alive and lo < hi
    return out


def ext_by_grid(v, h, d=2, span=6.0, n_grid=4001):
    """Brute-force oracle: minimise ``f_i - min_{q!=i} f_q`` on a dense grid, then bisect."""
    v, h = _as_vh(v, h, d)
    cf = rescale.cone_function(d)
    n = len(h)
    out = np.zeros(n, dtype=bool)
    if d != 2:
        raise DimensionUnsupported("grid oracle implemented for d=2")
    vv = v[:, 0]
    a = np.linspace(vv.min() - span, vv.max() + span, n_grid)
    F = h[:, None] + rescale.G(cf, (vv[:, None] - a[None, :])[..., None])
    for i in range(n):
        others = np.delete(F, i, axis=0).min(axis=0) if n > 1 else np.full(len(a), np.inf)
        gap = F[i] - others
        j = int(np.argmin(gap))
        if gap[j] < 0:
            out[i] = True
            continue
        # refine around the grid minimiser
        lo, hi = a[max(j - 1, 0)], a[min(j + 1, len(a) - 1)]
        for _ in range(60):
            m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
            g1 = h[i] + _g2(vv[i] - m1) - min(h[q] + _g2(vv[q] - m1) for q in range(n) if q != i)
            g2 = h[i] + _g2(vv[i] - m2) - min(h[q] + _g2(vv[q] - m2) for q in range(n) if q != i)
            if g1 < g2:
                hi = m2
            else:
                lo = m1
        out[i] = min(g1, g2) < 0
    return out


def festoon_faces(model: FestoonModel):
    """0-faces and 1-faces of a d=2 festoon with witness apices."""
    if model.d != 2:
        raise DimensionUnsupported("festoon faces are implemented for d=2")
    env = model.envelope
    faces = []
    m = len(env)
    for j in range(m):
        # an interior abscissa of the winning interval
        lo = env.breaks[j - 1] if j > 0 else -math.inf
        hi = env.breaks[j] if j < m - 1 else math.inf
        if np.isfinite(lo) and np.isfinite(hi):
            a = 0.5 * (lo + hi)
        elif np.isfinite(lo):
            a = lo + 1.0
        elif np.isfinite(hi):
            a = hi - 1.0
        else:
            a = env.v[j]
        faces.append(FestoonFace(0, (int(env.idx[j]),), np.array([a]), float(env.value(a))))
    for j in range(m - 1):
        faces.append(FestoonFace(1, (int(env.idx[j]), int(env.idx[j + 1])),
                                 np.array([env.breaks[j]]), float(env.apex_h[j])))
    return faces


def verify_face(model: FestoonModel, face: FestoonFace, tol=TIE_TOL) -> bool:
    """Generators on the grain boundary and no point strictly inside the grain."""
    cf = rescale.cone_function(model.d)
    lim = face.apex_h - rescale.G(cf, model.v - face.apex_v)
    gap = lim - model.h
    on = np.abs(gap[list(face.points)]) <= tol * max(1.0, abs(face.apex_h))
    others = np.delete(gap, list(face.points))
    return bool(np.all(on) and np.all(others <= tol))


def boundary_height(v, model: FestoonModel, refine=True):
    """Festoon boundary ``sup_a [E(a) - G(v - a)]``."""
    if model.d == 2:
        return model.envelope.boundary(np.asarray(v, dtype=float).reshape(-1)
                                       if np.ndim(v) > 1 else v)
    cf = rescale.cone_function(model.d)
    r = model.raster
    v = np.atleast_2d(v)
    out = np.empty(len(v))
    hs, vs = model.h, model.v
    for i, x in enumerate(v):
        vals = r["E"] - rescale.G(cf, x - r["grid"])
        j = int(np.argmax(vals))
        best = vals[j]
        if refine:
            from scipy import optimize

            def neg(a):
                e = np.min(hs + rescale.G(cf, vs - a))
                return -(e - rescale.G(cf, x - a))

            res = optimize.minimize(neg, r["grid"][j], method="Nelder-Mead",
                                    options={"xatol": 1e-10, "fatol": 1e-12})
            best = max(best, -res.fun)
        out[i] = best
    return out


# ---------------------------------------------------------------------------
# Limit scores
# ---------------------------------------------------------------------------
def _position(model, i):
    pos = np.flatnonzero(model.envelope.idx == i)
    return int(pos[0]) if len(pos) else None


def xi_k_inf(i: int, model: FestoonModel, k: int) -> float:
    if model.d != 2:
        if k == 0:
            return float(model.extreme[i])
        raise DimensionUnsupported("face scores beyond k=0 need d=2")
    j = _position(model, i)
    if j is None:
        return 0.0
    if k == 0:
        return 1.0
    if k == 1:
        m = len(model.envelope)
        return 0.5 * ((j > 0) + (j < m - 1))
    raise ValueError("k must be 0 or 1 in d=2")


def _boundary_piece(env, j):
    a, b = env.breaks[j], env.apex_h[j]
    return lambda x: math.exp(2.0 * (b - _g2(x - a)))


def xi_v_inf(i: int, model: FestoonModel, method="quad") -> float:
    """``(1 / (2 sqrt 2)) int_{Cyl(w)} exp(2 dPhi)`` over the spans of faces at ``w``."""
    if model.d != 2:
        raise DimensionUnsupported("volume score implemented for d=2")
    env = model.envelope
    j = _position(model, i)
    if j is None:
        return 0.0
    spans = [s for s in (j - 1, j) if 0 <= s < len(env) - 1]
    if method == "closed":
        total = env.span_integrals()[spans].sum() if spans else 0.0
    else:
        total = 0.0
        for s in spans:
            val, _ = integrate.quad(_boundary_piece(env, s), env.v[s], env.v[s + 1],
                                    epsrel=1e-10, epsabs=0.0, limit=200)
            total += val
    return total / (2.0 * SQ2)


def limit_scores(model: FestoonModel):
    """All d=2 limit scores in one pass (closed-form volume score)."""
    env = model.envelope
    m = len(env)
    spans = env.span_integrals()
    out = []
    for j in range(m):
        left = spans[j - 1] if j > 0 else 0.0
        right = spans[j] if j < m - 1 else 0.0
        xi1 = 0.5 * ((j > 0) + (j < m - 1))
        out.append(LimitScore(int(env.idx[j]), (1.0, xi1), (left + right) / (2.0 * SQ2)))
    return out


# ---------------------------------------------------------------------------
# Exact window simulation (d=2)
# ---------------------------------------------------------------------------
@dataclass
class WindowSample:
    """Limit process revealed just enough to make the festoon exact on ``[lo, hi]``.

    ``resolved`` is the span of abscissae on which the envelope is exact; the
    caller's core lies inside it with a guard band on each side.
    """

    v: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    envelope: Envelope2D = field(repr=False)
    core: tuple
    resolved: tuple
    top: float
    n_layers: int

    def model(self):
        ext = np.zeros(len(self.h), dtype=bool)
        ext[self.envelope.idx] = True
        return FestoonModel(2, self.v[:, None], self.h, ext, envelope=self.envelope)

    def core_positions(self):
        """Positions in the envelope of winners with ``v`` in the core."""
        ev = self.envelope.v
        return np.flatnonzero((ev >= self.core[0]) & (ev <= self.core[1]))


def _needed_heights(env, cells_lo, cells_hi, blk_lo, blk_hi):
    """Height below which a point in each cell could still reach below ``E`` on some block."""
    if env is None:
        return np.full(len(cells_lo), np.inf)
    M = env.block_max(blk_lo, blk_hi)
    # distance between the cell and each block
    gap = np.maximum(0.0, np.maximum(blk_lo[None, :] - cells_hi[:, None],
                                     cells_lo[:, None] - blk_hi[None, :]))
    return (M[None, :] - gap / SQ2).max(axis=1) + LOG2


def _relevant_breaks_ok(env, core, resolved):
    ev = env.v
    if len(env) < 2:
        return False
    pos = np.flatnonzero((ev >= core[0]) & (ev <= core[1]))
    lo = max(int(pos[0]) - 1 if len(pos) else int(np.searchsorted(ev, core[0])) - 1, 0)
    hi = min(int(pos[-1]) + 1 if len(pos) else int(np.searchsorted(ev, core[1])), len(env) - 1)
    if lo >= hi:
        return False
    br = env.breaks[lo:hi]
    return bool(np.all((br > resolved[0]) & (br < resolved[1])))


def sample_window(core=(-CORE_HALF_WIDTH, CORE_HALF_WIDTH), guard=GUARD, seed=0,
                  h_min=H_MIN, h_max=H_MAX, layer=LAYER, max_tries=4) -> WindowSample:
    """Sample the d=2 limit process by increasing height until the envelope is exact.

    Heights are revealed layer by layer on unit cells of the ``v`` axis.  A
    cell is skipped once no point at or above the current layer could drop
    below the envelope on the resolved span; since the envelope only goes down
    when points are added, skipped cells never become relevant again.  If the
    breakpoints adjacent to the core fall outside the resolved span the guard
    is doubled and the draw repeated.
    """
    seed = as_seed(seed)
    for attempt in range(max_tries):
        g = guard * 2**attempt
        res = (core[0] - g, core[1] + g)
        out = _sample_window_once(core, res, seed.child(attempt), h_min, h_max, layer)
        if out is not None and _relevant_breaks_ok(out.envelope, core, res):
            return out
    raise RuntimeError("festoon window did not resolve; widen the guard")


def _sample_window_once(core, res, seed, h_min, h_max, layer):
    reach = SQ2 * (h_max - h_min + LOG2)
    c0 = math.floor(res[0] - reach)
    c1 = math.ceil(res[1] + reach)
    cells_lo = np.arange(c0, c1, dtype=float)
    cells_hi = cells_lo + 1.0
    b0, b1 = math.floor(res[0]), math.ceil(res[1])
    blk_lo = np.maximum(np.arange(b0, b1, dtype=float), res[0])
    blk_hi = np.minimum(np.floor(blk_lo) + 1.0, res[1])
    vs, hs = [], []
    env = None
    n_layers = int(math.ceil((h_max - h_min) / layer))
    top = h_min
    exhausted = True
    for k in range(n_layers):
        lo_h = h_min + k * layer
        hi_h = min(lo_h + layer, h_max)
        need = _needed_heights(env, cells_lo, cells_hi, blk_lo, blk_hi) > lo_h
        if not need.any():
            top = lo_h
            exhausted = False
            break
        rng = seed.child(k).generator()
        mass = limit_mass(1.0, lo_h, hi_h, 2)
        counts = rng.poisson(mass, size=int(need.sum()))
        tot = int(counts.sum())
        top = hi_h
        if tot == 0:
            continue
        v_new = np.repeat(cells_lo[need], counts) + rng.random(tot)
        e_lo, e_hi = math.exp(2 * lo_h), math.exp(2 * hi_h)
        h_new = 0.5 * np.log(e_lo + rng.random(tot) * (e_hi - e_lo))
        vs.append(v_new)
        hs.append(h_new)
        if env is not None:
            keep = h_new < env.boundary(v_new)
            v_new, h_new = v_new[keep], h_new[keep]
            if len(v_new) == 0:
                continue
            v_new = np.concatenate([env.v, v_new])
            h_new = np.concatenate([env.h, h_new])
        env = Envelope2D.build(v_new, h_new)
    if exhausted:
        raise RuntimeError(f"height cap {h_max} reached before the envelope resolved")
    if env is None:
        return None
    v_all = np.concatenate(vs)
    h_all = np.concatenate(hs)
    # re-index winners into the full arrays
    order = np.lexsort((h_all, v_all))
    pos = order[np.searchsorted(v_all[order], env.v)]
    env = Envelope2D(pos, env.v, env.h, env.breaks, env.apex_h)
    return WindowSample(v_all, h_all, env, tuple(core), tuple(res), top, k)


# ---------------------------------------------------------------------------
# Inserted test points
# ---------------------------------------------------------------------------
def _np_log_absdiff(x, y):
    """``log|e^x - e^y|``."""
    return np.maximum(x, y) + np.log1p(-np.exp(-np.abs(x - y)))


def below_set(vw, hw, vq, hq):
    """``{a : f_w(a) < f_q(a)}`` as ``(lo, hi)``, broadcasting over all inputs.

    The set is a half-line, the whole line or empty (``lo >= hi``).
    """
    vw, hw, vq, hq = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (vw, hw, vq, hq)))
    la_w, lb_w = hw + vw / SQ2, hw - vw / SQ2
    la_q, lb_q = hq + vq / SQ2, hq - vq / SQ2
    lo = np.full(vw.shape, -np.inf)
    hi = np.full(vw.shape, np.inf)
    left_q = (vq < vw) | ((vq == vw) & (hq <= hw))
    # q to the left: w wins to the right of the crossing
    empty_l = left_q & (lb_w >= lb_q)
    free_l = left_q & (la_q >= la_w)
    cut_l = left_q & ~empty_l & ~free_l
    # q to the right: w wins to the left of the crossing
    empty_r = ~left_q & (la_w >= la_q)
    free_r = ~left_q & (lb_q >= lb_w)
    cut_r = ~left_q & ~empty_r & ~free_r
    # both orientations share |A_w - A_q| / |B_w - B_q| at the crossing
    with np.errstate(invalid="ignore", divide="ignore"):
        a = (_np_log_absdiff(la_w, la_q) - _np_log_absdiff(lb_w, lb_q)) / SQ2
    lo = np.where(cut_l, a, lo)
    hi = np.where(cut_r, a, hi)
    empty = empty_l | empty_r
    lo = np.where(empty, np.inf, lo)
    hi = np.where(empty, -np.inf, hi)
    return lo, hi


def win_interval(vw, hw, env: Envelope2D, window=None):
    """Interval of abscissae where inserted points beat the envelope ``env``.

    ``window`` restricts the competing winners to ``v`` in that range, which
    keeps the cost local; the caller guarantees the interval lies well inside.
    """
    vw = np.atleast_1d(np.asarray(vw, dtype=float))
    hw = np.atleast_1d(np.asarray(hw, dtype=float))
    ev, eh = env.v, env.h
    if window is not None:
        sel = (ev >= window[0]) & (ev <= window[1])
        ev, eh = ev[sel], eh[sel]
    lo, hi = below_set(vw[:, None], hw[:, None], ev[None, :], eh[None, :])
    return lo.max(axis=1), hi.min(axis=1)


def _nonempty(lo, hi):
    return lo < hi


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------
def simplex_volume_S(d: int) -> float:
    """(d-1)-volume of the regular simplex ``{x <= 1, sum x = 0}``."""
    return d ** (d - 1) * math.sqrt(d) / math.factorial(d - 1)


def mean_prefactor(d: int) -> float:
    return d ** (-d + 1.5) * simplex_volume_S(d)


def variance_prefactor(d: int) -> float:
    return d ** (-d + 1) * simplex_volume_S(d)


def limit_constants(d: int, sigma2_k, sigma2_v=None):
    """``F_{k,d}`` for each supplied sigma^2 and ``V_d`` (or None)."""
    c = variance_prefactor(d)
    F = [c * s for s in sigma2_k]
    return F, (None if sigma2_v is None else c * sigma2_v)


@dataclass
class Estimate:
    value: float
    se: float
    reps: int
    extra: dict = field(default_factory=dict)


def gauss_legendre(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


H0_RANGE = (-6.0, 4.0)
H0_NODES = 41
V1_RANGE = (-20.0, 20.0)
V1_NODES = 81


def _xi_v_inserted(env, h0, reach=15.0):
    """Volume score of ``(0, h0)`` inserted into the winners of ``env`` near 0."""
    sel = np.flatnonzero(np.abs(env.v) <= reach)
    v = np.concatenate([env.v[sel], [0.0]])
    h = np.concatenate([env.h[sel], [h0]])
    sub = Envelope2D.build(v, h)
    pos = np.flatnonzero(sub.idx == len(v) - 1)
    if len(pos) == 0:
        return 0.0
    j = int(pos[0])
    sp = sub.span_integrals()
    total = (sp[j - 1] if j > 0 else 0.0) + (sp[j] if j < len(sub) - 1 else 0.0)
    return total / (2.0 * SQ2)


def mean_score_integral(kind="xi0", reps=2000, seed=0, guard=GUARD,
                        h_range=H0_RANGE, nodes=H0_NODES) -> Estimate:
    """``int E xi((0,h0), P) e^{2 h0} dh0`` for d=2.

    A test point ``(0, h0)`` is extreme iff ``h0`` lies below the festoon
    boundary ``H`` of ``P`` at 0, so for the face scores the integral equals
    ``E[e^{2H}] / 2``; that conditional form is the reported value and the
    Gauss-Legendre insertion estimate is kept in ``extra``.  The volume score
    uses insertion at the nodes.
    """
    seed = as_seed(seed)
    x, w = gauss_legendre(*h_range, nodes)
    wx = w * np.exp(2.0 * x)
    closed = np.empty(reps)
    gl = np.empty(reps)
    for r in range(reps):
        ws = sample_window(core=(0.0, 0.0), guard=guard, seed=seed.child(r))
        H = float(ws.envelope.boundary(np.array([0.0]))[0])
        if kind in ("xi0", "xi1"):
            closed[r] = math.exp(2.0 * H) / 2.0
            gl[r] = wx[x < H].sum()
        elif kind == "xiV":
            vals = np.array([_xi_v_inserted(ws.envelope, h0) if h0 < H else 0.0 for h0 in x])
            gl[r] = (wx * vals).sum()
        else:
            raise ValueError(f"unknown score kind {kind!r}")
    g_est, g_se = float(gl.mean()), float(gl.std(ddof=1) / math.sqrt(reps))
    if kind == "xiV":
        return Estimate(g_est, g_se, reps, {"gl": g_est, "gl_se": g_se})
    c_est, c_se = float(closed.mean()), float(closed.std(ddof=1) / math.sqrt(reps))
    return Estimate(c_est, c_se, reps, {"gl": g_est, "gl_se": g_se})


def correlation_c(w1, w2, reps=2000, seed=0, guard=GUARD) -> Estimate:
    """Pair correlation of the vertex score for two inserted points (d=2).

    Both expectations use the same draws of the process.
    """
    (v1, h1), (v2, h2) = w1, w2
    if v1 == v2 and h1 == h2:
        raise ValueError("points must be distinct")
    seed = as_seed(seed)
    core = (min(v1, v2), max(v1, v2))
    x1 = np.empty(reps)
    x2 = np.empty(reps)
    y1 = np.empty(reps)
    y2 = np.empty(reps)
    for r in range(reps):
        env = sample_window(core=core, guard=guard, seed=seed.child(r)).envelope
        lo1, hi1 = win_interval([v1], [h1], env)
        lo2, hi2 = win_interval([v2], [h2], env)
        a12 = below_set(v1, h1, v2, h2)
        a21 = below_set(v2, h2, v1, h1)
        y1[r] = _nonempty(lo1, hi1)[0]
        y2[r] = _nonempty(lo2, hi2)[0]
        x1[r] = _nonempty(np.maximum(lo1, a12[0]), np.minimum(hi1, a12[1]))[0]
        x2[r] = _nonempty(np.maximum(lo2, a21[0]), np.minimum(hi2, a21[1]))[0]
    # E[x1 x2] - E[y1] E[y2]
    from .stats import jackknife
    est, se = jackknife(lambda a, b, c, e: np.mean(a * b) - c.mean() * e.mean(), x1, x2, y1, y2) \
        if reps <= 4000 else (float(np.mean(x1 * x2) - y1.mean() * y2.mean()), float("nan"))
    return Estimate(est, se, reps)


def sigma2(kind="xi0", reps=200, seed=0, guard=GUARD, h_range=H0_RANGE, h_nodes=H0_NODES,
           v_range=V1_RANGE, v_nodes=V1_NODES, bases=41, base_step=4.0) -> Estimate:
    """Quadrature form of the limit variance density for the vertex score (d=2).

    ``sqrt2 int E xi^2 e^{2h0} dh0 + 2 int int int c e^{2(h0+h1)}`` on
    Gauss-Legendre grids.  The process is stationary in ``v``, so each draw
    evaluates the integrand at ``bases`` translates of the test point and the
    pair term is split as ``E[X0 X1 - Y0 Y1] + Cov(Y0, Y1)``, which keeps the
    far-field noise out of the first piece.  The error budget combines the
    Monte Carlo standard error with the change against a grid with half the
    nodes in each direction.
    """
    if kind not in ("xi0", "xi1"):
        raise ValueError("quadrature route covers the face scores; use sigma2_window for xiV")
    seed = as_seed(seed)
    grids = {}
    for tag, (hn, vn) in {"fine": (h_nodes, v_nodes),
                          "coarse": ((h_nodes + 1) // 2, (v_nodes + 1) // 2)}.items():
        h0, w0 = gauss_legendre(*h_range, hn)
        v1, wv = gauss_legendre(*v_range, vn)
        V1, H1 = np.meshgrid(v1, h0, indexing="ij")
        W1 = (wv[:, None] * (w0 * np.exp(2.0 * h0))[None, :]).ravel()
        V1, H1 = V1.ravel(), H1.ravel()
        # half-lines between the two test points translate with the base point
        pair = below_set(0.0, h0[:, None], V1[None, :], H1[None, :]) + \
            below_set(V1[None, :], H1[None, :], 0.0, h0[:, None])
        grids[tag] = (h0, w0 * np.exp(2.0 * h0), V1, H1, W1, pair)
    reach = max(abs(v_range[0]), abs(v_range[1]))
    offsets = (np.arange(bases) - (bases - 1) / 2.0) * base_step
    core = (offsets[0] - reach, offsets[-1] + reach)
    local = reach + 12.0
    names = ("t1", "d", "p0", "p1", "q")
    if reps < 2:
        raise ValueError("need at least two replications")
    coarse_every = 4 if reps >= 8 else 1
    acc = {t: {k: [] for k in names} for t in grids}
    for r in range(reps):
        env = sample_window(core=core, guard=guard, seed=seed.child(r)).envelope
        for tag, (h0, W0, V1, H1, W1, pair) in grids.items():
            if tag == "coarse" and r % coarse_every:
                continue
            b_lo, b_hi, c_lo, c_hi = pair
            sums = dict.fromkeys(names, 0.0)
            for off in offsets:
                win = (off - local, off + local)
                # a test point is extreme iff it sits below the boundary
                Y0 = h0 < env.boundary(np.array([off]))[0]
                Y1 = H1 < env.boundary(V1 + off)
                lo0 = np.full(len(h0), np.inf)
                hi0 = np.full(len(h0), -np.inf)
                lo1 = np.full(len(H1), np.inf)
                hi1 = np.full(len(H1), -np.inf)
                if Y0.any():
                    lo0[Y0], hi0[Y0] = win_interval(np.full(Y0.sum(), off), h0[Y0], env, win)
                if Y1.any():
                    lo1[Y1], hi1[Y1] = win_interval(V1[Y1] + off, H1[Y1], env, win)
                lo0, hi0, lo1, hi1 = lo0 - off, hi0 - off, lo1 - off, hi1 - off
                X0 = _nonempty(np.maximum(lo0[:, None], b_lo), np.minimum(hi0[:, None], b_hi))
                X1 = _nonempty(np.maximum(lo1[None, :], c_lo), np.minimum(hi1[None, :], c_hi))
                D = (X0 & X1).astype(float) - np.outer(Y0, Y1)
                p0 = float(Y0 @ W0)
                p1 = float(Y1 @ W1)
                sums["t1"] += SQ2 * p0
                sums["d"] += float(W0 @ D @ W1)
                sums["p0"] += p0
                sums["p1"] += p1
                sums["q"] += p0 * p1
            for k in names:
                acc[tag][k].append(sums[k] / bases)
    out = {}
    for tag in grids:
        cols = [np.asarray(acc[tag][k]) for k in names]
        n = len(cols[0])
        tot = [c.sum() for c in cols]

        def stat(t1, d, p0, p1, q):
            return t1 + 2.0 * d + 2.0 * (q - p0 * p1)

        full = stat(*(t / n for t in tot))
        rep = stat(*((t - c) / (n - 1) for t, c in zip(tot, cols)))
        se = float(np.sqrt((n - 1) / n * np.sum((rep - rep.mean()) ** 2)))
        m = [t / n for t in tot]
        out[tag] = (float(full), se, m[0], 2.0 * (m[1] + m[4] - m[2] * m[3]))
    val, se, first, second = out["fine"]
    quad_err = abs(val - out["coarse"][0])
    budget = math.sqrt(se**2 + quad_err**2 + out["coarse"][1] ** 2)
    return Estimate(val, float(budget), reps,
                    {"mc_se": se, "quad_err": quad_err, "first": first, "second": second,
                     "coarse": out["coarse"][0], "coarse_se": out["coarse"][1]})


def window_score_sums(ws: WindowSample):
    """Sums of the vertex, edge and volume scores over the core of one draw."""
    env = ws.envelope
    pos = ws.core_positions()
    sp = env.span_integrals()
    m = len(env)
    xv = np.zeros(m)
    xv[:-1] += sp
    xv[1:] += sp
    return float(len(pos)), float(len(pos)), float(xv[pos].sum() / (2.0 * SQ2))


def sigma2_window(kind="xi0", half_width=100.0, reps=1000, seed=0, guard=GUARD) -> Estimate:
    """Limit variance density as ``Var(sum of scores over [-L, L]) / 2L``.

    By the Mecke formula this variance per unit length equals the quadrature
    form up to a boundary term of relative order ``1/L``.
    """
    seed = as_seed(seed)
    col = {"xi0": 0, "xi1": 1, "xiV": 2}[kind]
    S = np.empty(reps)
    for r in range(reps):
        ws = sample_window(core=(-half_width, half_width), guard=guard, seed=seed.child(r))
        S[r] = window_score_sums(ws)[col]
    from .stats import var_se
    var, se = var_se(S)
    L2 = 2.0 * half_width
    return Estimate(var / L2, se / L2, reps, {"mean_per_length": float(S.mean() / L2)})


# ---------------------------------------------------------------------------
# Dump
# ---------------------------------------------------------------------------
def festoon_dict(model: FestoonModel, resolution=0.05):
    if model.d != 2:
        raise DimensionUnsupported("festoon dump implemented for d=2")
    env = model.envelope
    grid = np.arange(env.v[0] - 1.0, env.v[-1] + 1.0 + resolution, resolution)
    faces = festoon_faces(model)
    return {
        "d": model.d,
        "points": {"v": model.v[:, 0].tolist(), "h": model.h.tolist()},
        "extreme": model.extreme.astype(bool).tolist(),
        "faces": [{"k": f.k, "points": list(f.points), "apex_v": float(f.apex_v[0]),
                   "apex_h": f.apex_h} for f in faces],
        "breakpoints": {"a": env.breaks.tolist(), "b": env.apex_h.tolist()},
        "boundary": {"v": grid.tolist(), "h": env.boundary(grid).tolist()},
    }


def dump_festoon(model: FestoonModel, path, resolution=0.05):
    with open(path, "w") as fh:
        json.dump(festoon_dict(model, resolution), fh, indent=1)
