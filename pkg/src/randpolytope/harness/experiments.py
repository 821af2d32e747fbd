"""Experiment runners.  Each returns a list of ResultRows.

Replication ``r`` at intensity ``lam`` always draws from the seed path
``(master, body tag, lam, r)``, so results do not depend on the thread count
or on which other experiments ran before.
"""
from __future__ import annotations

import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import stats as sps

from .. import festoon, floating, geometry, rescale, scores
from ..errors import ConfigError
from ..sampling import RunSeed, sample_homogeneous
from ..stats import jackknife, mean_se, var_se
from .config import ExperimentConfig
from .results import ResultRow

_CACHE: dict = {}


def _tag(text: str) -> int:
    return zlib.crc32(text.encode())


def _lam_key(lam: float) -> int:
    return int(round(math.log2(lam) * 1_000_000)) & 0xFFFFFFFF


def replicate_map(fn, items, threads=1):
    """Ordered map; the result order never depends on scheduling."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def load_body(name: str, d: int) -> geometry.SimplePolytope:
    try:
        return geometry.body_from_name(name, d)
    except ValueError:
        pass
    try:
        verts = np.loadtxt(name, delimiter=",", ndmin=2)
    except OSError:
        raise ConfigError(f"unknown body {name!r}") from None
    return geometry.SimplePolytope.from_vertices(verts, name=name)


# ---------------------------------------------------------------------------
# Euclidean replications
# ---------------------------------------------------------------------------
def euclidean_replicate(K, lam, seed, delta=None, volume_boxes=False):
    """One draw of ``K_lam``: f-vector, defect volume and vertex-box totals."""
    pts = sample_homogeneous(K, lam, seed).points
    hull = geometry.hull_2d(pts) if K.d == 2 else geometry.convex_hull(pts, K.d)
    f = np.array(geometry.face_counts(hull).f, dtype=float)
    defect = K.volume - geometry.hull_volume(hull, pts)
    delta = rescale.delta0(lam, K.d) if delta is None else delta
    verts = hull.vertex_indices
    owner = scores.owning_boxes(pts[verts], K, delta)
    inside = owner >= 0
    box_f0 = np.bincount(owner[inside], minlength=K.f0).astype(float)
    out = {"f": f, "defect": defect, "box_f0": box_f0}
    if volume_boxes:
        out["box_v"] = np.array([scores.xi_v_scores_vertex(pts, K, i, delta, lam, hull)[0].sum()
                                 for i in range(K.f0)])
    return out


def euclidean_batch(body, d, lam, reps, master, delta=None, threads=1, volume_boxes=False):
    """Stacked replications, cached per argument tuple."""
    key = (body, d, float(lam), int(reps), int(master), delta, volume_boxes)
    if key in _CACHE:
        return _CACHE[key]
    K = load_body(body, d)
    base = RunSeed(master).child(_tag(body), _lam_key(lam))
    t0 = time.perf_counter()
    draws = replicate_map(lambda r: euclidean_replicate(K, lam, base.child(r), delta, volume_boxes),
                          range(reps), threads)
    out = {k: np.array([x[k] for x in draws]) for k in draws[0]}
    out["wall_time"] = time.perf_counter() - t0
    _CACHE[key] = out
    return out


def clear_cache():
    _CACHE.clear()


def _exp_id(cfg: ExperimentConfig):
    return f"{cfg.kind}/{cfg.body}/d{cfg.d}"


# ---------------------------------------------------------------------------
# Variance scan
# ---------------------------------------------------------------------------
def run_variance_scan(cfg: ExperimentConfig):
    cfg.validate()
    eid = _exp_id(cfg)
    rows = []
    for lam in cfg.lambdas:
        b = euclidean_batch(cfg.body, cfg.d, lam, cfg.reps, cfg.seed, None, cfg.threads)
        wt = b["wall_time"]
        norm = math.log(lam) ** (cfg.d - 1)
        cols = {f"f{k}": b["f"][:, k] for k in range(cfg.d)}
        cols["vol"] = lam * b["defect"]
        for name, x in cols.items():
            m, m_se = mean_se(x)
            v, v_se = var_se(x)
            rows += [ResultRow(eid, lam, f"mean_{name}", m, m_se, cfg.reps, wt),
                     ResultRow(eid, lam, f"var_{name}", v, v_se, cfg.reps, wt),
                     ResultRow(eid, lam, f"var_{name}_per_log", v / norm, v_se / norm, cfg.reps, wt)]
    return rows


# ---------------------------------------------------------------------------
# Limit constants
# ---------------------------------------------------------------------------
def run_limit_constants(cfg: ExperimentConfig):
    """Festoon-side constants for d=2.

    ``sigma2_xi0`` comes from the window route and is the one used for
    ``F_0_2``; the quadrature route is reported next to it as a cross-check.
    """
    cfg.validate()
    if cfg.d != 2:
        raise ConfigError("limit constants are computed for d=2")
    eid = _exp_id(cfg)
    seed = RunSeed(cfg.seed).child(_tag("limit-constants"))
    inf = math.inf
    rows = []

    def timed(fn, *a, **kw):
        t0 = time.perf_counter()
        out = fn(*a, **kw)
        return out, time.perf_counter() - t0

    I, wt = timed(festoon.mean_score_integral, "xi0", cfg.mean_reps, seed.child(1), cfg.guard)
    rows.append(ResultRow(eid, inf, "mean_integral_xi0", I.value, I.se, I.reps, wt))
    rows.append(ResultRow(eid, inf, "mean_integral_xi0_gl", I.extra["gl"], I.extra["gl_se"], I.reps, wt))
    c = festoon.mean_prefactor(2)
    K = load_body(cfg.body, 2)
    rows.append(ResultRow(eid, inf, "mean_slope_prediction", K.f0 * c * I.value,
                          K.f0 * c * I.se, I.reps, wt))
    s0, wt = timed(festoon.sigma2_window, "xi0", cfg.window_half_width, cfg.reps,
                   seed.child(2), cfg.guard)
    rows.append(ResultRow(eid, inf, "sigma2_xi0", s0.value, s0.se, s0.reps, wt))
    q0, wtq = timed(festoon.sigma2, "xi0", cfg.quad_reps, seed.child(3), cfg.guard)
    rows.append(ResultRow(eid, inf, "sigma2_xi0_quad", q0.value, q0.se, q0.reps, wtq))
    pref = festoon.variance_prefactor(2)
    rows.append(ResultRow(eid, inf, "F_0_2", pref * s0.value, pref * s0.se, s0.reps, wt))
    rows.append(ResultRow(eid, inf, "F_0_2_quad", pref * q0.value, pref * q0.se, q0.reps, wtq))
    rows.append(ResultRow(eid, inf, "F_0_2_times_f0", K.f0 * pref * s0.value,
                          K.f0 * pref * s0.se, s0.reps, wt))
    if "xiV" in cfg.scores:
        sv, wt = timed(festoon.sigma2_window, "xiV", cfg.window_half_width, cfg.reps,
                       seed.child(2), cfg.guard)
        rows.append(ResultRow(eid, inf, "sigma2_xiV", sv.value, sv.se, sv.reps, wt))
        rows.append(ResultRow(eid, inf, "V_2", pref * sv.value, pref * sv.se, sv.reps, wt))
        rows.append(ResultRow(eid, inf, "V_2_times_f0", K.f0 * pref * sv.value,
                              K.f0 * pref * sv.se, sv.reps, wt))
    return rows


# ---------------------------------------------------------------------------
# Convergence in distribution
# ---------------------------------------------------------------------------
def corner_statistics(lam, seed, half_width=2.0):
    """Extreme count on ``|v| <= half_width`` and boundary height at 0 for the corner image."""
    d0 = rescale.delta0(lam, 2)
    Q0 = geometry.SimplePolytope.cube(2, side=d0)
    pts = sample_homogeneous(Q0, lam, seed).points
    pts = pts[np.all(pts > 0, axis=1)]
    v, h = rescale.forward(pts, lam)
    v, h = v[:, 0], h
    keep = rescale.window_contains(v[:, None], h, lam)
    v, h = v[keep], h[keep]
    if len(h) == 0:
        return 0.0, math.inf
    env = festoon.Envelope2D.build(v, h)
    count = float(np.sum(np.abs(env.v) <= half_width))
    return count, float(env.boundary(np.array([0.0]))[0])


def limit_statistics(seed, half_width=2.0, guard=festoon.GUARD):
    ws = festoon.sample_window(core=(-half_width, half_width), guard=guard, seed=seed)
    env = ws.envelope
    return float(len(ws.core_positions())), float(env.boundary(np.array([0.0]))[0])


def run_convergence(cfg: ExperimentConfig):
    cfg.validate()
    if cfg.d != 2:
        raise ConfigError("convergence experiment is implemented for d=2")
    eid = _exp_id(cfg)
    root = RunSeed(cfg.seed).child(_tag("convergence"))
    hw = cfg.count_half_width
    t0 = time.perf_counter()
    ref = np.array(replicate_map(lambda r: limit_statistics(root.child(0, r), hw, cfg.guard),
                                 range(cfg.reps), cfg.threads))
    t_ref = time.perf_counter() - t0
    rows = []
    for lam in cfg.lambdas:
        t0 = time.perf_counter()
        eu = np.array(replicate_map(lambda r: corner_statistics(lam, root.child(1, _lam_key(lam), r), hw),
                                    range(cfg.reps), cfg.threads))
        wt = time.perf_counter() - t0 + t_ref
        for j, name in enumerate(("count", "height")):
            ks = sps.ks_2samp(eu[:, j], ref[:, j], method="asymp")
            rows.append(ResultRow(eid, lam, f"ks_{name}", float(ks.statistic), 0.0, cfg.reps, wt))
            rows.append(ResultRow(eid, lam, f"ks_{name}_p", float(ks.pvalue), 0.0, cfg.reps, wt))
            m, se = mean_se(eu[:, j])
            rows.append(ResultRow(eid, lam, f"mean_{name}_corner", m, se, cfg.reps, wt))
    # calibration: limit against an independent limit sample, and a doubled guard
    t0 = time.perf_counter()
    alt = np.array(replicate_map(lambda r: limit_statistics(root.child(2, r), hw, 2 * cfg.guard),
                                 range(cfg.reps), cfg.threads))
    wt = time.perf_counter() - t0
    for j, name in enumerate(("count", "height")):
        ks = sps.ks_2samp(alt[:, j], ref[:, j], method="asymp")
        rows.append(ResultRow(eid, math.inf, f"ks_{name}_p_null", float(ks.pvalue), 0.0, cfg.reps, wt))
        m, se = mean_se(ref[:, j])
        rows.append(ResultRow(eid, math.inf, f"mean_{name}_limit", m, se, cfg.reps, t_ref))
        m, se = mean_se(alt[:, j])
        rows.append(ResultRow(eid, math.inf, f"mean_{name}_limit_guard2x", m, se, cfg.reps, wt))
    return rows


# ---------------------------------------------------------------------------
# Variance decomposition
# ---------------------------------------------------------------------------
def _remainder(Z, *Zi):
    vz = Z.var(ddof=1)
    return abs(vz - sum(z.var(ddof=1) for z in Zi)) / vz


def decomposition_rows(eid, lam, Z, Zi, wt):
    reps = len(Z)
    cols = [Zi[:, i] for i in range(Zi.shape[1])]
    vz, vz_se = var_se(Z)
    svi, svi_se = jackknife(lambda *c: sum(x.var(ddof=1) for x in c), *cols)
    ratio, ratio_se = jackknife(_remainder, Z, *cols)
    return [ResultRow(eid, lam, "var_Z", vz, vz_se, reps, wt),
            ResultRow(eid, lam, "sum_var_Zi", svi, svi_se, reps, wt),
            ResultRow(eid, lam, "remainder", vz - svi, math.hypot(vz_se, svi_se), reps, wt),
            ResultRow(eid, lam, "remainder_ratio", ratio, ratio_se, reps, wt)]


def cone_extreme_rate(K, lam, seeds, delta=None):
    """Fraction of draws in which every hull vertex in every vertex box is cone-extreme."""
    delta = rescale.delta0(lam, K.d) if delta is None else delta
    ok = 0
    for s in seeds:
        pts = sample_homogeneous(K, lam, s).points
        hull = geometry.hull_2d(pts) if K.d == 2 else geometry.convex_hull(pts, K.d)
        ok += all(scores.cone_extreme_in_box(pts, K, i, delta, hull) for i in range(K.f0))
    return ok / len(seeds)


def run_decomposition(cfg: ExperimentConfig):
    cfg.validate()
    if cfg.d != 2:
        raise ConfigError("decomposition experiment is implemented for d=2")
    eid = _exp_id(cfg)
    K = load_body(cfg.body, cfg.d)
    want_v = "xiV" in cfg.scores
    rows = []
    for lam in cfg.lambdas:
        b = euclidean_batch(cfg.body, cfg.d, lam, cfg.reps, cfg.seed, cfg.delta, cfg.threads,
                            volume_boxes=want_v)
        for r in decomposition_rows(eid + "/xi0", lam, b["f"][:, 0], b["box_f0"], b["wall_time"]):
            rows.append(r)
        if want_v:
            rows += decomposition_rows(eid + "/xiV", lam, lam * b["defect"], b["box_v"], b["wall_time"])
        t0 = time.perf_counter()
        base = RunSeed(cfg.seed).child(_tag(cfg.body), _lam_key(lam))
        n = min(cfg.diag_reps, cfg.reps)
        rate = cone_extreme_rate(K, lam, [base.child(r) for r in range(n)], cfg.delta)
        rows.append(ResultRow(eid, lam, "cone_extreme_rate", rate,
                              math.sqrt(rate * (1 - rate) / n), n, time.perf_counter() - t0))
    return rows


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------
def run_diagnostics(cfg: ExperimentConfig):
    """Boundary tail of the limit festoon, cone-extreme rate and annulus rate."""
    cfg.validate()
    if cfg.d != 2:
        raise ConfigError("diagnostics are implemented for d=2")
    eid = _exp_id(cfg)
    K = load_body(cfg.body, cfg.d)
    root = RunSeed(cfg.seed).child(_tag("diagnostics"))
    rows = []
    n = cfg.diag_reps
    t0 = time.perf_counter()
    H = np.array([limit_statistics(root.child(0, r), cfg.count_half_width, cfg.guard)[1]
                  for r in range(n)])
    wt = time.perf_counter() - t0
    for x in (0.0, 0.5, 1.0):
        p = float(np.mean(H > x))
        rows.append(ResultRow(eid, math.inf, f"boundary_tail_{x:g}", p, math.sqrt(p * (1 - p) / n), n, wt))
    for lam in cfg.lambdas:
        seeds = [root.child(1, _lam_key(lam), r) for r in range(n)]
        t0 = time.perf_counter()
        rate = cone_extreme_rate(K, lam, seeds, cfg.delta)
        rows.append(ResultRow(eid, lam, "cone_extreme_rate", rate, math.sqrt(rate * (1 - rate) / n),
                              n, time.perf_counter() - t0))
        if K.kind == "box":
            t0 = time.perf_counter()
            params = rescale.ScaleParams(lam, cfg.d)
            frac = []
            for s in seeds[: max(2, n // 10)]:
                pts = sample_homogeneous(K, lam, s).points
                hull = geometry.hull_2d(pts)
                frac.append(floating.annulus_rate(pts[hull.vertex_indices], K, params))
            m, se = mean_se(frac)
            rows.append(ResultRow(eid, lam, "annulus_rate", m, se, len(frac), time.perf_counter() - t0))
    return rows


RUNNERS = {
    "variance-scan": run_variance_scan,
    "limit-constants": run_limit_constants,
    "convergence": run_convergence,
    "decomposition": run_decomposition,
    "diagnostics": run_diagnostics,
}


def run_experiment(cfg: ExperimentConfig):
    return RUNNERS[cfg.kind](cfg)
