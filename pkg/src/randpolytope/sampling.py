"""Reproducible Poisson point processes.

Two flavours are provided: homogeneous processes of intensity ``lam`` on a
polytope ``K`` (Euclidean side) and the limit process on boxes of
``R^(d-1) x R`` with intensity ``sqrt(d) exp(d h) dh dv``.

Every draw takes a :class:`RunSeed`; identical ``(master, path)`` pairs give
byte-identical samples.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import RejectionBudgetExceeded
from . import rescale

REJECTION_BUDGET = 1000  # proposals allowed per accepted point


@dataclass(frozen=True)
class RunSeed:
    """Counter-based seed: a master seed plus a path of 32-bit labels."""

    master: int
    path: tuple = ()

    def child(self, *labels: int) -> "RunSeed":
        return RunSeed(self.master, self.path + tuple(int(x) & 0xFFFFFFFF for x in labels))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.master) & (2**64 - 1),
                                    spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))


def as_seed(seed) -> RunSeed:
    if isinstance(seed, RunSeed):
        return seed
    return RunSeed(int(seed))


@dataclass
class PoissonSample:
    lam: float
    region: str
    points: np.ndarray = field(repr=False)
    acceptance_rate: float = 1.0

    def __len__(self):
        return len(self.points)


def _uniform_simplex(rng, vertices, n):
    # spacings of sorted uniforms give flat barycentric weights
    d = len(vertices) - 1
    if d == 2:
        # fold the unit square onto the triangle u0 + u1 <= 1
        u0, u1 = rng.random(n), rng.random(n)
        flip = u0 + u1 > 1.0
        u0 = np.where(flip, 1.0 - u0, u0)
        u1 = np.where(flip, 1.0 - u1, u1)
        e = vertices[1:] - vertices[0]
        return vertices[0] + u0[:, None] * e[0] + u1[:, None] * e[1]
    u = np.sort(rng.random((n, d)), axis=1)
    w = np.diff(u, axis=1, prepend=0.0, append=1.0)
    return w @ vertices


def sample_homogeneous(K, lam: float, seed) -> PoissonSample:
    """Poisson process of intensity ``lam`` on the polytope ``K``."""
    if not lam > 0:
        raise ValueError("intensity must be positive")
    rng = as_seed(seed).generator()
    n = rng.poisson(lam * K.volume)
    kind = K.kind
    if kind == "box":
        lo, hi = K.bounds
        pts = lo + (hi - lo) * rng.random((n, K.d))
        return PoissonSample(lam, K.name, pts)
    if kind == "simplex":
        return PoissonSample(lam, K.name, _uniform_simplex(rng, K.vertices, n))
    lo, hi = K.bounds
    out = []
    got = proposed = 0
    batch = max(64, int(1.5 * n * np.prod(hi - lo) / K.volume))
    while got < n:
        cand = lo + (hi - lo) * rng.random((batch, K.d))
        proposed += batch
        keep = cand[K.contains(cand)]
        out.append(keep)
        got += len(keep)
        if proposed > REJECTION_BUDGET * max(n, 1):
            raise RejectionBudgetExceeded(f"rejection sampling on {K.name} exceeded budget")
    pts = np.concatenate(out)[:n] if out else np.empty((0, K.d))
    return PoissonSample(lam, K.name, pts, acceptance_rate=got / max(proposed, 1))


# ---------------------------------------------------------------------------
# Limit process
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LimitWindow:
    """Spatial box ``[lo, hi]`` (or a ball of radius ``L``) times ``[h_min, h_max]``."""

    lo: tuple
    hi: tuple
    h_min: float
    h_max: float
    ball: bool = False

    def __post_init__(self):
        if np.any(np.asarray(self.hi) <= np.asarray(self.lo)):
            raise ValueError("empty spatial window")
        if not self.h_min <= self.h_max:
            raise ValueError("h_min must not exceed h_max")

    @classmethod
    def centered(cls, L: float, h_min: float, h_max: float, d: int = 2, ball=False):
        if not L > 0:
            raise ValueError("L must be positive")
        return cls((-L,) * (d - 1), (L,) * (d - 1), h_min, h_max, ball)

    @property
    def spatial_volume(self) -> float:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if self.ball:
            k = len(lo)
            from math import gamma, pi
            r = (hi[0] - lo[0]) / 2
            return pi ** (k / 2) / gamma(k / 2 + 1) * r**k
        return float(np.prod(hi - lo))


def limit_mass(spatial_volume, h_min, h_max, d) -> float:
    """``sqrt(d) * vol * (e^{d h_max} - e^{d h_min}) / d``."""
    return np.sqrt(d) * spatial_volume * (np.exp(d * h_max) - np.exp(d * h_min)) / d


def sample_limit_process(w: LimitWindow, d: int, seed):
    """Draw the limit process on a window; returns ``(v, h)`` arrays."""
    rng = as_seed(seed).generator()
    mean = limit_mass(w.spatial_volume, w.h_min, w.h_max, d)
    n = rng.poisson(mean) if mean > 0 else 0
    lo, hi = np.asarray(w.lo, float), np.asarray(w.hi, float)
    if w.ball:
        c, r = (lo + hi) / 2, (hi[0] - lo[0]) / 2
        g = rng.standard_normal((n, d - 1))
        g /= np.linalg.norm(g, axis=1, keepdims=True) if n else 1.0
        v = c + r * g * rng.random((n, 1)) ** (1.0 / (d - 1))
    else:
        v = lo + (hi - lo) * rng.random((n, d - 1))
    a, b = np.exp(d * w.h_min), np.exp(d * w.h_max)
    h = np.log(a + rng.random(n) * (b - a)) / d
    return v, h


def restrict_to_Wlambda(v, h, lam, d=None):
    keep = rescale.window_contains(v, h, lam, d)
    return np.asarray(v)[keep], np.asarray(h)[keep]


# ---------------------------------------------------------------------------
# dumps
# ---------------------------------------------------------------------------
def write_points_csv(path, points=None, v=None, h=None):
    """Euclidean dump (``x0..``) or rescaled dump (``v0.., h``), 17 digits."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        if points is not None:
            pts = np.atleast_2d(points)
            wr.writerow([f"x{i}" for i in range(pts.shape[1])])
            rows = pts
        else:
            v = np.atleast_2d(v)
            wr.writerow([f"v{i}" for i in range(v.shape[1])] + ["h"])
            rows = np.column_stack([v, h])
        for r in rows:
            wr.writerow([format(x, ".17g") for x in r])


def read_points_csv(path):
    with open(path) as fh:
        rd = csv.reader(fh)
        header = next(rd)
        data = np.array([[float(x) for x in r] for r in rd], dtype=float)
    if data.size == 0:
        data = data.reshape(0, len(header))
    if header[-1] == "h":
        return {"v": data[:, :-1], "h": data[:, -1]}
    return {"points": data}
