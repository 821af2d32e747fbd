"""Result rows, regression on powers of ``log lambda`` and output files."""
from __future__ import annotations

import csv
import math
import platform
from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientPoints


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    lam: float
    statistic: str
    estimate: float
    se: float
    reps: int
    wall_time: float = 0.0

    def __post_init__(self):
        if not self.se >= 0 and not math.isnan(self.se):
            raise ValueError("standard error must be non-negative")


FIELDS = ("experiment_id", "lambda", "statistic", "estimate", "se", "reps", "wall_time")


def _fmt(x):
    return format(x, ".17g")


def write_results(rows, path, timing=True):
    """``results.csv``; with ``timing=False`` the wall-time column is zeroed."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(FIELDS)
        for r in rows:
            wr.writerow([r.experiment, _fmt(r.lam), r.statistic, _fmt(r.estimate), _fmt(r.se),
                         r.reps, _fmt(round(r.wall_time, 3) if timing else 0.0)])


def read_results(path):
    with open(path) as fh:
        rd = csv.DictReader(fh)
        return [ResultRow(r["experiment_id"], float(r["lambda"]), r["statistic"],
                          float(r["estimate"]), float(r["se"]), int(r["reps"]),
                          float(r["wall_time"])) for r in rd]


def write_meta(path, cfg, wall_times: dict):
    import numpy
    import scipy
    from importlib import metadata
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    lines = ["[config]"] + [f"{k} = {v}" for k, v in cfg.items()]
    lines += ["", "[versions]", f"python = {platform.python_version()}",
              f"numpy = {numpy.__version__}", f"scipy = {scipy.__version__}",
              f"randpolytope = {version}", "", "[wall_time_seconds]"]
    lines += [f"{k} = {v:.3f}" for k, v in wall_times.items()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def select(rows, statistic):
    return [r for r in rows if r.statistic == statistic]


def fit_log_power(rows, d):
    """Least squares ``y = slope (log lam)^{d-1} + intercept``; returns ``(slope, intercept, R2)``.

    ``rows`` are ResultRows of one statistic or ``(lam, y)`` pairs.
    """
    x, y, _ = _xy(rows, d)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ [slope, icpt]
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    if ss_tot == 0:
        slope = 0.0
    return float(slope), float(icpt), float(r2)


def slope_se(rows, d):
    """Standard error of the fitted slope propagated from independent row errors."""
    x, _, se = _xy(rows, d)
    c = (x - x.mean()) / ((x - x.mean()) ** 2).sum()
    return float(np.sqrt((c**2 * se**2).sum()))


def _xy(rows, d):
    rows = list(rows)
    if len(rows) < 3:
        raise InsufficientPoints("need at least three lambda points")
    if isinstance(rows[0], ResultRow):
        lam = np.array([r.lam for r in rows])
        y = np.array([r.estimate for r in rows])
        se = np.array([r.se for r in rows])
    else:
        arr = np.asarray(rows, dtype=float)
        lam, y = arr[:, 0], arr[:, 1]
        se = arr[:, 2] if arr.shape[1] > 2 else np.zeros(len(arr))
    return np.log(lam) ** (d - 1), y, se
