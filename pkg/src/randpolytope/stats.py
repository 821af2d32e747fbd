"""Small estimators shared by the Monte Carlo routines."""
from __future__ import annotations

import numpy as np


def jackknife(stat, *samples):
    """Delete-one jackknife of ``stat(*samples)``; returns ``(estimate, se)``.

    ``samples`` are aligned 1-d arrays (one entry per replication) and
    ``stat`` maps them to a scalar.
    """
    cols = [np.asarray(s, dtype=float) for s in samples]
    n = len(cols[0])
    if n < 2:
        raise ValueError("jackknife needs at least two replications")
    full = float(stat(*cols))
    mask = np.ones(n, dtype=bool)
    reps = np.empty(n)
    for i in range(n):
        mask[i] = False
        reps[i] = stat(*(c[mask] for c in cols))
        mask[i] = True
    se = np.sqrt((n - 1) / n * np.sum((reps - reps.mean()) ** 2))
    return full, float(se)


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


def var_se(x):
    """Sample variance with its jackknife standard error (closed form, O(n))."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("need at least three replications")
    s1, s2 = x.sum(), (x * x).sum()
    # delete-one variances
    m = (s1 - x) / (n - 1)
    v = ((s2 - x * x) - (n - 1) * m * m) / (n - 2)
    se = np.sqrt((n - 1) / n * np.sum((v - v.mean()) ** 2))
    return float(x.var(ddof=1)), float(se)


def covariance_se(x, y):
    """``mean(x y) - mean(x) mean(y)`` with an O(n) delete-one jackknife."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    full = float(np.mean(x * y) - x.mean() * y.mean())
    mx = (x.sum() - x) / (n - 1)
    my = (y.sum() - y) / (n - 1)
    mxy = ((x * y).sum() - x * y) / (n - 1)
    reps = mxy - mx * my
    se = np.sqrt((n - 1) / n * np.sum((reps - reps.mean()) ** 2))
    return full, float(se)
