"""Small statistics helpers shared by the feedback analysis and the harness."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class ExponentialFit(NamedTuple):
    rate: float
    intercept: float
    r_squared: float
    n_points: int


def fit_exponential(times, values, floor=None, min_points=10):
    """Least-squares fit of ``log|values| = intercept + rate * t``.

    Only the leading stretch of points lying above ``10 * floor`` is used,
    so a series that bottoms out at round-off does not bend the fit.  The
    default floor is ``eps * max|values|``.  Zeros count as below the floor.
    """
    t = np.asarray(times, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    if t.shape != v.shape:
        raise ValueError("times and values must have the same shape")
    if floor is None:
        floor = np.finfo(float).eps * (np.max(v) if v.size else 0.0)
    below = np.nonzero(~(v > 10 * floor))[0]
    stop = below[0] if below.size else v.size
    if stop < min_points:
        raise ValueError(f"only {stop} usable points above the floor, need {min_points}")
    t, y = t[:stop], np.log(v[:stop])
    rate, intercept = np.polyfit(t, y, 1)
    resid = y - (intercept + rate * t)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum(resid**2) / ss_tot
    return ExponentialFit(float(rate), float(intercept), float(r2), int(stop))


def fit_exponential_rate(times, values, floor=None):
    return fit_exponential(times, values, floor).rate


def describe(values, percentiles=(5, 25, 50, 75, 95)):
    v = np.asarray(values, dtype=float)
    out = {"mean": float(v.mean()), "median": float(np.median(v)), "min": float(v.min()), "max": float(v.max())}
    for p in percentiles:
        out[f"p{p}"] = float(np.percentile(v, p))
    return out
