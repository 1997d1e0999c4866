"""Statistics battery: OLS fits with R^2, Shapiro-Wilk normality, pooled t-test.

The Shapiro-Wilk implementation follows Royston's 1995 AS R94 approximation
(the algorithm behind mainstream statistical packages), valid for sample
sizes 3 through 5000. The two-sample t-test is the Student pooled-variance
form, df = n1 + n2 - 2, with a two-tailed p-value from the regularized
incomplete beta function.

Series classification fits a metric against the step index k and runs the
normality check on the raw metric values: a detector whose output is linear
in k produces an evenly spread sample that passes, while a display-quantized
staircase concentrates on a few repeated values and fails decisively,
whatever the step phase. (Residuals of a mid-series staircase jump pass
Shapiro-Wilk at these sample sizes, so residual testing cannot separate the
two detectors.) Constant series have no distribution to test and are
flagged degenerate, with R^2 reported as 0 by convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from scipy.special import betainc

__all__ = [
    "LinearFit",
    "SwResult",
    "TTestResult",
    "SeriesClassification",
    "linear_fit",
    "shapiro_wilk",
    "t_test",
    "classify_series",
]

_NORMAL = NormalDist()


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float
    n: int
    residuals: np.ndarray
    degenerate: bool = False  # constant y values; R^2 reported as 0 by convention


@dataclass(frozen=True)
class SwResult:
    w: float
    p_value: float
    n: int


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p_value: float
    n1: int
    n2: int


@dataclass(frozen=True)
class SeriesClassification:
    fit: LinearFit
    normality: SwResult | None
    normality_status: str  # tested | degenerate


def linear_fit(xs, ys) -> LinearFit:
    """Ordinary least squares of ys on xs via centered normal equations."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("xs and ys must be one-dimensional")
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} xs vs {y.size} ys")
    n = int(x.size)
    if n < 2:
        raise ValueError("need at least 2 points")
    xbar = x.mean()
    ybar = y.mean()
    dx = x - xbar
    dy = y - ybar
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("x values are all equal; no line can be fitted")
    slope = float(dx @ dy) / sxx
    intercept = float(ybar - slope * xbar)
    residuals = y - (slope * x + intercept)
    ss_res = float(residuals @ residuals)
    ss_tot = float(dy @ dy)
    # exact constant-y check: the float mean of identical values can be off
    # by an ulp, leaving ss_tot spuriously nonzero
    if ss_tot == 0.0 or bool(np.all(y == y[0])):
        return LinearFit(slope, intercept, 0.0, n, residuals, degenerate=True)
    r_squared = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return LinearFit(slope, intercept, r_squared, n, residuals)


def _poly(coeffs, x: float) -> float:
    """Evaluate a polynomial given coefficients from lowest to highest degree."""
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


# Royston 1995 polynomial coefficients, lowest degree first.
_SW_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_SW_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_SW_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_SW_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_SW_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_SW_C6 = (-0.4803, -0.082676, 0.0030302)
_SW_G = (-2.273, 0.459)
_SW_SMALL = 1e-19


def _sw_weights(n: int) -> np.ndarray:
    """Positive half-sample weights a_1..a_{n//2}, a_1 for the extreme pair."""
    n2 = n // 2
    if n == 3:
        return np.array([math.sqrt(0.5)])
    m = np.array([_NORMAL.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, n2 + 1)])
    summ2 = 2.0 * float(m @ m)
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a = np.empty(n2)
    a1 = _poly(_SW_C1, rsn) - m[0] / ssumm2
    if n > 5:
        a2 = _poly(_SW_C2, rsn) - m[1] / ssumm2
        fac = math.sqrt(
            (summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2) / (1.0 - 2.0 * a1**2 - 2.0 * a2**2)
        )
        a[0], a[1] = a1, a2
        a[2:] = -m[2:] / fac
    else:
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1**2))
        a[0] = a1
        a[1:] = -m[1:] / fac
    return a


def shapiro_wilk(samples) -> SwResult:
    """Shapiro-Wilk W and p per the AS R94 (Royston 1995) approximation.

    Valid for 3 <= n <= 5000; raises on samples outside that range or with
    zero range.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = int(x.size)
    if n < 3 or n > 5000:
        raise ValueError(f"shapiro_wilk requires 3 <= n <= 5000, got {n}")
    if x[-1] - x[0] <= 0.0:
        raise ValueError("all sample values are equal; W is undefined")
    a = _sw_weights(n)
    n2 = n // 2
    numerator = float(a @ (x[n - 1 : n - 1 - n2 : -1] - x[:n2]))
    dx = x - x.mean()
    w = numerator**2 / float(dx @ dx)
    w1 = 1.0 - w
    if w1 <= 0.0:
        return SwResult(w=1.0, p_value=1.0, n=n)
    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return SwResult(w=w, p_value=min(1.0, max(0.0, p)), n=n)
    y = math.log(w1)
    if n <= 11:
        gamma = _poly(_SW_G, float(n))
        if y >= gamma:
            return SwResult(w=w, p_value=_SW_SMALL, n=n)
        y = -math.log(gamma - y)
        mu = _poly(_SW_C3, float(n))
        sigma = math.exp(_poly(_SW_C4, float(n)))
    else:
        ln_n = math.log(n)
        mu = _poly(_SW_C5, ln_n)
        sigma = math.exp(_poly(_SW_C6, ln_n))
    p = 1.0 - _NORMAL.cdf((y - mu) / sigma)
    return SwResult(w=w, p_value=p, n=n)


def t_test(group_a, group_b) -> TTestResult:
    """Two-sample Student t-test with pooled variance, two-tailed p."""
    a = np.asarray(group_a, dtype=np.float64)
    b = np.asarray(group_b, dtype=np.float64)
    n1, n2 = int(a.size), int(b.size)
    if n1 < 2 or n2 < 2:
        raise ValueError("each group needs at least 2 values")
    da = a - a.mean()
    db = b - b.mean()
    df = n1 + n2 - 2
    pooled_var = (float(da @ da) + float(db @ db)) / df
    if pooled_var <= 0.0:
        raise ValueError("pooled variance is zero; t is undefined")
    t = (float(a.mean()) - float(b.mean())) / math.sqrt(pooled_var * (1.0 / n1 + 1.0 / n2))
    # two-tailed: P(|T_df| > |t|) via the regularized incomplete beta
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t=t, df=df, p_value=p, n1=n1, n2=n2)


def classify_series(ks, values) -> SeriesClassification:
    """Fit a metric series against step index k and test the values' normality."""
    ks = np.asarray(ks, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if ks.size < 3:
        raise ValueError("need at least 3 records to classify a series")
    if np.unique(ks).size != ks.size:
        raise ValueError("step indices must be distinct")
    fit = linear_fit(ks, values)
    if fit.degenerate:
        return SeriesClassification(fit=fit, normality=None, normality_status="degenerate")
    return SeriesClassification(
        fit=fit, normality=shapiro_wilk(values), normality_status="tested"
    )
