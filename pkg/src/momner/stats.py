"""Multi-seed aggregation and the paired two-tailed t-test.

The p-value comes from the regularized incomplete beta function, evaluated
with a modified-Lentz continued fraction (relative tolerance 1e-10), so the
package needs no statistics dependency at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_LENTZ_TOL = 1e-10
_LENTZ_MAX_ITER = 500
_FPMIN = 1e-300


@dataclass(frozen=True)
class SeedAggregate:
    scores: tuple[float, ...]
    mean: float
    std: float            # sample (n-1) standard deviation; 0.0 for n == 1
    degenerate: bool      # fewer than two scores


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    alpha: float
    significant: bool
    degenerate: bool      # zero-variance differences


def aggregate(scores: Sequence[float]) -> SeedAggregate:
    if len(scores) == 0:
        raise ValueError("cannot aggregate zero scores")
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size < 2 or np.all(arr == arr[0]):
        std = 0.0  # constant input: rounding inside np.std would report ~1e-16
    else:
        std = float(arr.std(ddof=1))
    return SeedAggregate(scores=tuple(float(x) for x in arr),
                         mean=float(arr.mean()), std=std,
                         degenerate=arr.size < 2)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _LENTZ_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _LENTZ_TOL:
            return h
    raise RuntimeError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log(1.0 - x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_tailed_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def t_critical_two_tailed(alpha: float, df: int,
                          lo: float = 0.0, hi: float = 1e6) -> float:
    """|t| at which the two-tailed p equals alpha, by bisection."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_t_two_tailed_p(mid, df) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def paired_t_test(a: Sequence[float], b: Sequence[float],
                  alpha: float = 0.05) -> TTestResult:
    """Two-tailed paired t-test on per-seed score pairs.

    Zero-variance differences are flagged degenerate instead of producing
    NaN: significant iff the constant difference is nonzero, with p pinned
    to 0 or 1 accordingly.
    """
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    if xa.shape != xb.shape:
        raise ValueError(f"length mismatch: {xa.shape} vs {xb.shape}")
    n = xa.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = xa - xb
    mean = float(d.mean())
    df = n - 1
    if np.all(d == d[0]):  # constant differences: zero variance
        nonzero = d[0] != 0.0
        t = math.copysign(math.inf, d[0]) if nonzero else 0.0
        return TTestResult(t=t, df=df, p=0.0 if nonzero else 1.0, alpha=alpha,
                           significant=nonzero, degenerate=True)
    sd = float(d.std(ddof=1))
    t = mean / (sd / math.sqrt(n))
    p = student_t_two_tailed_p(t, df)
    return TTestResult(t=t, df=df, p=p, alpha=alpha,
                       significant=p < alpha, degenerate=False)
