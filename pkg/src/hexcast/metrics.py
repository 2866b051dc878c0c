"""Error metrics and Welch's two-sample t-test."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


class DegenerateRangeError(ValueError):
    pass


class DegenerateSampleError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mape: float  # fraction; nan when every target is 0
    nrmse: float
    n_samples: int
    n_mape_excluded: int
    y_max: float
    y_min: float

    def as_dict(self) -> dict:
        return asdict(self)


def rmse(preds, targets) -> float:
    d = np.asarray(preds, dtype=np.float64) - np.asarray(targets, dtype=np.float64)
    return float(np.sqrt(np.mean(d * d)))


def mape(preds, targets) -> tuple[float, int]:
    """(mean |(p - y) / y| over y != 0, number of excluded zero targets)."""
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    nz = y != 0
    if not nz.any():
        return math.nan, int(y.size)
    return float(np.mean(np.abs((p[nz] - y[nz]) / y[nz]))), int(y.size - nz.sum())


def compute_metrics(preds, targets, y_max: float, y_min: float) -> MetricsReport:
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1 or p.size == 0:
        raise ValueError(f"preds {p.shape} and targets {y.shape} must be equal-length non-empty vectors")
    if not y_max > y_min:
        raise DegenerateRangeError(f"demand range is empty (y_max={y_max}, y_min={y_min})")
    r = rmse(p, y)
    m, excluded = mape(p, y)
    return MetricsReport(r, m, r / (y_max - y_min), int(y.size), excluded, float(y_max), float(y_min))


# ------------------------------------------------------------ t distribution


def _betacf(a: float, b: float, x: float, tol: float = 1e-16, max_iter: int = 10000) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta I_x(a, b) for a, b > 0, 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("betainc needs 0 <= x <= 1")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    # the fraction converges fast for x < (a + 1) / (a + b + 2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


def t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return min(1.0, betainc(0.5 * df, 0.5, df / (df + t * t)))


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float


def welch_t_test(sample_a, sample_b) -> TTestResult:
    """Two-sided Welch test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va == 0 and vb == 0:
        raise DegenerateSampleError("both samples have zero variance")
    se2 = va + vb
    t = float((a.mean() - b.mean()) / math.sqrt(se2))
    df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    return TTestResult(t, float(df), t_two_sided_p(t, df))
