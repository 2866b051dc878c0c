"""Historical average and ARIMA(p, 1, q) baselines."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from ..ingest import SampleSet

log = logging.getLogger(__name__)


# -------------------------------------------------------- historical average


def ha_forecast(values: np.ndarray, train_days, intervals_per_day: int, cell: int, interval: int,
                weights=None) -> float:
    """Weighted mean of ``values[cell]`` at the same time-of-day slot over training days (1-based)."""
    slot = interval % intervals_per_day
    days = np.asarray(list(train_days), dtype=int)
    if days.size == 0:
        raise ValueError("historical average needs at least one training day")
    obs = values[cell, (days - 1) * intervals_per_day + slot].astype(float)
    w = np.ones_like(obs) if weights is None else np.asarray(weights, dtype=float)
    return float((obs * w).sum() / w.sum())


class HistoricalAverage:
    """Per (cell, time-of-day slot) mean of training targets."""

    def fit(self, train: SampleSet, scale_params=None) -> "HistoricalAverage":
        n_cells = train.maps.shape[1]
        key = train.cell * train.intervals_per_day + train.slots
        size = n_cells * train.intervals_per_day
        sums = np.bincount(key, weights=train.targets, minlength=size)
        counts = np.bincount(key, minlength=size)
        cell_sum = np.bincount(train.cell, weights=train.targets, minlength=n_cells)
        cell_cnt = np.bincount(train.cell, minlength=n_cells)
        cell_mean = np.divide(cell_sum, cell_cnt, out=np.zeros(n_cells), where=cell_cnt > 0)
        fallback = np.repeat(cell_mean, train.intervals_per_day)
        self.table = np.divide(sums, counts, out=fallback.copy(), where=counts > 0)
        self.intervals_per_day = train.intervals_per_day
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        return self.table[samples.cell * self.intervals_per_day + samples.slots]


# ----------------------------------------------------------------- ARIMA


@dataclass
class ArimaFit:
    p: int
    q: int
    ar: np.ndarray
    ma: np.ndarray
    ar_only: bool = False  # MA part dropped after a singular / non-invertible fit
    rank_deficient: bool = False

    def innovations(self, dy: np.ndarray) -> np.ndarray:
        """Residuals e_t = dy_t - sum(ar_i dy_{t-i}) - sum(ma_j e_{t-j}), zero start-up."""
        b = np.concatenate([[1.0], -self.ar])
        a = np.concatenate([[1.0], self.ma])
        return lfilter(b, a, dy)

    def predict_diffs(self, dy: np.ndarray) -> np.ndarray:
        """One-step predictions of dy[k] from dy[:k] for every k (length len(dy) + 1)."""
        e = self.innovations(dy)
        ext_dy = np.concatenate([dy, [0.0]])
        ext_e = np.concatenate([e, [0.0]])
        n = len(ext_dy)
        pred = np.zeros(n)
        for i, phi in enumerate(self.ar, start=1):
            pred[i:] += phi * ext_dy[:n - i]
        for j, theta in enumerate(self.ma, start=1):
            pred[j:] += theta * ext_e[:n - j]
        return pred


def _lagged(x: np.ndarray, lags: int, rows: np.ndarray) -> np.ndarray:
    return np.stack([x[rows - k] for k in range(1, lags + 1)], axis=1) if lags else np.zeros((len(rows), 0))


def _solve(design: np.ndarray, target: np.ndarray):
    if design.shape[1] == 0:
        return np.zeros(0), False
    coef, _, rank, sv = np.linalg.lstsq(design, target, rcond=None)
    singular = rank < design.shape[1] or (sv.size and sv[-1] <= 1e-10 * max(sv[0], 1e-300))
    return coef, bool(singular)


def fit_arma(dy: np.ndarray, p: int, q: int, rows: np.ndarray | None = None) -> ArimaFit:
    """Two-stage regression (Hannan-Rissanen) fit of ARMA(p, q) to ``dy``.

    Stage one fits a long autoregression and keeps its residuals as proxies
    for the unobserved shocks; stage two regresses dy_t on p lagged values and
    q lagged proxies. ``rows`` restricts both regressions to those target
    indices (lags may reach outside them).
    """
    dy = np.asarray(dy, dtype=np.float64)
    n = len(dy)
    m = max(p + q + 2, 12) if q else 0
    start = max(p, m + q)
    all_rows = np.arange(start, n)
    rows = all_rows if rows is None else np.intersect1d(np.asarray(rows), all_rows)
    if len(rows) <= p + q:
        raise ValueError(f"series too short for ARMA({p}, {q})")
    if q:
        long_rows = np.intersect1d(rows if rows is not None else all_rows, np.arange(m, n))
        long_rows = np.union1d(long_rows, np.arange(m, n)) if len(long_rows) <= m else long_rows
        a, _ = _solve(_lagged(dy, m, long_rows), dy[long_rows])
        proxy = np.zeros(n)
        idx = np.arange(m, n)
        proxy[idx] = dy[idx] - _lagged(dy, m, idx) @ a
        design = np.hstack([_lagged(dy, p, rows), _lagged(proxy, q, rows)])
        coef, singular = _solve(design, dy[rows])
        fit = ArimaFit(p, q, coef[:p], coef[p:], rank_deficient=singular)
        if not singular and _invertible(fit.ma):
            return fit
        log.debug("ARMA(%d,%d) fit singular or non-invertible; falling back to AR(%d)", p, q, p)
    coef, singular = _solve(_lagged(dy, p, rows), dy[rows])
    return ArimaFit(p, q, coef, np.zeros(0), ar_only=q > 0, rank_deficient=singular)


def _invertible(ma: np.ndarray) -> bool:
    if ma.size == 0:
        return True
    roots = np.roots(np.concatenate([[1.0], ma]))
    return bool(np.all(np.abs(roots) < 1.0 - 1e-6))


@dataclass
class ArimaForecast:
    value: float
    fit: ArimaFit


def arima_forecast(series, p: int, q: int) -> ArimaForecast:
    """One-step-ahead forecast of an ARIMA(p, 1, q) fitted to the whole series."""
    y = np.asarray(series, dtype=np.float64)
    if len(y) <= p + q + 1:
        raise ValueError("series too short for the requested orders")
    dy = np.diff(y)
    fit = fit_arma(dy, p, q)
    nxt = fit.predict_diffs(dy)[-1]
    return ArimaForecast(float(y[-1] + nxt), fit)


def rolling_forecasts(y: np.ndarray, fit: ArimaFit) -> np.ndarray:
    """yhat[t] for t = 1..len(y): one-step forecasts from y[:t] with fixed coefficients.

    Index 0 of the result corresponds to t = 1.
    """
    dy = np.diff(y)
    return y + fit.predict_diffs(dy)


def select_orders(y: np.ndarray, train_targets: np.ndarray, orders=range(1, 9), val_frac: float = 0.2):
    """Pick (p, q) by one-step RMSE on the last ``val_frac`` of the training targets."""
    train_targets = np.sort(np.asarray(train_targets))
    dy = np.diff(y)
    # target y[t] <-> dy[t-1]
    rows = train_targets[train_targets >= 1] - 1
    n_val = max(1, int(round(len(rows) * val_frac)))
    fit_rows, val_rows = rows[:-n_val], rows[-n_val:]
    best = None
    for p, q in itertools.product(orders, orders):
        try:
            fit = fit_arma(dy, p, q, fit_rows)
        except ValueError:
            continue
        pred = fit.predict_diffs(dy)[val_rows]
        rmse = float(np.sqrt(np.mean((pred - dy[val_rows]) ** 2)))
        if best is None or rmse < best[0] - 1e-12:
            best = (rmse, p, q)
    if best is None:
        raise ValueError("no ARIMA order could be fitted")
    return best[1], best[2]


class ArimaModel:
    """Per-cell ARIMA(p, 1, q) with (p, q) chosen on a validation tail of the training targets."""

    def __init__(self, orders=range(1, 9), val_frac: float = 0.2):
        self.orders = list(orders)
        self.val_frac = val_frac

    def fit(self, train: SampleSet, scale_params=None) -> "ArimaModel":
        self.fits: dict[int, ArimaFit] = {}
        for cell in np.unique(train.cell):
            y = train.series(cell)
            t = train.t[train.cell == cell]
            if not np.any(y):
                continue  # all-zero training series: predict() uses persistence
            try:
                p, q = select_orders(y, t, self.orders, self.val_frac)
                self.fits[int(cell)] = fit_arma(np.diff(y), p, q, np.sort(t[t >= 1]) - 1)
            except ValueError:
                log.debug("cell %d: ARIMA fit failed, using persistence", cell)
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        out = np.zeros(len(samples))
        for cell in np.unique(samples.cell):
            sel = samples.cell == cell
            y = samples.series(cell)
            t = samples.t[sel]
            fit = self.fits.get(int(cell))
            if fit is None:
                out[sel] = y[t - 1]
                continue
            out[sel] = rolling_forecasts(y, fit)[t - 1]
        return np.clip(out, 0.0, None)
