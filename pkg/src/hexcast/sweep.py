"""Experiment orchestration: per-split evaluation, cross-validation and granularity sweeps."""
from __future__ import annotations

import csv
import itertools
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import geom
from .geom import BBox, GeoPoint
from .ingest import (DataError, DegenerateScaleError, GranularitySpec, Hotspot, SampleSet, ScaleParams, SplitPlan,
                     SynthConfig, TripTable, aggregate_demand, build_samples, split_cv, synthesize_trips)
from .metrics import DegenerateRangeError, DegenerateSampleError, MetricsReport, compute_metrics, welch_t_test
from .models.registry import MODEL_SHAPES, ModelSpec, make_forecaster
from .models.training import TrainConfig

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("shape", "spatial_m", "interval_min", "kind", "model", "split", "rmse", "mape_x100", "nrmse",
                  "n_test", "n_mape_excluded", "train_s", "test_s")
KINDS = ("departure", "arrival")


def stable_seed(base: int, *key) -> int:
    """Seed derived from a run key; stable across processes (unlike hash())."""
    text = "|".join(str(k) for k in (base,) + key)
    return zlib.crc32(text.encode("utf-8"))


def _fmt(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return format(float(x), ".10g")


@dataclass
class ResultRow:
    shape: str
    spatial_m: float
    interval_min: int
    kind: str
    model: str
    split: str
    report: MetricsReport
    train_s: float = math.nan
    test_s: float = math.nan

    @property
    def key(self) -> tuple:
        return (self.shape, self.spatial_m, self.interval_min, self.kind, self.model, self.split)

    def cells(self, timing: bool = False) -> list[str]:
        r = self.report
        return [self.shape, _fmt(self.spatial_m), str(self.interval_min), self.kind, self.model, self.split,
                _fmt(r.rmse), _fmt(r.mape * 100.0), _fmt(r.nrmse), str(r.n_samples), str(r.n_mape_excluded),
                _fmt(self.train_s) if timing else "NA", _fmt(self.test_s) if timing else "NA"]


def write_results(rows, path, timing: bool = False) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for row in rows:
            w.writerow(row.cells(timing))


def read_results(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise DataError(f"{path}: unexpected results header {reader.fieldnames}")
        return list(reader)


# ------------------------------------------------------------ single split


def evaluate_split(samples: SampleSet, plan: SplitPlan, models, spec: ModelSpec | None = None, seed: int = 0,
                   key: tuple = ()) -> list[ResultRow]:
    """Train every model on the plan's training days and score it on its test days."""
    spec = spec or ModelSpec()
    train, test = split_cv(samples, plan)
    if len(train) == 0 or len(test) == 0:
        raise DataError(f"split {plan.combination} leaves an empty train or test set")
    scale_params = ScaleParams.fit(train.targets)
    y_all = np.concatenate([train.targets, test.targets])
    y_max, y_min = float(y_all.max()), float(y_all.min())
    rows = []
    for name in models:
        fc = make_forecaster(name, samples.shape, spec, stable_seed(seed, *key, name, plan.combination))
        t0 = time.perf_counter()
        fc.fit(train, scale_params)
        t1 = time.perf_counter()
        preds = fc.predict(test)
        t2 = time.perf_counter()
        report = compute_metrics(preds, test.targets, y_max, y_min)
        shape, spatial, interval, kind = key if key else (samples.shape, math.nan, 0, samples.kind)
        rows.append(ResultRow(shape, spatial, interval, kind, name, plan.combination, report, t1 - t0, t2 - t1))
        log.info("%s %s %s: rmse=%.4f mape=%.4f", key, name, plan.combination, report.rmse, report.mape)
    return rows


# ---------------------------------------------------------- cross-validation


@dataclass
class ModelSummary:
    model: str
    rmse_mean: float
    rmse_sd: float
    mape_mean: float
    mape_sd: float
    p_rmse: float = math.nan  # Welch p-value against the reference model
    p_mape: float = math.nan


@dataclass
class CVReport:
    rows: list[ResultRow]
    summaries: dict[str, ModelSummary]
    reference: str | None


def _pvalue(a, b) -> float:
    try:
        return welch_t_test(a, b).p
    except (DegenerateSampleError, ValueError):
        return math.nan


def _per_cell_errors(fc_preds: np.ndarray, test: SampleSet, metric: str) -> np.ndarray:
    """Per-cell RMSE or MAPE over the test samples (cells without a valid value dropped)."""
    out = []
    for cell in np.unique(test.cell):
        sel = test.cell == cell
        y, p = test.targets[sel], fc_preds[sel]
        if metric == "rmse":
            out.append(float(np.sqrt(np.mean((p - y) ** 2))))
        else:
            nz = y != 0
            if nz.any():
                out.append(float(np.mean(np.abs((p[nz] - y[nz]) / y[nz]))))
    return np.array(out)


def cross_validate(samples: SampleSet, models, plans, spec: ModelSpec | None = None, seed: int = 0,
                   reference: str | None = "hconvlstm", mode: str = "per_plan") -> CVReport:
    """Evaluate each model on each plan; mean and Sd. across plans; Welch p-values vs ``reference``.

    ``mode="per_plan"`` tests the per-plan metric values (n = number of plans);
    ``mode="per_cell"`` pools per-cell errors from every plan instead.
    """
    if len(plans) < 2:
        raise ValueError("cross-validation needs at least two plans")
    if mode not in ("per_plan", "per_cell"):
        raise ValueError(f"unknown t-test sample mode {mode!r}")
    spec = spec or ModelSpec()
    rows: list[ResultRow] = []
    cell_errors: dict[tuple[str, str], list[np.ndarray]] = {}
    for plan in plans:
        train, test = split_cv(samples, plan)
        scale_params = ScaleParams.fit(train.targets)
        y_all = np.concatenate([train.targets, test.targets])
        for name in models:
            fc = make_forecaster(name, samples.shape, spec, stable_seed(seed, name, plan.combination))
            t0 = time.perf_counter()
            fc.fit(train, scale_params)
            t1 = time.perf_counter()
            preds = fc.predict(test)
            t2 = time.perf_counter()
            rep = compute_metrics(preds, test.targets, float(y_all.max()), float(y_all.min()))
            rows.append(ResultRow(samples.shape, math.nan, 0, samples.kind, name, plan.combination, rep,
                                  t1 - t0, t2 - t1))
            if mode == "per_cell":
                for metric in ("rmse", "mape"):
                    cell_errors.setdefault((name, metric), []).append(_per_cell_errors(preds, test, metric))
    summaries = {}
    for name in models:
        mine = [r.report for r in rows if r.model == name]
        rm = np.array([r.rmse for r in mine])
        mp = np.array([r.mape for r in mine])
        summaries[name] = ModelSummary(name, float(rm.mean()), float(rm.std(ddof=1)),
                                       float(mp.mean()), float(mp.std(ddof=1)))
    if reference is not None and reference in summaries:
        for name, s in summaries.items():
            if name == reference:
                continue
            for metric in ("rmse", "mape"):
                if mode == "per_plan":
                    a = [getattr(r.report, metric) for r in rows if r.model == name]
                    b = [getattr(r.report, metric) for r in rows if r.model == reference]
                else:
                    a = np.concatenate(cell_errors[(name, metric)])
                    b = np.concatenate(cell_errors[(reference, metric)])
                setattr(s, f"p_{metric}", _pvalue(a, b))
    return CVReport(rows, summaries, reference)


# ------------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepConfig:
    """Granularity lists and data frame of a sweep."""

    bbox: BBox
    shapes: tuple[str, ...] = ("hex", "square")
    hex_sides_m: tuple[float, ...] = (200, 500, 800, 1200, 1600, 2000)
    square_sides_m: tuple[float, ...] = (300, 800, 1300, 1900, 2600, 3200)
    intervals_min: tuple[int, ...] = (15, 30, 45, 60, 90, 120)
    kinds: tuple[str, ...] = KINDS
    models: tuple[str, ...] = ("ha",)
    plans: tuple[SplitPlan, ...] = (SplitPlan("G0"),)
    tz_offset: int = 8 * 3600
    start_ts: int | None = None
    n_days: int | None = None

    def __post_init__(self):
        for name, seq in (("shapes", self.shapes), ("intervals", self.intervals_min), ("kinds", self.kinds),
                          ("models", self.models), ("plans", self.plans)):
            if not seq:
                raise ValueError(f"sweep needs a non-empty {name} list")

    def spatial_for(self, shape: str) -> tuple[float, ...]:
        return self.hex_sides_m if shape == "hex" else self.square_sides_m

    def granularities(self) -> list[tuple[str, float, int, str]]:
        """(shape, spatial_m, interval_min, kind) in canonical order."""
        out = []
        for shape in self.shapes:
            for spatial, interval, kind in itertools.product(self.spatial_for(shape), self.intervals_min, self.kinds):
                out.append((shape, spatial, interval, kind))
        return out


@dataclass
class SweepResult:
    rows: list[ResultRow] = field(default_factory=list)
    flagged: list[tuple[tuple, str]] = field(default_factory=list)  # (row key, reason)


def _run_granularity(trips: TripTable, cfg: SweepConfig, gran, spec: ModelSpec, seed: int):
    shape, spatial, interval, kind = gran
    gspec = GranularitySpec(shape, spatial, interval, cfg.bbox, cfg.tz_offset, cfg.start_ts, cfg.n_days)
    tensor = aggregate_demand(trips, gspec, kind)
    samples = build_samples(tensor, spec.h)
    rows, flagged = [], []
    for plan in cfg.plans:
        models = [m for m in cfg.models if shape in MODEL_SHAPES[m]]
        try:
            rows.extend(evaluate_split(samples, plan, models, spec, seed, key=gran))
        except (DataError, DegenerateScaleError, DegenerateRangeError) as exc:
            for m in models:
                flagged.append((gran + (m, plan.combination), str(exc)))
    return rows, flagged


def granularity_sweep(trips: TripTable, cfg: SweepConfig, spec: ModelSpec | None = None, seed: int = 0,
                      workers: int = 1) -> SweepResult:
    """One result row per (granularity, kind, model, split); unusable configurations are flagged, not fatal.

    Rows come back in canonical configuration order whatever the worker count.
    """
    spec = spec or ModelSpec()
    grans = cfg.granularities()
    if workers > 1 and len(grans) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_granularity, itertools.repeat(trips), itertools.repeat(cfg), grans,
                                  itertools.repeat(spec), itertools.repeat(seed)))
    else:
        parts = [_run_granularity(trips, cfg, g, spec, seed) for g in grans]
    result = SweepResult()
    for rows, flagged in parts:
        result.rows.extend(rows)
        result.flagged.extend(flagged)
    for key, reason in result.flagged:
        log.warning("flagged %s: %s", key, reason)
    return result


# ------------------------------------------------------- synthetic benchmark

CITY_CENTER = GeoPoint(104.0657, 30.6595)


def two_hotspot_city(n_days: int = 21, side_m: float = 800.0, n_cols: int = 9, n_rows: int = 9,
                     volatility: float = 0.25, day_sigma: float = 0.2, rate: float = 30.0,
                     interval_min: float = 5.0) -> tuple[SynthConfig, GranularitySpec, geom.HexGridSpec]:
    """Two demand hotspots inside an ``n_cols`` x ``n_rows`` hexagonal grid.

    Returns the trip generator config, the aggregation spec (30-min intervals)
    and the grid itself.
    """
    proj = geom.Projection(CITY_CENTER.lon, CITY_CENTER.lat)
    a = side_m
    width = 1.5 * a * (n_cols - 1)
    height = geom.SQRT3 * a * (n_rows - 1)
    grid = geom.HexGridSpec(side_m, (-width / 2, -height / 2), n_cols, n_rows)
    lon0, lat0 = proj.inverse(np.array([-width / 2 - a]), np.array([-height / 2 - a]))
    lon1, lat1 = proj.inverse(np.array([width / 2 + a]), np.array([height / 2 + a]))
    bbox = BBox(float(lon0[0]), float(lat0[0]), float(lon1[0]), float(lat1[0]))

    def at(dx, dy):
        lon, lat = proj.inverse(np.array([dx]), np.array([dy]))
        return GeoPoint(round(float(lon[0]), 7), round(float(lat[0]), 7))

    hotspots = [
        Hotspot(at(-0.22 * width, 0.15 * height), sigma_m=2.0 * a, rate=rate, attraction=1.0),
        Hotspot(at(0.25 * width, -0.2 * height), sigma_m=2.4 * a, rate=0.8 * rate, attraction=1.3, phase_h=1.0),
    ]
    synth = SynthConfig(hotspots, n_days=n_days, interval_min=interval_min, volatility=volatility,
                        day_sigma=day_sigma, bbox=bbox)
    gspec = GranularitySpec("hex", side_m, 30, bbox, synth.tz_offset, synth.start_ts, n_days)
    return synth, gspec, grid


def directional_spec() -> ModelSpec:
    """Reduced architecture for the desk-scale two-hotspot comparison.

    Two conv layers of 8 channels, no dropout, 15 epochs on at most 8192
    training windows; fits in a few minutes on one core.
    """
    return ModelSpec(layers=(8, 8), dropout_p=0.0, train=TrainConfig(epochs=15, max_train_samples=8192))


def directional_experiment(seed: int, models=("hconvlstm", "lstm", "ha"), spec: ModelSpec | None = None,
                           n_days: int = 21, n_train: int = 14) -> list[ResultRow]:
    """Train and score ``models`` on the two-hotspot city generated with ``seed``.

    Departure demand on the 9 x 9 hex grid at 30 min; the first ``n_train``
    days train, the rest test.
    """
    spec = spec or directional_spec()
    synth, gspec, grid = two_hotspot_city(n_days=n_days)
    tensor = aggregate_demand(synthesize_trips(synth, seed), gspec, "departure", grid=grid)
    rows = evaluate_split(build_samples(tensor, spec.h), SplitPlan("G0", n_days, n_train), models, spec, seed)
    return [replace(r, spatial_m=gspec.spatial_m, interval_min=gspec.interval_min) for r in rows]
