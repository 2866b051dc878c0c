"""Trip records, demand aggregation, supervised samples, scaling and CV splits."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import geom
from .geom import BBox, GeoPoint, HexGridSpec, Projection, SquareGridSpec

log = logging.getLogger(__name__)

TRIP_COLUMNS = ("order_id", "pickup_ts", "pickup_lon", "pickup_lat", "dropoff_ts", "dropoff_lon", "dropoff_lat")
SECONDS_PER_DAY = 86400

DEFAULT_HEX_SIDES_M = (200, 500, 800, 1200, 1600, 2000)
DEFAULT_SQUARE_SIDES_M = (300, 800, 1300, 1900, 2600, 3200)
DEFAULT_INTERVALS_MIN = (15, 30, 45, 60, 90, 120)


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TripRecord:
    order_id: str
    pickup_ts: int
    pickup: GeoPoint
    dropoff_ts: int
    dropoff: GeoPoint


class TripTable:
    """Column store of trips; indexing and iteration yield :class:`TripRecord`."""

    def __init__(self, order_id: Sequence[str], pickup_ts, pickup_lon, pickup_lat, dropoff_ts, dropoff_lon,
                 dropoff_lat):
        self.order_id = list(order_id)
        self.pickup_ts = np.asarray(pickup_ts, dtype=np.int64)
        self.pickup_lon = np.asarray(pickup_lon, dtype=np.float64)
        self.pickup_lat = np.asarray(pickup_lat, dtype=np.float64)
        self.dropoff_ts = np.asarray(dropoff_ts, dtype=np.int64)
        self.dropoff_lon = np.asarray(dropoff_lon, dtype=np.float64)
        self.dropoff_lat = np.asarray(dropoff_lat, dtype=np.float64)
        n = len(self.order_id)
        for col in (self.pickup_ts, self.pickup_lon, self.pickup_lat, self.dropoff_ts, self.dropoff_lon,
                    self.dropoff_lat):
            if col.shape != (n,):
                raise ValueError("trip columns must have equal length")

    @classmethod
    def empty(cls) -> "TripTable":
        return cls([], [], [], [], [], [], [])

    @classmethod
    def from_records(cls, records: Iterable[TripRecord]) -> "TripTable":
        recs = list(records)
        return cls([r.order_id for r in recs], [r.pickup_ts for r in recs], [r.pickup.lon for r in recs],
                   [r.pickup.lat for r in recs], [r.dropoff_ts for r in recs], [r.dropoff.lon for r in recs],
                   [r.dropoff.lat for r in recs])

    def __len__(self) -> int:
        return len(self.order_id)

    def __getitem__(self, i: int) -> TripRecord:
        return TripRecord(self.order_id[i], int(self.pickup_ts[i]),
                          GeoPoint(float(self.pickup_lon[i]), float(self.pickup_lat[i])),
                          int(self.dropoff_ts[i]), GeoPoint(float(self.dropoff_lon[i]), float(self.dropoff_lat[i])))

    def __iter__(self) -> Iterator[TripRecord]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TripTable):
            return NotImplemented
        return (self.order_id == other.order_id
                and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in TRIP_COLUMNS[1:]))

    def endpoint(self, kind: str):
        """(ts, lon, lat) arrays of the pickup (departure) or dropoff (arrival) end."""
        if kind == "departure":
            return self.pickup_ts, self.pickup_lon, self.pickup_lat
        if kind == "arrival":
            return self.dropoff_ts, self.dropoff_lon, self.dropoff_lat
        raise ConfigError(f"unknown demand kind {kind!r}")


# ----------------------------------------------------------------- parsing


@dataclass
class ParseResult:
    trips: TripTable
    n_skipped: int
    errors: list[str] = field(default_factory=list)


def parse_trips(stream, strict: bool = False) -> ParseResult:
    """Read the trip CSV from a text or binary stream.

    Malformed rows are skipped and counted unless ``strict`` is set, in which
    case the first one raises :class:`DataError`.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, io.BufferedIOBase) or (hasattr(stream, "mode") and "b" in getattr(stream, "mode", "")):
        stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("trip file has no header") from None
    header = [h.strip().lstrip("﻿") for h in header]
    missing = [c for c in TRIP_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"trip file is missing columns: {', '.join(missing)}")
    pos = [header.index(c) for c in TRIP_COLUMNS]
    cols: list[list] = [[] for _ in TRIP_COLUMNS]
    skipped, errors = 0, []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        try:
            vals = [row[p].strip() for p in pos]
            oid = vals[0]
            pts, dts = int(vals[1]), int(vals[4])
            coords = [float(vals[i]) for i in (2, 3, 5, 6)]
            if not all(math.isfinite(c) for c in coords):
                raise ValueError("non-finite coordinate")
            if not (-180 <= coords[0] <= 180 and -90 <= coords[1] <= 90
                    and -180 <= coords[2] <= 180 and -90 <= coords[3] <= 90):
                raise ValueError("coordinate out of range")
            if dts < pts:
                raise ValueError("dropoff before pickup")
        except (ValueError, IndexError) as exc:
            msg = f"line {lineno}: {exc}"
            if strict:
                raise DataError(msg) from exc
            skipped += 1
            errors.append(msg)
            continue
        for col, v in zip(cols, (oid, pts, coords[0], coords[1], dts, coords[2], coords[3])):
            col.append(v)
    if skipped:
        log.warning("skipped %d malformed trip rows", skipped)
    return ParseResult(TripTable(*cols), skipped, errors)


def read_trips(path, strict: bool = False) -> ParseResult:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_trips(fh, strict=strict)


def write_trips(trips: TripTable, path_or_stream) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIP_COLUMNS)
        for i in range(len(trips)):
            w.writerow([trips.order_id[i], int(trips.pickup_ts[i]), f"{trips.pickup_lon[i]:.7f}",
                        f"{trips.pickup_lat[i]:.7f}", int(trips.dropoff_ts[i]), f"{trips.dropoff_lon[i]:.7f}",
                        f"{trips.dropoff_lat[i]:.7f}"])

    if hasattr(path_or_stream, "write"):
        _write(path_or_stream)
    else:
        with open(path_or_stream, "w", newline="", encoding="utf-8") as fh:
            _write(fh)


# --------------------------------------------------------------- synthetic


def two_peak_profile(hour: np.ndarray) -> np.ndarray:
    """Daily intensity shape: quiet night, ramp from 07:00, peaks 07-09 and 17-19."""
    hour = np.asarray(hour, dtype=float)
    base = 0.15 + 0.55 / (1.0 + np.exp(-(hour - 7.0) * 3.0)) - 0.5 / (1.0 + np.exp(-(hour - 22.0) * 1.5))
    morning = 0.9 * np.exp(-0.5 * ((hour - 8.0) / 0.8) ** 2)
    evening = 0.8 * np.exp(-0.5 * ((hour - 18.0) / 1.0) ** 2)
    return np.clip(base + morning + evening, 0.05, None)


@dataclass
class Hotspot:
    center: GeoPoint
    sigma_m: float = 800.0
    rate: float = 10.0  # expected departures per generation interval at profile 1
    attraction: float = 1.0  # relative share as a destination
    profile: str = "two_peak"  # or "constant"
    phase_h: float = 0.0  # shifts the daily profile


@dataclass
class SynthConfig:
    """Synthetic city. Weekday factor 1.108 applies to Fridays and Saturdays.

    ``volatility`` and ``day_sigma`` add a latent log-normal intensity process
    (AR(1) over generation intervals, per origin hotspot) and a per-day level
    shock; both default to 0, i.e. plain inhomogeneous Poisson demand.
    """

    hotspots: list[Hotspot]
    n_days: int = 7
    start_ts: int = 1477929600  # 2016-11-01 00:00 UTC+8 expressed in UTC seconds
    tz_offset: int = 8 * 3600
    interval_min: float = 5.0
    n_intervals: int | None = None
    weekend_factor: float = 1.108
    volatility: float = 0.0
    persistence: float = 0.95
    day_sigma: float = 0.0
    speed_mps: float = 8.0
    bbox: BBox | None = None

    @property
    def total_intervals(self) -> int:
        if self.n_intervals is not None:
            return self.n_intervals
        return int(round(self.n_days * 1440 / self.interval_min))


def _profile_values(h: Hotspot, hours: np.ndarray) -> np.ndarray:
    if h.profile == "constant":
        return np.ones_like(hours)
    if h.profile == "two_peak":
        return two_peak_profile((hours - h.phase_h) % 24.0)
    if h.profile == "zero":
        return np.zeros_like(hours)
    raise ConfigError(f"unknown profile {h.profile!r}")


def synthesize_trips(config: SynthConfig, seed: int) -> TripTable:
    """Poisson trips per (origin hotspot, destination hotspot, interval)."""
    if not config.hotspots:
        raise ConfigError("synthetic city needs at least one hotspot")
    rng = np.random.default_rng(seed)
    n_int = config.total_intervals
    dt = config.interval_min * 60.0
    starts = config.start_ts + np.arange(n_int) * dt
    local = starts + config.tz_offset
    hours = (local % SECONDS_PER_DAY) / 3600.0
    day_idx = (local // SECONDS_PER_DAY).astype(np.int64)
    # 1970-01-01 was a Thursday; weekday 0 = Monday
    weekday = (day_idx + 3) % 7
    day_factor = np.where((weekday == 4) | (weekday == 5), config.weekend_factor, 1.0)
    if config.day_sigma > 0:
        uniq, inv = np.unique(day_idx, return_inverse=True)
        shocks = np.exp(rng.normal(0.0, config.day_sigma, size=len(uniq)) - 0.5 * config.day_sigma ** 2)
        day_factor = day_factor * shocks[inv]

    hs = config.hotspots
    attraction = np.array([h.attraction for h in hs], dtype=float)
    if attraction.sum() <= 0:
        raise ConfigError("hotspot attractions must sum to a positive value")
    share = attraction / attraction.sum()
    lam = np.empty((n_int, len(hs), len(hs)))
    for o, h in enumerate(hs):
        origin_rate = h.rate * _profile_values(h, hours) * day_factor
        if config.volatility > 0:
            rho, sig = config.persistence, config.volatility
            eps = rng.normal(0.0, sig, size=n_int)
            z = np.empty(n_int)
            z[0] = eps[0] / math.sqrt(max(1e-12, 1 - rho ** 2))
            for t in range(1, n_int):
                z[t] = rho * z[t - 1] + eps[t]
            stationary_var = sig ** 2 / max(1e-12, 1 - rho ** 2)
            origin_rate = origin_rate * np.exp(z - 0.5 * stationary_var)
        lam[:, o, :] = origin_rate[:, None] * share[None, :]
    counts = rng.poisson(lam)
    total = int(counts.sum())
    if total == 0:
        return TripTable.empty()

    t_idx, o_idx, d_idx = np.nonzero(counts)
    reps = counts[t_idx, o_idx, d_idx]
    t_idx = np.repeat(t_idx, reps)
    o_idx = np.repeat(o_idx, reps)
    d_idx = np.repeat(d_idx, reps)

    ref = config.bbox.center if config.bbox is not None else hs[0].center
    proj = Projection(ref.lon, ref.lat)
    cx = np.array([geom.project(h.center.lon, h.center.lat, proj)[0] for h in hs])
    cy = np.array([geom.project(h.center.lon, h.center.lat, proj)[1] for h in hs])
    sig = np.array([h.sigma_m for h in hs])
    px = cx[o_idx] + rng.normal(size=total) * sig[o_idx]
    py = cy[o_idx] + rng.normal(size=total) * sig[o_idx]
    qx = cx[d_idx] + rng.normal(size=total) * sig[d_idx]
    qy = cy[d_idx] + rng.normal(size=total) * sig[d_idx]
    pickup_ts = np.floor(starts[t_idx] + rng.random(total) * dt).astype(np.int64)
    dist = np.hypot(qx - px, qy - py)
    travel = np.ceil(120.0 + dist * 1.3 / config.speed_mps * rng.uniform(0.8, 1.4, size=total)).astype(np.int64)
    plon, plat = proj.inverse(px, py)
    dlon, dlat = proj.inverse(qx, qy)
    order = np.lexsort((o_idx, pickup_ts))
    ids = [f"S{seed}-{k:08d}" for k in range(total)]
    return TripTable(ids, pickup_ts[order], np.round(plon[order], 7), np.round(plat[order], 7),
                     (pickup_ts + travel)[order], np.round(dlon[order], 7), np.round(dlat[order], 7))


# ------------------------------------------------------------- aggregation


@dataclass(frozen=True)
class GranularitySpec:
    shape: str  # "hex" | "square"
    spatial_m: float
    interval_min: int
    bbox: BBox
    tz_offset: int = 0
    start_ts: int | None = None  # local midnight of day 1; derived from data if None
    n_days: int | None = None

    def __post_init__(self):
        if self.shape not in ("hex", "square"):
            raise ConfigError(f"unknown partition shape {self.shape!r}")
        if not self.spatial_m > 0:
            raise ConfigError("spatial granularity must be positive")
        if self.interval_min <= 0 or 1440 % self.interval_min:
            raise ConfigError(f"interval {self.interval_min} min does not divide a day")

    @property
    def intervals_per_day(self) -> int:
        return 1440 // self.interval_min

    def make_grid(self):
        if self.shape == "hex":
            return geom.hex_grid_for_bbox(self.bbox, self.spatial_m)
        return geom.square_grid_for_bbox(self.bbox, self.spatial_m)


@dataclass
class DemandTensor:
    kind: str
    grid: HexGridSpec | SquareGridSpec
    values: np.ndarray  # int64 (n_cells, n_intervals)
    t0: int
    interval_min: int
    n_excluded: int = 0

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> str:
        return self.grid.shape

    @property
    def intervals_per_day(self) -> int:
        return 1440 // self.interval_min

    def coarsen(self, factor: int) -> "DemandTensor":
        """Merge ``factor`` consecutive intervals (trailing partial group dropped)."""
        n = self.n_intervals // factor
        v = self.values[:, :n * factor].reshape(self.n_cells, n, factor).sum(axis=2)
        return replace(self, values=v, interval_min=self.interval_min * factor)


def _local_midnight(ts: int, tz_offset: int) -> int:
    return ((ts + tz_offset) // SECONDS_PER_DAY) * SECONDS_PER_DAY - tz_offset


def time_frame(trips: TripTable, spec: GranularitySpec) -> tuple[int, int]:
    """(t0, n_days) for a spec, derived from pickups when unset."""
    if spec.start_ts is not None:
        t0 = int(spec.start_ts)
    elif len(trips):
        t0 = _local_midnight(int(trips.pickup_ts.min()), spec.tz_offset)
    else:
        t0 = 0
    if spec.n_days is not None:
        n_days = int(spec.n_days)
    elif len(trips):
        n_days = int((int(trips.pickup_ts.max()) - t0) // SECONDS_PER_DAY) + 1
    else:
        n_days = 1
    return t0, n_days


def aggregate_demand(trips: TripTable, spec: GranularitySpec, kind: str, grid=None) -> DemandTensor:
    """Count trip endpoints per (cell, interval).

    Endpoints outside the bbox, the grid extent or the time frame are excluded
    and counted in ``n_excluded``.
    """
    grid = grid if grid is not None else spec.make_grid()
    t0, n_days = time_frame(trips, spec)
    n_int = n_days * spec.intervals_per_day
    values = np.zeros((grid.n_cells, n_int), dtype=np.int64)
    if len(trips) == 0:
        return DemandTensor(kind, grid, values, t0, spec.interval_min, 0)
    ts, lon, lat = trips.endpoint(kind)
    proj = Projection.for_bbox(spec.bbox)
    inside = spec.bbox.contains(lon, lat)
    x, y = geom.project(lon, lat, proj)
    x, y = np.atleast_1d(x), np.atleast_1d(y)
    if spec.shape == "hex":
        q, r = geom.hex_of_many(x, y, grid)
        cell = grid.cell_index(q, r)
    else:
        row, col = geom.square_of_many(x, y, grid)
        cell = grid.cell_index(row, col)
    t = np.floor_divide(ts - t0, spec.interval_min * 60)
    ok = inside & (cell >= 0) & (t >= 0) & (t < n_int)
    np.add.at(values, (cell[ok], t[ok]), 1)
    return DemandTensor(kind, grid, values, t0, spec.interval_min, int((~ok).sum()))


def write_demand(tensor: DemandTensor, path, spec: GranularitySpec | None = None) -> None:
    """Text header lines ``# key=value`` followed by ``cell_q,cell_r,interval,count`` rows (non-zero only)."""
    coords = tensor.grid.cell_coords()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        meta = {
            "kind": tensor.kind,
            "shape": tensor.shape,
            "spatial_m": f"{tensor.grid.side_m:g}",
            "interval_min": tensor.interval_min,
            "t0": tensor.t0,
            "n_cells": tensor.n_cells,
            "n_intervals": tensor.n_intervals,
            "n_cols": tensor.grid.n_cols,
            "n_rows": tensor.grid.n_rows,
            "origin_x": repr(float(tensor.grid.origin[0])),
            "origin_y": repr(float(tensor.grid.origin[1])),
        }
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_q", "cell_r", "interval", "count"])
        cells, ints = np.nonzero(tensor.values)
        for c, t in zip(cells, ints):
            w.writerow([int(coords[c, 0]), int(coords[c, 1]), int(t), int(tensor.values[c, t])])


def read_demand(path) -> DemandTensor:
    meta: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
        else:
            body_start = i
            break
    try:
        shape = meta["shape"]
        side = float(meta["spatial_m"])
        origin = (float(meta["origin_x"]), float(meta["origin_y"]))
        n_cols, n_rows = int(meta["n_cols"]), int(meta["n_rows"])
        n_int = int(meta["n_intervals"])
    except KeyError as exc:
        raise SchemaError(f"{path}: demand header lacks {exc}") from None
    cls = HexGridSpec if shape == "hex" else SquareGridSpec
    grid = cls(side_m=side, origin=origin, n_cols=n_cols, n_rows=n_rows)
    values = np.zeros((grid.n_cells, n_int), dtype=np.int64)
    reader = csv.reader(lines[body_start + 1:])
    for row in reader:
        if not row:
            continue
        a, b, t, n = (int(v) for v in row)
        cell = grid.cell_index(a, b) if shape == "hex" else grid.cell_index(b, a)
        if int(cell) < 0:
            raise DataError(f"{path}: cell ({a}, {b}) outside grid extent")
        values[int(cell), t] = n
    return DemandTensor(meta["kind"], grid, values, int(meta["t0"]), int(meta["interval_min"]))


# ----------------------------------------------------------------- samples


def local_neighbor_index(grid) -> np.ndarray:
    """(n_cells, L) ids of each cell's local patch; -1 for virtual cells outside the grid.

    L = 19 (two-ring, local index order) for hexagons, 25 (5x5, row-major, north
    on top) for squares.
    """
    coords = grid.cell_coords()
    if grid.shape == "hex":
        offs = np.array(geom.DEFAULT_LOCAL_INDEX.order)
        q = coords[:, 0:1] + offs[None, :, 0]
        r = coords[:, 1:2] + offs[None, :, 1]
        return grid.cell_index(q, r)
    offs = np.array(geom.square_local_offsets())
    col = coords[:, 0:1] + offs[None, :, 1]
    row = coords[:, 1:2] + offs[None, :, 0]
    return grid.cell_index(row, col)


SQUARE_CENTER = geom.square_local_offsets().index((0, 0))


@dataclass
class SampleSet:
    """Supervised samples over one demand tensor.

    Sample ``k`` predicts interval ``t[k]`` of cell ``cell[k]`` from the local
    maps of intervals ``t[k]-h .. t[k]-1``; maps before the series start are zero.
    """

    h: int
    maps: np.ndarray  # (n_intervals, n_cells, L) raw counts
    cell: np.ndarray
    t: np.ndarray
    intervals_per_day: int
    shape: str
    kind: str = "departure"

    def __len__(self) -> int:
        return len(self.t)

    @property
    def center(self) -> int:
        """Position of the target cell itself within a local map."""
        return 0 if self.shape == "hex" else SQUARE_CENTER

    @property
    def targets(self) -> np.ndarray:
        return self.maps[self.t, self.cell, self.center]

    @property
    def days(self) -> np.ndarray:
        """1-based day of each target interval."""
        return self.t // self.intervals_per_day + 1

    @property
    def slots(self) -> np.ndarray:
        return self.t % self.intervals_per_day

    @property
    def local_size(self) -> int:
        return self.maps.shape[2]

    def inputs(self, sel=None) -> np.ndarray:
        """(n, h, L) history windows for the selected samples."""
        cell = self.cell if sel is None else self.cell[sel]
        t = self.t if sel is None else self.t[sel]
        steps = t[:, None] - self.h + np.arange(self.h)[None, :]
        valid = steps >= 0
        out = self.maps[np.where(valid, steps, 0), cell[:, None]]
        out[~valid] = 0.0
        return out

    def subset(self, sel) -> "SampleSet":
        return replace(self, cell=self.cell[sel], t=self.t[sel])

    def series(self, cell: int) -> np.ndarray:
        return self.maps[:, cell, self.center]


def build_samples(tensor: DemandTensor, h: int, pad: bool = True) -> SampleSet:
    """One sample per (cell, target interval); see :class:`SampleSet`.

    With ``pad`` every interval from 1 on is a target; without, targets start
    at ``h`` so every window is fully observed.
    """
    if h < 1:
        raise ConfigError("history length must be >= 1")
    n_int = tensor.n_intervals
    if not pad and n_int <= h:
        raise DataError(f"need more than {h} intervals of history, have {n_int}")
    nbr = local_neighbor_index(tensor.grid)
    vals = tensor.values.T.astype(np.float64)  # (n_int, n_cells)
    maps = np.where(nbr[None] >= 0, vals[:, np.maximum(nbr, 0)], 0.0)
    first = 1 if pad else h
    tt, cc = np.meshgrid(np.arange(first, n_int), np.arange(tensor.n_cells), indexing="ij")
    return SampleSet(h=h, maps=maps, cell=cc.reshape(-1), t=tt.reshape(-1),
                     intervals_per_day=tensor.intervals_per_day, shape=tensor.shape, kind=tensor.kind)


# ----------------------------------------------------------------- scaling


class DegenerateScaleError(ValueError):
    pass


@dataclass(frozen=True)
class ScaleParams:
    y_min: float
    y_max: float

    def __post_init__(self):
        if not self.y_max > self.y_min:
            raise DegenerateScaleError(f"y_max ({self.y_max}) must exceed y_min ({self.y_min})")

    @classmethod
    def fit(cls, targets) -> "ScaleParams":
        """Min-max from training targets with the floor pinned at 0."""
        y_max = float(np.max(targets)) if len(targets) else 0.0
        return cls(0.0, y_max)


def scale(values, params: ScaleParams, direction: str = "forward", clip: bool = True):
    values = np.asarray(values, dtype=np.float64)
    span = params.y_max - params.y_min
    if span <= 0:
        raise DegenerateScaleError("degenerate scale")
    if direction == "forward":
        out = (values - params.y_min) / span
        return np.clip(out, 0.0, 1.0) if clip else out
    if direction == "inverse":
        if not np.all(np.isfinite(values)):
            raise ValueError("inverse scaling needs finite inputs")
        return values * span + params.y_min
    raise ConfigError(f"unknown direction {direction!r}")


# ------------------------------------------------------------------ splits


@dataclass(frozen=True)
class SplitPlan:
    """Day-based train/test partition.

    G0 trains on days 1..n_train and tests on the rest. G1-G3 cut the training
    days into three consecutive parts and swap part k with the first |P_k|
    test days (the following week in the 21 + 9 layout).
    """

    combination: str = "G0"
    n_days: int = 30
    n_train: int = 21

    def __post_init__(self):
        if self.combination not in ("G0", "G1", "G2", "G3"):
            raise ConfigError(f"unknown split {self.combination!r}")
        if not 0 < self.n_train < self.n_days:
            raise ConfigError("split needs both training and test days")

    @property
    def parts(self) -> list[list[int]]:
        return [list(map(int, p)) for p in np.array_split(np.arange(1, self.n_train + 1), 3)]

    def day_sets(self) -> tuple[list[int], list[int]]:
        train = list(range(1, self.n_train + 1))
        test = list(range(self.n_train + 1, self.n_days + 1))
        if self.combination == "G0":
            return train, test
        k = int(self.combination[1]) - 1
        part = self.parts[k]
        if len(test) < len(part):
            raise ConfigError("not enough test days to swap a training part")
        swap = test[:len(part)]
        new_train = sorted([d for d in train if d not in part] + swap)
        new_test = sorted(part + test[len(part):])
        return new_train, new_test


def standard_plans() -> list[SplitPlan]:
    return [SplitPlan(c) for c in ("G0", "G1", "G2", "G3")]


def split_cv(samples: SampleSet, plan: SplitPlan) -> tuple[SampleSet, SampleSet]:
    days = samples.days
    if days.max(initial=0) < plan.n_days:
        raise DataError(f"split plan needs {plan.n_days} days, samples cover {int(days.max(initial=0))}")
    train_days, test_days = plan.day_sets()
    return samples.subset(np.isin(days, train_days)), samples.subset(np.isin(days, test_days))
