import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hexcast import geom, ingest
from hexcast.geom import BBox, GeoPoint, HexGridSpec, Projection, SquareGridSpec
from hexcast.ingest import DemandTensor, GranularitySpec, Hotspot, ScaleParams, SplitPlan, SynthConfig

HEADER = ",".join(ingest.TRIP_COLUMNS)
BBOX = BBox(104.0, 30.6, 104.1, 30.7)


def _csv(*rows):
    return "\n".join([HEADER, *rows]) + "\n"


# ---------------------------------------------------------------- parsing


def test_parse_header_only():
    res = ingest.parse_trips(io.StringIO(_csv()))
    assert len(res.trips) == 0 and res.n_skipped == 0


def test_parse_one_row():
    res = ingest.parse_trips(io.StringIO(_csv("a1,100,104.05,30.65,400,104.06,30.66")))
    (rec,) = list(res.trips)
    assert rec.order_id == "a1"
    assert rec.pickup_ts == 100 and rec.dropoff_ts == 400
    assert rec.pickup == GeoPoint(104.05, 30.65)
    assert rec.dropoff == GeoPoint(104.06, 30.66)


def test_parse_lenient_skips_and_counts():
    text = _csv("a,1,104,30,2,104,30", "b,1,104,30,2,104,30", "c,xx,104,30,2,104,30", "d,1,104,30,2,104,30")
    res = ingest.parse_trips(io.StringIO(text))
    assert len(res.trips) == 3
    assert res.n_skipped == 1
    assert [r.order_id for r in res.trips] == ["a", "b", "d"]


def test_parse_strict_aborts():
    with pytest.raises(ingest.DataError):
        ingest.parse_trips(io.StringIO(_csv("c,xx,104,30,2,104,30")), strict=True)


def test_parse_missing_column():
    with pytest.raises(ingest.SchemaError):
        ingest.parse_trips(io.StringIO("order_id,pickup_ts\n1,2\n"))


def test_parse_crlf_and_bytes():
    raw = _csv("a,1,104,30,2,104,30").replace("\n", "\r\n").encode()
    res = ingest.parse_trips(raw)
    assert len(res.trips) == 1


def test_parse_rejects_dropoff_before_pickup():
    res = ingest.parse_trips(io.StringIO(_csv("a,10,104,30,2,104,30")))
    assert res.n_skipped == 1


def test_trip_csv_roundtrip(tmp_path):
    cfg = _single_hotspot(rate=3.0, n_intervals=20)
    trips = ingest.synthesize_trips(cfg, seed=5)
    path = tmp_path / "t.csv"
    ingest.write_trips(trips, path)
    again = ingest.read_trips(path).trips
    assert again == trips


# -------------------------------------------------------------- synthetic


def _single_hotspot(rate=5.0, n_intervals=100, profile="constant"):
    return SynthConfig([Hotspot(GeoPoint(104.05, 30.65), sigma_m=300.0, rate=rate, profile=profile)],
                       n_intervals=n_intervals, weekend_factor=1.0)


def test_synth_zero_intensity_is_empty():
    assert len(ingest.synthesize_trips(_single_hotspot(profile="zero"), seed=1)) == 0
    assert len(ingest.synthesize_trips(_single_hotspot(rate=0.0), seed=1)) == 0


def test_synth_deterministic():
    cfg = _single_hotspot()
    assert ingest.synthesize_trips(cfg, 7) == ingest.synthesize_trips(cfg, 7)
    assert not ingest.synthesize_trips(cfg, 7) == ingest.synthesize_trips(cfg, 8)


def test_synth_poisson_total_within_3_sigma():
    # sum of 100 Poisson(5) draws: mean 500, sd sqrt(500)
    for seed in range(5):
        n = len(ingest.synthesize_trips(_single_hotspot(), seed))
        assert abs(n - 500) <= 3 * math.sqrt(500)


def test_synth_needs_hotspots():
    with pytest.raises(ingest.ConfigError):
        ingest.synthesize_trips(SynthConfig([]), 0)


def test_synth_daily_profile_peaks():
    hours = np.arange(0, 24, 0.25)
    p = ingest.two_peak_profile(hours)
    assert p[hours == 8.0] > p[hours == 3.0] * 3
    assert p[hours == 18.0] > p[hours == 13.0]


def test_synth_records_are_valid():
    trips = ingest.synthesize_trips(_single_hotspot(), 3)
    assert np.all(trips.dropoff_ts >= trips.pickup_ts)
    assert len(set(trips.order_id)) == len(trips)


# ------------------------------------------------------------ aggregation


def _one_trip_table(p_lonlat, d_lonlat, p_ts=60, d_ts=600):
    return ingest.TripTable(["x"], [p_ts], [p_lonlat[0]], [p_lonlat[1]], [d_ts], [d_lonlat[0]], [d_lonlat[1]])


def test_aggregate_single_trip():
    spec = GranularitySpec("hex", 500.0, 30, BBOX, start_ts=0, n_days=1)
    trips = _one_trip_table((104.05, 30.65), (104.07, 30.66))
    dep = ingest.aggregate_demand(trips, spec, "departure")
    arr = ingest.aggregate_demand(trips, spec, "arrival")
    assert dep.values.sum() == 1 and np.count_nonzero(dep.values) == 1
    assert arr.values.sum() == 1 and np.count_nonzero(arr.values) == 1
    assert dep.values[:, 0].sum() == 1


def test_aggregate_dropoff_outside_bbox():
    spec = GranularitySpec("hex", 500.0, 30, BBOX, start_ts=0, n_days=1)
    trips = _one_trip_table((104.05, 30.65), (105.0, 31.0))
    assert ingest.aggregate_demand(trips, spec, "departure").values.sum() == 1
    arr = ingest.aggregate_demand(trips, spec, "arrival")
    assert arr.values.sum() == 0 and arr.n_excluded == 1


def test_aggregate_cell_matches_hex_of():
    spec = GranularitySpec("hex", 400.0, 60, BBOX, start_ts=0, n_days=1)
    grid = spec.make_grid()
    trips = _one_trip_table((104.031, 30.672), (104.031, 30.672))
    dep = ingest.aggregate_demand(trips, spec, "departure")
    xy = geom.project(104.031, 30.672, Projection.for_bbox(BBOX))
    c = geom.hex_of(xy, grid)
    assert dep.values[int(grid.cell_index(c.q, c.r)), 0] == 1


def test_slot_count_arithmetic():
    grid = HexGridSpec(800.0, (0.0, 0.0), 21, 21)
    spec = GranularitySpec("hex", 800.0, 30, BBOX, start_ts=0, n_days=21)
    t = ingest.aggregate_demand(ingest.TripTable.empty(), spec, "departure", grid=grid)
    assert t.values.size == 21 * 21 * 21 * 48 == 444_528
    # 8 x 8 cells, 21 days, 90-minute intervals: the product is 21 504
    grid8 = HexGridSpec(2000.0, (0.0, 0.0), 8, 8)
    spec8 = GranularitySpec("hex", 2000.0, 90, BBOX, start_ts=0, n_days=21)
    t8 = ingest.aggregate_demand(ingest.TripTable.empty(), spec8, "departure", grid=grid8)
    assert t8.values.size == 8 * 8 * 21 * 16 == 21_504


@pytest.fixture(scope="module")
def city_trips():
    cfg = SynthConfig([Hotspot(GeoPoint(104.04, 30.64), 1500.0, 4.0),
                       Hotspot(GeoPoint(104.07, 30.67), 1000.0, 3.0, attraction=2.0)], n_days=2,
                      interval_min=15)
    return ingest.synthesize_trips(cfg, 11)


@pytest.mark.parametrize("shape", ["hex", "square"])
@pytest.mark.parametrize("kind", ["departure", "arrival"])
def test_aggregate_conservation(city_trips, shape, kind):
    spec = GranularitySpec(shape, 700.0, 30, BBOX, tz_offset=8 * 3600)
    t = ingest.aggregate_demand(city_trips, spec, kind)
    assert np.all(t.values >= 0)
    assert t.values.sum() + t.n_excluded == len(city_trips)
    # independent count of in-range endpoints
    ts, lon, lat = city_trips.endpoint(kind)
    t0, n_days = ingest.time_frame(city_trips, spec)
    in_time = (ts >= t0) & (ts < t0 + n_days * 86400)
    assert t.values.sum() == int((BBOX.contains(lon, lat) & in_time).sum())


def test_halving_interval_doubles_intervals(city_trips):
    fine = ingest.aggregate_demand(city_trips, GranularitySpec("hex", 700.0, 15, BBOX, 8 * 3600), "departure")
    coarse = ingest.aggregate_demand(city_trips, GranularitySpec("hex", 700.0, 30, BBOX, 8 * 3600), "departure")
    assert fine.n_intervals == 2 * coarse.n_intervals
    np.testing.assert_array_equal(fine.coarsen(2).values, coarse.values)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=4, max_size=40), st.integers(1, 4))
def test_coarsening_sums(counts, factor):
    grid = HexGridSpec(100.0, (0, 0), 1, 1)
    t = DemandTensor("departure", grid, np.array([counts]), 0, 15)
    c = t.coarsen(factor)
    n = len(counts) // factor
    assert c.values.shape == (1, n)
    for k in range(n):
        assert c.values[0, k] == sum(counts[k * factor:(k + 1) * factor])


@pytest.mark.parametrize("shape", ["hex", "square"])
def test_demand_file_roundtrip(tmp_path, city_trips, shape):
    spec = GranularitySpec(shape, 900.0, 60, BBOX, 8 * 3600)
    t = ingest.aggregate_demand(city_trips, spec, "arrival")
    path = tmp_path / "d.csv"
    ingest.write_demand(t, path)
    back = ingest.read_demand(path)
    np.testing.assert_array_equal(back.values, t.values)
    assert (back.kind, back.shape, back.t0, back.interval_min) == (t.kind, t.shape, t.t0, t.interval_min)
    assert back.grid == t.grid


# ---------------------------------------------------------------- samples


def test_build_samples_all_zero():
    grid = HexGridSpec(100.0, (0, 0), 3, 3)
    s = ingest.build_samples(DemandTensor("departure", grid, np.zeros((9, 10), dtype=np.int64), 0, 60), h=3)
    assert not s.inputs().any() and not s.targets.any()
    assert len(s) == 9 * (10 - 1)


def test_build_samples_sliding_window():
    grid = HexGridSpec(100.0, (0, 0), 1, 1)
    t = DemandTensor("departure", grid, np.array([[1, 2, 3, 4]]), 0, 60)
    s = ingest.build_samples(t, h=2, pad=False)
    x = s.inputs()
    assert len(s) == 2
    np.testing.assert_array_equal(x[:, :, 0], [[1, 2], [2, 3]])
    np.testing.assert_array_equal(s.targets, [3, 4])
    # a lone cell has no neighbours: everything off-centre is a zero virtual cell
    assert not x[:, :, 1:].any()


def test_build_samples_insufficient_history():
    grid = HexGridSpec(100.0, (0, 0), 1, 1)
    with pytest.raises(ingest.DataError):
        ingest.build_samples(DemandTensor("departure", grid, np.array([[1, 2]]), 0, 60), h=2, pad=False)


def test_build_samples_padded_origin_bijection():
    grid = HexGridSpec(100.0, (0, 0), 4, 3)
    rng = np.random.default_rng(0)
    t = DemandTensor("departure", grid, rng.integers(0, 5, (12, 7)), 0, 60)
    s = ingest.build_samples(t, h=3)
    assert len(s) == 12 * 6
    pairs = set(zip(s.cell.tolist(), s.t.tolist()))
    assert pairs == {(c, k) for c in range(12) for k in range(1, 7)}
    np.testing.assert_array_equal(s.targets, t.values[s.cell, s.t])
    # first target's history is zero padded before the series start
    first = np.flatnonzero(s.t == 1)[0]
    x = s.inputs([first])[0]
    assert not x[:2].any()
    assert x[2, 0] == t.values[s.cell[first], 0]


@pytest.mark.parametrize("grid", [HexGridSpec(100.0, (0, 0), 4, 3), SquareGridSpec(100.0, (0, 0), 4, 3)],
                         ids=["hex", "square"])
def test_targets_and_series_read_the_cell_itself(grid):
    vals = np.random.default_rng(1).integers(0, 9, (12, 6))
    s = ingest.build_samples(DemandTensor("departure", grid, vals, 0, 60), h=2)
    np.testing.assert_array_equal(s.targets, vals[s.cell, s.t])
    for c in range(12):
        np.testing.assert_array_equal(s.series(c), vals[c])
    # the last history step of every window holds the previous value of the cell
    np.testing.assert_array_equal(s.inputs()[:, -1, s.center], vals[s.cell, s.t - 1])


def test_corner_cell_local_map_zero_outside_grid():
    grid = HexGridSpec(100.0, (0, 0), 5, 5)
    vals = np.arange(1, 26, dtype=np.int64)[:, None] * np.ones((1, 3), dtype=np.int64)
    s = ingest.build_samples(DemandTensor("departure", grid, vals, 0, 60), h=1, pad=False)
    corner = int(grid.cell_index(0, 0))
    k = np.flatnonzero(s.cell == corner)[0]
    local = s.inputs([k])[0, 0]
    for idx, (dq, dr) in enumerate(geom.DEFAULT_LOCAL_INDEX.order):
        cid = int(grid.cell_index(dq, dr))
        if cid < 0:
            assert local[idx] == 0
        else:
            assert local[idx] == vals[cid, 0]


def test_square_local_map_layout():
    grid = SquareGridSpec(100.0, (0, 0), 7, 7)
    vals = np.arange(49, dtype=np.int64)[:, None] * np.ones((1, 2), dtype=np.int64) + 1
    s = ingest.build_samples(DemandTensor("departure", grid, vals, 0, 60), h=1, pad=False)
    center = int(grid.cell_index(3, 3))
    k = np.flatnonzero(s.cell == center)[0]
    m = s.inputs([k])[0, 0].reshape(5, 5)
    # top row of the matrix is north (row + 2), left column is west (col - 2)
    assert m[2, 2] == vals[center, 0]
    assert m[0, 0] == vals[int(grid.cell_index(5, 1)), 0]
    assert m[4, 4] == vals[int(grid.cell_index(1, 5)), 0]


# ---------------------------------------------------------------- scaling


def test_scale_endpoints_and_clip():
    p = ScaleParams(0.0, 859.0)
    np.testing.assert_array_equal(ingest.scale([0.0, 859.0], p), [0.0, 1.0])
    assert ingest.scale(900.0, p) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1000), st.floats(1, 1000))
def test_scale_roundtrip(y, span):
    p = ScaleParams(0.0, span)
    y = min(y, span)
    assert ingest.scale(ingest.scale(y, p), p, "inverse") == pytest.approx(y, abs=1e-9)


def test_scale_degenerate():
    with pytest.raises(ingest.DegenerateScaleError):
        ScaleParams(3.0, 3.0)
    with pytest.raises(ingest.DegenerateScaleError):
        ScaleParams.fit(np.zeros(5))
    with pytest.raises(ValueError):
        ingest.scale([np.inf], ScaleParams(0, 1), "inverse")


def test_scale_fit_pins_floor_at_zero():
    assert ScaleParams.fit([3, 7, 5]) == ScaleParams(0.0, 7.0)


# ----------------------------------------------------------------- splits


def test_split_g0():
    train, test = SplitPlan("G0").day_sets()
    assert train == list(range(1, 22)) and test == list(range(22, 31))


def test_split_g2_matches_partition_figure():
    train, test = SplitPlan("G2").day_sets()
    assert set(train) == set(range(1, 8)) | set(range(22, 29)) | set(range(15, 22))
    assert set(test) == set(range(8, 15)) | {29, 30}


@pytest.mark.parametrize("plan", ingest.standard_plans(), ids=lambda p: p.combination)
def test_split_partition_property(plan):
    train, test = plan.day_sets()
    assert not set(train) & set(test)
    assert set(train) | set(test) == set(range(1, 31))


def test_split_cv_by_day():
    grid = HexGridSpec(100.0, (0, 0), 2, 1)
    t = DemandTensor("departure", grid, np.ones((2, 30 * 4), dtype=np.int64), 0, 360)
    s = ingest.build_samples(t, h=2)
    tr, te = ingest.split_cv(s, SplitPlan("G1"))
    assert set(tr.days.tolist()) == set(range(8, 29))
    assert set(te.days.tolist()) == set(range(1, 8)) | {29, 30}
    assert len(tr) + len(te) == len(s)


def test_split_cv_needs_enough_days():
    grid = HexGridSpec(100.0, (0, 0), 1, 1)
    s = ingest.build_samples(DemandTensor("departure", grid, np.ones((1, 40), dtype=np.int64), 0, 360), h=2)
    with pytest.raises(ingest.DataError):
        ingest.split_cv(s, SplitPlan("G0"))


def test_unknown_split():
    with pytest.raises(ingest.ConfigError):
        SplitPlan("G7")
