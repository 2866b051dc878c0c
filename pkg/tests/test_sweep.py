import math

import numpy as np
import pytest

from hexcast import ingest, sweep
from hexcast.geom import BBox, GeoPoint, HexGridSpec
from hexcast.ingest import DemandTensor, Hotspot, SplitPlan, SynthConfig
from hexcast.metrics import MetricsReport
from hexcast.models.registry import ModelSpec

SMALL_BBOX = BBox(104.04, 30.64, 104.08, 30.68)


@pytest.fixture(scope="module")
def small_trips():
    cfg = SynthConfig([Hotspot(GeoPoint(104.055, 30.655), 1200.0, 8.0),
                       Hotspot(GeoPoint(104.07, 30.67), 900.0, 5.0, attraction=1.5)],
                      n_days=3, interval_min=15, bbox=SMALL_BBOX)
    return ingest.synthesize_trips(cfg, 21)


def _periodic_samples(n_days=30, ipd=4, cells=2, h=2):
    day = np.array([[3, 5, 8, 2], [1, 1, 4, 6]])[:cells, :ipd]
    values = np.tile(day, (1, n_days))
    grid = HexGridSpec(100.0, (0.0, 0.0), cells, 1)
    return ingest.build_samples(DemandTensor("departure", grid, values, 0, 1440 // ipd), h=h)


# ---------------------------------------------------------------- helpers


def test_stable_seed():
    assert sweep.stable_seed(0, "hex", 800.0) == sweep.stable_seed(0, "hex", 800.0)
    assert sweep.stable_seed(0, "hex", 800.0) != sweep.stable_seed(1, "hex", 800.0)
    assert 0 <= sweep.stable_seed(5, "x") < 2 ** 32


def test_results_csv_roundtrip(tmp_path):
    rep = MetricsReport(1.5, 0.25, 0.01, 10, 2, 150.0, 0.0)
    rows = [sweep.ResultRow("hex", 800.0, 30, "departure", "ha", "G0", rep, 1.234, 0.5)]
    path = tmp_path / "r.csv"
    sweep.write_results(rows, path)
    text = path.read_text()
    assert text.splitlines()[0] == ",".join(sweep.RESULT_COLUMNS)
    assert text.splitlines()[1] == "hex,800,30,departure,ha,G0,1.5,25,0.01,10,2,NA,NA"
    back = sweep.read_results(path)
    assert back[0]["mape_x100"] == "25" and back[0]["train_s"] == "NA"
    sweep.write_results(rows, path, timing=True)
    assert sweep.read_results(path)[0]["train_s"] == "1.234"


def test_read_results_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ingest.DataError):
        sweep.read_results(path)


def test_nan_mape_written_as_na():
    rep = MetricsReport(0.0, math.nan, 0.0, 3, 3, 1.0, 0.0)
    assert sweep.ResultRow("hex", 1.0, 1, "arrival", "ha", "G0", rep).cells()[7] == "NA"


# ---------------------------------------------------------- evaluate_split


def test_evaluate_split_rows_and_range():
    s = _periodic_samples()
    rows = sweep.evaluate_split(s, SplitPlan("G0"), ["ha"], seed=1)
    (row,) = rows
    assert row.model == "ha" and row.split == "G0"
    assert row.report.rmse == 0.0 and row.report.mape == 0.0
    assert (row.report.y_max, row.report.y_min) == (8.0, 1.0)
    assert row.report.n_samples == 2 * 9 * 4


# ----------------------------------------------------------- cross-validate


def test_cross_validate_one_row_per_model_and_plan():
    s = _periodic_samples()
    rep = sweep.cross_validate(s, ["ha"], ingest.standard_plans(), reference=None)
    assert [(r.model, r.split) for r in rep.rows] == [("ha", g) for g in ("G0", "G1", "G2", "G3")]
    assert rep.summaries["ha"].rmse_sd == 0.0 and rep.summaries["ha"].mape_sd == 0.0


def test_cross_validate_sd_and_pvalues():
    rng = np.random.default_rng(0)
    grid = HexGridSpec(100.0, (0.0, 0.0), 3, 1)
    values = rng.poisson(5, size=(3, 30 * 4))
    s = ingest.build_samples(DemandTensor("departure", grid, values, 0, 360), h=2)
    spec = ModelSpec(arima_orders=(1, 2))
    rep = sweep.cross_validate(s, ["ha", "arima"], ingest.standard_plans(), spec, reference="ha")
    assert len(rep.rows) == 8
    ha = [r.report.rmse for r in rep.rows if r.model == "ha"]
    assert rep.summaries["ha"].rmse_sd == pytest.approx(np.std(ha, ddof=1), rel=1e-12)
    assert rep.summaries["ha"].rmse_mean == pytest.approx(np.mean(ha), rel=1e-12)
    assert math.isnan(rep.summaries["ha"].p_rmse)
    assert 0.0 <= rep.summaries["arima"].p_rmse <= 1.0
    cells = sweep.cross_validate(s, ["ha", "arima"], ingest.standard_plans()[:2], spec, reference="ha", mode="per_cell")
    assert 0.0 <= cells.summaries["arima"].p_mape <= 1.0


def test_cross_validate_needs_two_plans():
    with pytest.raises(ValueError):
        sweep.cross_validate(_periodic_samples(), ["ha"], [SplitPlan("G0")])
    with pytest.raises(ValueError):
        sweep.cross_validate(_periodic_samples(), ["ha"], ingest.standard_plans(), mode="bogus")


# ------------------------------------------------------------------ sweep


def _cfg(**kw):
    base = dict(bbox=SMALL_BBOX, models=("ha",), plans=(SplitPlan("G0", n_days=3, n_train=2),), n_days=3)
    base.update(kw)
    return sweep.SweepConfig(**base)


def test_sweep_default_lists_give_72_rows_per_shape(small_trips):
    res = sweep.granularity_sweep(small_trips, _cfg())
    assert not res.flagged
    for shape in ("hex", "square"):
        assert sum(r.shape == shape for r in res.rows) == 72 == 6 * 6 * 2
    assert [r.key[:4] for r in res.rows] == _cfg().granularities()


def test_sweep_range_grows_with_coarser_granularity(small_trips):
    res = sweep.granularity_sweep(small_trips, _cfg(shapes=("hex",), hex_sides_m=(200, 2000),
                                                    intervals_min=(15, 120), kinds=("departure",)))
    by = {(r.spatial_m, r.interval_min): r.report.y_max for r in res.rows}
    assert by[(2000, 120)] > by[(200, 15)]


def test_sweep_flags_unusable_configurations(small_trips):
    cfg = _cfg(shapes=("hex",), hex_sides_m=(800,), intervals_min=(60,),
               plans=(SplitPlan("G0", n_days=3, n_train=2), SplitPlan("G0", n_days=5, n_train=3)))
    res = sweep.granularity_sweep(small_trips, cfg)
    assert len(res.rows) == 2
    assert len(res.flagged) == 2
    assert all(key[-1] == "G0" for key, _ in res.flagged)
    assert len(res.rows) + len(res.flagged) == len(cfg.granularities()) * len(cfg.plans)


def test_sweep_skips_hex_only_models_on_squares(small_trips):
    cfg = _cfg(hex_sides_m=(800,), square_sides_m=(1300,), intervals_min=(60,), kinds=("departure",),
               models=("ha", "hcnn"), plans=(SplitPlan("G0", n_days=3, n_train=2),))
    spec = ModelSpec(layers=(2,), h=2)
    spec.train.epochs = 1
    res = sweep.granularity_sweep(small_trips, cfg, spec)
    assert [(r.shape, r.model) for r in res.rows] == [("hex", "ha"), ("hex", "hcnn"), ("square", "ha")]


def test_sweep_parallel_matches_serial(small_trips, tmp_path):
    cfg = _cfg(hex_sides_m=(500, 800), square_sides_m=(800,), intervals_min=(30, 60))
    serial = sweep.granularity_sweep(small_trips, cfg, workers=1)
    parallel = sweep.granularity_sweep(small_trips, cfg, workers=2)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    sweep.write_results(serial.rows, a)
    sweep.write_results(parallel.rows, b)
    assert a.read_bytes() == b.read_bytes()


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        sweep.SweepConfig(SMALL_BBOX, models=())


def test_two_hotspot_city_layout():
    synth, gspec, grid = sweep.two_hotspot_city(n_days=21)
    assert (grid.n_cols, grid.n_rows) == (9, 9)
    assert gspec.interval_min == 30 and gspec.shape == "hex" and gspec.n_days == 21
    assert len(synth.hotspots) == 2
    for h in synth.hotspots:
        assert synth.bbox.contains(h.center.lon, h.center.lat)
