import re

import pytest

from hexcast import report, sweep
from hexcast.ingest import DataError
from hexcast.metrics import MetricsReport

SPATIAL = (200, 500, 800, 1200, 1600, 2000)
TEMPORAL = (15, 30, 45, 60, 90, 120)


def _write(path, values, kind="departure", shape="hex", model="ha", splits=("G0",)):
    rows = []
    for (s, t), v in values.items():
        for split in splits:
            rep = MetricsReport(v, v / 10.0, v / 100.0, 10, 0, 100.0, 0.0)
            rows.append(sweep.ResultRow(shape, float(s), t, kind, model, split, rep))
    sweep.write_results(rows, path)
    return path


def _full(fn):
    return {(s, t): fn(i, j) for i, s in enumerate(SPATIAL) for j, t in enumerate(TEMPORAL)}


def _svg(out_dir, metric="rmse", name="ha_hex_departure"):
    return (out_dir / f"{name}_{metric}.svg").read_text()


def _fills(svg):
    return re.findall(r'class="cell"[^>]*fill="(#[0-9a-f]{6})"', svg)


def _best_xy(svg):
    (m,) = re.findall(r'class="best" x="([\d.]+)" y="([\d.]+)"', svg)
    return float(m[0]), float(m[1])


def _cell_xy(i, j):
    return report.LEFT + report.CELL * j + 1.5, report.TOP + report.CELL * i + 1.5


def test_complete_panel(tmp_path):
    path = _write(tmp_path / "r.csv", _full(lambda i, j: 1.0 + (i - 2) ** 2 + (j - 1) ** 2))
    written = report.render_report(path, tmp_path / "out")
    assert [p.rsplit("/", 1)[-1] for p in written] == [f"ha_hex_departure_{m}.svg" for m in report.METRICS]
    svg = _svg(tmp_path / "out")
    assert len(_fills(svg)) == 36
    assert svg.count('class="missing"') == 0
    assert _best_xy(svg) == _cell_xy(2, 1)
    for label in ("200", "2000", "15", "120", "cell side (m)", "interval (min)"):
        assert f">{label}<" in svg


def test_all_equal_uniform_and_first_outlined(tmp_path):
    path = _write(tmp_path / "r.csv", _full(lambda i, j: 4.0))
    report.render_report(path, tmp_path / "out")
    svg = _svg(tmp_path / "out")
    assert set(_fills(svg)) == {report.color_for(0, 0, 0)}
    assert _best_xy(svg) == _cell_xy(0, 0)


def test_tie_goes_to_first_in_spatial_then_temporal_order(tmp_path):
    path = _write(tmp_path / "r.csv", _full(lambda i, j: 1.0 if (i, j) in ((3, 0), (1, 4)) else 2.0))
    report.render_report(path, tmp_path / "out")
    assert _best_xy(_svg(tmp_path / "out")) == _cell_xy(1, 4)


def test_missing_configuration_is_hatched(tmp_path):
    values = _full(lambda i, j: float(i + j + 1))
    del values[(800, 45)]
    path = _write(tmp_path / "r.csv", values)
    assert len(sweep.read_results(path)) == 35
    report.render_report(path, tmp_path / "out")
    svg = _svg(tmp_path / "out")
    assert len(_fills(svg)) == 35
    assert svg.count('class="missing"') == 1
    assert f'class="missing" x="{report.LEFT + 2 * report.CELL}" y="{report.TOP + 2 * report.CELL}"' in svg


def test_color_scale_endpoints():
    assert report.color_for(1.0, 1.0, 3.0) == "#%02x%02x%02x" % report.LOW_RGB
    assert report.color_for(3.0, 1.0, 3.0) == "#%02x%02x%02x" % report.HIGH_RGB
    mid = report.color_for(2.0, 1.0, 3.0)
    assert mid == "#%02x%02x%02x" % tuple(round((a + b) / 2) for a, b in zip(report.LOW_RGB, report.HIGH_RGB))


def test_values_averaged_over_splits(tmp_path):
    rows = []
    for split, v in (("G0", 1.0), ("G1", 3.0)):
        rows.append(sweep.ResultRow("hex", 800.0, 30, "arrival", "lstm", split, MetricsReport(v, 0.1, 0.1, 5, 0, 9, 0)))
    path = tmp_path / "r.csv"
    sweep.write_results(rows, path)
    report.render_report(path, tmp_path / "out")
    assert "800 m, 30 min: 2<" in _svg(tmp_path / "out", name="lstm_hex_arrival")


def test_one_panel_set_per_model_shape_kind(tmp_path):
    a = _write(tmp_path / "a.csv", {(800, 30): 1.0}, kind="arrival", shape="square", model="arima")
    b = tmp_path / "b.csv"
    rows = sweep.read_results(a)
    rows += sweep.read_results(_write(tmp_path / "c.csv", {(500, 15): 2.0}))
    with open(b, "w") as fh:
        fh.write(",".join(sweep.RESULT_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(r[c] for c in sweep.RESULT_COLUMNS) + "\n")
    written = report.render_report(b, tmp_path / "out")
    assert len(written) == 2 * len(report.METRICS)
    assert any(p.endswith("arima_square_arrival_nrmse.svg") for p in written)


def test_rendering_is_deterministic(tmp_path):
    path = _write(tmp_path / "r.csv", _full(lambda i, j: (7 * i + 3 * j) % 5 + 0.5))
    report.render_report(path, tmp_path / "a")
    report.render_report(path, tmp_path / "b")
    for m in report.METRICS:
        assert _svg(tmp_path / "a", m) == _svg(tmp_path / "b", m)


def test_bad_results_file(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x\n1\n")
    with pytest.raises(DataError):
        report.render_report(bad, tmp_path / "out")
