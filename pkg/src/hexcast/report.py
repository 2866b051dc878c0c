"""SVG heatmaps of sweep results: spatial granularity x temporal granularity.

Colour scale: linear interpolation from LOW_RGB (panel minimum) to HIGH_RGB
(panel maximum); an all-equal panel is drawn in LOW_RGB. The minimum cell is
outlined (ties go to the first cell in (spatial, temporal) order) and missing
configurations are hatched. Values are averaged over splits.
"""
from __future__ import annotations

import math
import os
from collections import defaultdict

from .sweep import read_results

METRICS = ("rmse", "mape_x100", "nrmse")
LOW_RGB = (255, 247, 236)
HIGH_RGB = (127, 0, 0)
CELL = 56
LEFT, TOP = 90, 50


def color_for(value: float, lo: float, hi: float) -> str:
    t = 0.0 if hi <= lo else (value - lo) / (hi - lo)
    rgb = [round(a + (b - a) * t) for a, b in zip(LOW_RGB, HIGH_RGB)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _num(s: str) -> float:
    return float(s)


def _label(x: float) -> str:
    return format(x, "g")


def panel_svg(title: str, spatial: list[float], temporal: list[float], values: dict) -> str:
    """values maps (spatial, temporal) -> metric; absent keys are hatched."""
    width = LEFT + CELL * len(temporal) + 20
    height = TOP + CELL * len(spatial) + 60
    present = [(s, t) for s in spatial for t in temporal if (s, t) in values]
    lo = min((values[k] for k in present), default=0.0)
    hi = max((values[k] for k in present), default=0.0)
    best = next((k for k in present if values[k] == lo), None)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        '<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" '
        'patternTransform="rotate(45)"><rect width="6" height="6" fill="#ffffff"/>'
        '<line x1="0" y1="0" x2="0" y2="6" stroke="#888888" stroke-width="2"/></pattern></defs>',
        f'<text x="{width / 2:g}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{LEFT + CELL * len(temporal) / 2:g}" y="{height - 12}" text-anchor="middle">interval (min)</text>',
        f'<text x="14" y="{TOP + CELL * len(spatial) / 2:g}" text-anchor="middle" '
        f'transform="rotate(-90 14 {TOP + CELL * len(spatial) / 2:g})">cell side (m)</text>',
    ]
    for j, t in enumerate(temporal):
        out.append(f'<text x="{LEFT + CELL * j + CELL / 2:g}" y="{TOP + CELL * len(spatial) + 16}" '
                   f'text-anchor="middle">{_label(t)}</text>')
    for i, s in enumerate(spatial):
        y = TOP + CELL * i
        out.append(f'<text x="{LEFT - 6}" y="{y + CELL / 2 + 4:g}" text-anchor="end">{_label(s)}</text>')
        for j, t in enumerate(temporal):
            x = LEFT + CELL * j
            if (s, t) in values:
                v = values[(s, t)]
                out.append(f'<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                           f'fill="{color_for(v, lo, hi)}"><title>{_label(s)} m, {_label(t)} min: {v:.6g}</title></rect>')
                out.append(f'<text x="{x + CELL / 2:g}" y="{y + CELL / 2 + 4:g}" text-anchor="middle" '
                           f'font-size="10">{v:.3g}</text>')
            else:
                out.append(f'<rect class="missing" x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                           f'fill="url(#hatch)"/>')
    if best is not None:
        i, j = spatial.index(best[0]), temporal.index(best[1])
        out.append(f'<rect class="best" x="{LEFT + CELL * j + 1.5:g}" y="{TOP + CELL * i + 1.5:g}" '
                   f'width="{CELL - 3}" height="{CELL - 3}" fill="none" stroke="#000000" stroke-width="3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_report(results_path, out_dir, metrics=METRICS) -> list[str]:
    """Write one heatmap per (model, shape, kind, metric); returns the file paths in write order."""
    rows = read_results(results_path)
    # axes: every spatial / temporal value seen for the shape anywhere in the file
    spatial_axis: dict[str, set] = defaultdict(set)
    temporal_axis: dict[str, set] = defaultdict(set)
    acc: dict[tuple, list] = defaultdict(list)
    for r in rows:
        shape = r["shape"]
        s, t = _num(r["spatial_m"]), _num(r["interval_min"])
        spatial_axis[shape].add(s)
        temporal_axis[shape].add(t)
        for m in metrics:
            if r[m] != "NA":
                acc[(r["model"], shape, r["kind"], m, s, t)].append(float(r[m]))
    panels = sorted({(r["model"], r["shape"], r["kind"]) for r in rows})
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for model, shape, kind in panels:
        spatial = sorted(spatial_axis[shape])
        temporal = sorted(temporal_axis[shape])
        for m in metrics:
            values = {}
            for s in spatial:
                for t in temporal:
                    vals = acc.get((model, shape, kind, m, s, t))
                    if vals and not any(math.isnan(v) for v in vals):
                        values[(s, t)] = sum(vals) / len(vals)
            title = f"{model} / {shape} / {kind} / {m}"
            path = os.path.join(out_dir, f"{model}_{shape}_{kind}_{m}.svg")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(panel_svg(title, spatial, temporal, values))
            written.append(path)
    return written
