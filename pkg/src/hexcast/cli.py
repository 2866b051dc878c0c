"""Command-line entry point: ``hexcast <command> [options]``.

Exit status: 0 on success, 1 on usage or configuration errors, 2 on data errors.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import geom, ingest, ndtensor
from .config import RunConfig, load_config
from .ingest import GranularitySpec, ScaleParams, aggregate_demand, build_samples, read_demand, split_cv
from .metrics import DegenerateRangeError, compute_metrics
from .models.registry import MODEL_NAMES, NEURAL_MODELS, build_network, make_forecaster
from .models.training import predict, train_model
from .report import render_report
from .sweep import ResultRow, granularity_sweep, write_results

log = logging.getLogger("hexcast")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2
CONFIG_ERRORS = (ingest.ConfigError, ndtensor.ConfigError, geom.GeometryError)
DATA_ERRORS = (ingest.DataError, ingest.SchemaError, ingest.DegenerateScaleError, DegenerateRangeError,
               ndtensor.ShapeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to exit status 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration entry (repeatable)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--strict", action="store_true", help="reject malformed trip rows instead of skipping")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="hexcast", description="Hexagonal-grid demand forecasting experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic trips CSV")
    p.add_argument("--out", required=True)

    p = sub.add_parser("aggregate", parents=[common], help="count demand per cell and interval")
    p.add_argument("--trips", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", parents=[common], help="train one model on one demand file")
    p.add_argument("--demand", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (history CSV and .meta written alongside)")
    p.add_argument("--model", choices=NEURAL_MODELS)
    p.add_argument("--split", default="G0")

    p = sub.add_parser("eval", parents=[common], help="score a model on the test days of a split")
    p.add_argument("--demand", required=True)
    p.add_argument("--out", required=True, help="results CSV (one row)")
    p.add_argument("--model", choices=MODEL_NAMES)
    p.add_argument("--checkpoint", help="trained checkpoint for neural models")
    p.add_argument("--split", default="G0")

    p = sub.add_parser("sweep", parents=[common], help="granularity sweep over a trips CSV")
    p.add_argument("--trips", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", parents=[common], help="render SVG heatmaps from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", required=True)
    return parser


# ---------------------------------------------------------------- commands


def _load_trips(path, strict: bool):
    try:
        result = ingest.read_trips(path, strict=strict)
    except OSError as exc:
        raise ingest.DataError(f"cannot read trips {path}: {exc.strerror}") from None
    if result.n_skipped:
        log.warning("%s: skipped %d malformed rows", path, result.n_skipped)
    return result.trips


def _load_demand(path):
    try:
        return read_demand(path)
    except OSError as exc:
        raise ingest.DataError(f"cannot read demand {path}: {exc.strerror}") from None


def cmd_synth(args, cfg: RunConfig) -> None:
    trips = ingest.synthesize_trips(cfg.synth_config(), args.seed)
    ingest.write_trips(trips, args.out)
    log.info("wrote %d trips to %s", len(trips), args.out)


def cmd_aggregate(args, cfg: RunConfig) -> None:
    trips = _load_trips(args.trips, args.strict)
    spec = GranularitySpec(cfg.get("grid.shape"), cfg.get("grid.spatial_m"), cfg.get("grid.interval_min"),
                           cfg.bbox(), cfg.tz_offset(), cfg.get("data.start_ts"), cfg.get("data.n_days"))
    os.makedirs(args.out_dir, exist_ok=True)
    for kind in ("departure", "arrival"):
        tensor = aggregate_demand(trips, spec, kind)
        name = f"{spec.shape}_{spec.spatial_m:g}m_{spec.interval_min}min_{kind}.csv"
        ingest.write_demand(tensor, os.path.join(args.out_dir, name))
        log.info("%s: %d cells x %d intervals, %d endpoints excluded", name, tensor.n_cells, tensor.n_intervals,
                 tensor.n_excluded)


def _split_samples(path, cfg: RunConfig, split: str, h: int):
    tensor = _load_demand(path)
    n_days = tensor.n_intervals // tensor.intervals_per_day
    plan = ingest.SplitPlan(split, n_days, cfg.get("split.n_train"))
    samples = build_samples(tensor, h)
    train, test = split_cv(samples, plan)
    if len(train) == 0 or len(test) == 0:
        raise ingest.DataError(f"split {split} leaves no training or test samples")
    return tensor, train, test


def _write_meta(path, meta: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in meta.items():
            fh.write(f"{k}={v}\n")


def _read_meta(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return dict(line.rstrip("\n").split("=", 1) for line in fh if "=" in line)
    except OSError as exc:
        raise ingest.DataError(f"cannot read checkpoint metadata {path}: {exc.strerror}") from None


def cmd_train(args, cfg: RunConfig) -> None:
    name = args.model or cfg.get("model.name")
    if name not in NEURAL_MODELS:
        raise ingest.ConfigError(f"train needs a neural model, got {name!r}")
    spec = cfg.model_spec(args.seed)
    tensor, train, _ = _split_samples(args.demand, cfg, args.split, spec.h)
    scale_params = ScaleParams.fit(train.targets)
    fc = make_forecaster(name, tensor.shape, spec, args.seed)
    net = fc.net
    result = train_model(net, train, scale_params, fc.config)
    ndtensor.save_checkpoint(args.out, net.state_arrays())
    _write_meta(args.out + ".meta", {
        "model": name, "shape": tensor.shape, "layers": ",".join(map(str, spec.layers)),
        "conv_kind": "hex" if name in ("hcnn", "hconvlstm") else "square", "h": spec.h,
        "lstm_hidden": spec.lstm_hidden, "dropout_p": spec.dropout_p, "use_batch_norm": spec.use_batch_norm,
        "kernel_size": spec.kernel_size, "lambda": fc.config.lam, "y_min": repr(scale_params.y_min),
        "y_max": repr(scale_params.y_max), "seed": args.seed, "split": args.split,
    })
    with open(args.out + ".history.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss"])
        for row in result.history:
            w.writerow([row["epoch"], format(row["train_loss"], ".10g")])
    log.info("trained %s for %d epochs (%d updates)", name, len(result.history), result.n_updates)


def cmd_eval(args, cfg: RunConfig) -> None:
    if args.checkpoint:
        meta = _read_meta(args.checkpoint + ".meta")
        name = meta["model"]
        if args.model and args.model != name:
            raise ingest.ConfigError(f"checkpoint holds {name!r}, not {args.model!r}")
        cfg.values.update({
            "model.layers": [int(x) for x in meta["layers"].split(",")], "model.h": int(meta["h"]),
            "model.lstm_hidden": int(meta["lstm_hidden"]), "model.dropout_p": float(meta["dropout_p"]),
            "model.use_batch_norm": meta["use_batch_norm"] == "True", "model.kernel_size": int(meta["kernel_size"]),
        })
        spec = cfg.model_spec(int(meta["seed"]))
        tensor, train, test = _split_samples(args.demand, cfg, args.split, spec.h)
        net = build_network(name, tensor.shape, spec, int(meta["seed"]))
        try:
            net.load_state_arrays(ndtensor.load_checkpoint(args.checkpoint))
        except (OSError, KeyError) as exc:
            raise ingest.DataError(f"bad checkpoint {args.checkpoint}: {exc}") from None
        scale_params = ScaleParams(float(meta["y_min"]), float(meta["y_max"]))
        preds = predict(net, test, scale_params)
    else:
        name = args.model or cfg.get("model.name")
        spec = cfg.model_spec(args.seed)
        tensor, train, test = _split_samples(args.demand, cfg, args.split, spec.h)
        fc = make_forecaster(name, tensor.shape, spec, args.seed)
        fc.fit(train, ScaleParams.fit(train.targets))
        preds = fc.predict(test)
    y_all = np.concatenate([train.targets, test.targets])
    report = compute_metrics(preds, test.targets, float(y_all.max()), float(y_all.min()))
    row = ResultRow(tensor.shape, tensor.grid.side_m, tensor.interval_min, tensor.kind, name, args.split, report)
    write_results([row], args.out)


def cmd_sweep(args, cfg: RunConfig) -> None:
    trips = _load_trips(args.trips, args.strict)
    if not len(trips):
        raise ingest.DataError(f"{args.trips} holds no trips")
    n_days = cfg.get("data.n_days")
    if n_days is None:
        spec = GranularitySpec("hex", 1000.0, 60, cfg.bbox(), cfg.tz_offset(), cfg.get("data.start_ts"))
        n_days = ingest.time_frame(trips, spec)[1]
    sweep_cfg = cfg.sweep_config(n_days)
    result = granularity_sweep(trips, sweep_cfg, cfg.model_spec(args.seed), args.seed, workers=args.threads)
    write_results(result.rows, args.out, timing=cfg.get("output.timing"))
    if result.flagged:
        with open(args.out + ".flagged.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["shape", "spatial_m", "interval_min", "kind", "model", "split", "reason"])
            for (shape, spatial, interval, *rest), reason in result.flagged:
                w.writerow([shape, format(spatial, "g"), interval, *rest, reason])
    log.info("wrote %d rows (%d flagged) to %s", len(result.rows), len(result.flagged), args.out)


def cmd_report(args, cfg: RunConfig) -> None:
    try:
        paths = render_report(args.results, args.out_dir)
    except OSError as exc:
        raise ingest.DataError(f"cannot read results {args.results}: {exc.strerror}") from None
    except (KeyError, ValueError) as exc:
        raise ingest.DataError(f"{args.results}: invalid results file ({exc})") from None
    log.info("wrote %d heatmaps to %s", len(paths), args.out_dir)


COMMANDS = {"synth": cmd_synth, "aggregate": cmd_aggregate, "train": cmd_train, "eval": cmd_eval,
            "sweep": cmd_sweep, "report": cmd_report}


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ingest.ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, args.overrides)
        COMMANDS[args.command](args, cfg)
    except CONFIG_ERRORS as exc:
        print(f"hexcast: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        print(f"hexcast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())
