"""``solarcast`` command line.

Exit codes: 0 success, 1 validation or usage error, 2 I/O or storage error,
3 internal invariant violation. Logs go to stderr, results to stdout as JSON.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from solarcast import dataset as ds
from solarcast import forecast_bridge, ingest_service
from solarcast import neuralnet as nn
from solarcast import solar_geometry as sg
from solarcast import train_harness as th
from solarcast.errors import ContractError, ValidationError

log = logging.getLogger("solarcast")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _int_list(text):
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _emit(obj):
    sys.stdout.write(json.dumps(obj, default=str) + "\n")
    sys.stdout.flush()


def _load_config(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return cfg


def _station(args, cfg):
    lat = args.lat if args.lat is not None else os.environ.get("SOLARCAST_LAT", cfg.get("lat"))
    lon = args.lon if args.lon is not None else os.environ.get("SOLARCAST_LON", cfg.get("lon"))
    if lat is None or lon is None:
        raise ValidationError("station coordinates required: --lat/--lon or SOLARCAST_LAT/SOLARCAST_LON")
    try:
        return sg.GeoLocation(float(lat), float(lon))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"invalid coordinates {lat!r}, {lon!r}") from None


def _data_root(args, cfg):
    root = args.data_root or os.environ.get("SOLARCAST_DATA_ROOT") or cfg.get("data_root")
    if not root:
        raise ValidationError("data root required: --data-root or SOLARCAST_DATA_ROOT")
    return Path(root)


def _add_station(p, required_doc=""):
    p.add_argument("--lat", type=float, help=f"station latitude in degrees{required_doc}")
    p.add_argument("--lon", type=float, help=f"station longitude in degrees{required_doc}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_solar_pos(args, cfg):
    station = _station(args, cfg)
    _emit(sg.describe(station, args.time))


def cmd_ingest_serve(args, cfg):
    station = _station(args, cfg)
    ingest_service.serve(args.bind, station, _data_root(args, cfg))


def cmd_dataset_build(args, cfg):
    split, stats, skipped = ds.build_dataset(
        _data_root(args, cfg), args.out, args.train_fraction, args.seed, args.standardize
    )
    _emit({
        "dataset": str(args.out),
        "n_train": len(split.train),
        "n_validation": len(split.validation),
        "skipped": len(skipped),
        "standardized": stats is not None,
    })


def _load_training_data(path):
    split = ds.read_dataset(path)
    if len(split.train) == 0:
        raise ValidationError(f"{path}: no training rows")
    if split.stats is not None:
        split, stats = ds.standardize(split, split.stats)
    else:
        stats = None
    return split, stats


def cmd_train(args, cfg):
    split, stats = _load_training_data(args.dataset)
    mc = nn.MLPConfig(split.train.features.shape[1], args.hidden, args.final_relu, args.seed)
    tc = th.TrainConfig(args.optimizer, args.lr, args.epochs, args.batch, args.seed, mc)
    model, stats_list = th.train(tc, split.train)
    th.emit_curves({tc.optimizer: stats_list}, args.out_curve)
    nn.save_model(model, args.out_model, stats, extra={"train_config": tc.label(), "epochs_run": len(stats_list)})
    val_mae = None
    if len(split.validation):
        val_mae = nn.mae_loss(nn.forward(model, split.validation.features)[0], split.validation.targets)[0]
    last = stats_list[-1]
    _emit({
        "model": str(args.out_model),
        "epochs_run": len(stats_list),
        "final_train_mae": last.mean_train_mae,
        "final_train_mse": last.mean_train_mse,
        "validation_mae": val_mae,
        "diverged": last.diverged,
        "frozen": any(s.frozen for s in stats_list),
    })


def cmd_sweep(args, cfg):
    split, _ = _load_training_data(args.dataset)
    grid = th.default_grid(args.widths, args.depths, args.epochs, args.batch, args.seed,
                           split.train.features.shape[1])
    result = th.sweep(split.train, grid, jobs=args.jobs)
    table = th.write_sweep_table(result, Path(args.out) / "sweep.csv")
    best = result.best
    _emit({
        "table": str(table),
        "rows": len(result.rows),
        "diverged": sum(not r.usable for r in result.rows),
        "best": None if best is None else {"label": best.config.label(), "final_mae": best.final.mean_train_mae,
                                           "n_params": best.n_params},
    })


def cmd_compare(args, cfg):
    split, _ = _load_training_data(args.dataset)
    cmp = th.compare_optimizers(split.train, args.epochs, args.batch, args.seed)
    th.emit_curves({"sgd": cmp.sgd, "adam": cmp.adam}, args.out)
    summary = cmp.summary()
    Path(args.out, "compare.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    _emit(summary)


def cmd_predict(args, cfg):
    station = _station(args, cfg)
    _emit(forecast_bridge.predict(args.model, args.grid, station, args.time))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = _Parser(
        prog="solarcast",
        description="Per-station solar irradiance forecasting toolkit.",
        epilog="subcommands: ingest-serve, dataset build, train, sweep, compare, predict, solar-pos",
    )
    parser.add_argument("--log-level", choices=sorted(LOG_LEVELS), default=None)
    parser.add_argument("--config", help="optional JSON file with lat, lon, data_root, log_level")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("ingest-serve", help="run the station report HTTP service")
    p.add_argument("--bind", default="0.0.0.0:8080", help="host:port to listen on")
    _add_station(p)
    p.add_argument("--data-root", help="directory for record files")
    p.set_defaults(func=cmd_ingest_serve)

    p = sub.add_parser("dataset", help="dataset operations (build)")
    dsub = p.add_subparsers(dest="dataset_command", metavar="ACTION", parser_class=_Parser)
    b = dsub.add_parser("build", help="turn stored records into a dataset file")
    b.add_argument("--data-root", help="directory of record files")
    b.add_argument("--out", required=True, help="dataset CSV to write")
    b.add_argument("--standardize", action="store_true", help="store train-only feature statistics")
    b.add_argument("--train-fraction", type=float, default=0.8)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_dataset_build)

    p = sub.add_parser("train", help="train a model on a dataset file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=th.FINAL_EPOCHS)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--hidden", type=_int_list, default=(32, 32), help="comma-separated widths, e.g. 32,32")
    p.add_argument("--final-relu", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-curve", required=True, help="directory for the loss curve CSV/SVG")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="hyperparameter sweep over depth, width, final ReLU and optimizer")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=th.SWEEP_EPOCHS)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--widths", type=_int_list, default=th.DEFAULT_WIDTHS)
    p.add_argument("--depths", type=_int_list, default=th.DEFAULT_DEPTHS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="SGD vs Adam convergence on the 7-32-32-1 model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=th.SWEEP_EPOCHS)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("predict", help="predict irradiance from a model and a grid snapshot file")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", required=True, help="grid snapshot JSONL")
    _add_station(p)
    p.add_argument("--time", help="valid time to use when the grid holds several (RFC 3339)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("solar-pos", help="sun position, solar noon, altitude ratio, clear-sky irradiance")
    _add_station(p)
    p.add_argument("--time", required=True, help="UTC instant (RFC 3339)")
    p.set_defaults(func=cmd_solar_pos)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION

    if not getattr(args, "func", None):
        target = parser
        if args.command == "dataset":
            target = next(a for a in parser._subparsers._group_actions[0].choices.values() if a.prog.endswith("dataset"))
        sys.stderr.write(target.format_help())
        return EXIT_VALIDATION

    try:
        cfg = _load_config(args.config)
        level = args.log_level or cfg.get("log_level", "warn")
        if level not in LOG_LEVELS:
            raise ValidationError(f"log_level {level!r} not in {sorted(LOG_LEVELS)}")
        logging.basicConfig(level=LOG_LEVELS[level], stream=sys.stderr,
                            format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)
        args.func(args, cfg)
    except ValidationError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (ContractError, AssertionError) as exc:
        log.error("internal invariant violated: %s", exc)
        return EXIT_INTERNAL
    except Exception:
        log.exception("unexpected failure")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
