"""Command-line interface.

    enercast synth      --out data.csv [--days N --buildings N --seed N --no-weather]
    enercast correlate  [config/options] writes correlation tables for a dataset
    enercast train      runs the configured frameworks end to end
    enercast evaluate   re-scores saved models from a run directory
    enercast sweep      trains snapshots at several epoch budgets
    enercast fed        federated run (shorthand for frameworks=fed_local)
    enercast report     derives plot-ready CSVs and a text summary from a run

Every experiment verb takes `--config FILE` (key = value lines, `#`
comments) plus repeatable `--set key=value` overrides; flags win over the
file. Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import EnergyVector, load_csv, save_csv
from .errors import ConfigError, EnercastError
from .experiment import (
    ExperimentConfig,
    apply_overrides,
    emit_plot_data,
    epoch_sweep,
    load_config,
    render_report,
    run_experiment,
)
from .featsel import (
    cross_building_correlation,
    cross_vector_table,
    next_prev_correlation_matrix,
)
from .synth import SynthConfig, generate


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so exit codes stay ours."""

    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="enercast",
                     description="CNN-based short-term multi-energy demand "
                                 "forecasting experiments")
    sub = parser.add_subparsers(dest="verb", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic demand CSV")
    synth.add_argument("--out", required=True, help="CSV path to write")
    synth.add_argument("--days", type=int, default=90)
    synth.add_argument("--buildings", type=int, default=39)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--no-weather", action="store_true",
                       help="omit temperature/solar columns")

    def experiment_args(p, require_out=True):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        if require_out:
            p.add_argument("--out", help="output directory (overrides out_dir)")

    correlate = sub.add_parser("correlate",
                               help="write correlation tables for a dataset")
    experiment_args(correlate)

    train = sub.add_parser("train", help="train the configured frameworks")
    experiment_args(train)

    evaluate = sub.add_parser("evaluate",
                              help="re-score the saved models of a run")
    evaluate.add_argument("run_dir", help="directory written by `train`")

    sweep = sub.add_parser("sweep", help="score several epoch budgets")
    experiment_args(sweep)
    sweep.add_argument("--epochs-list", required=True,
                       help="comma-separated epoch budgets, e.g. 0,200,400")

    fed = sub.add_parser("fed", help="federated training run")
    experiment_args(fed)

    report = sub.add_parser("report",
                            help="emit plot data and a text summary for a run")
    report.add_argument("run_dir", help="directory written by `train`")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        cfg = load_config(path)
    pairs = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        pairs[key.strip()] = value
    if pairs:
        cfg = apply_overrides(cfg, pairs)
    if getattr(args, "out", None):
        cfg = apply_overrides(cfg, {"out_dir": args.out})
    return cfg


def _cmd_synth(args) -> None:
    ds = generate(SynthConfig(num_buildings=args.buildings, num_days=args.days,
                              weather=not args.no_weather), seed=args.seed)
    save_csv(ds, args.out)
    print(f"wrote {args.out}: {ds.num_buildings} buildings x {ds.num_days} days")


def _cmd_correlate(args) -> None:
    cfg = _config_from_args(args)
    if cfg.data:
        ds = load_csv(cfg.data)
    else:
        ds = generate(SynthConfig(num_buildings=cfg.synth_buildings,
                                  num_days=cfg.synth_days, weather=cfg.weather),
                      seed=cfg.synth_seed)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in cfg.vectors:
        vector = EnergyVector(name)
        next_prev_correlation_matrix(ds, vector).to_csv(
            out / f"corr_next_prev_{vector.value}.csv")
        cross_building_correlation(ds, vector).to_csv(
            out / f"corr_cross_building_{vector.value}.csv")
    if not cfg.buildings:
        sample = ds.nonzero_buildings(EnergyVector.ELECTRIC)[:1]
    else:
        sample = cfg.buildings
    for b in sample:
        cross_vector_table(ds, b).to_csv(out / f"corr_cross_vector_building_{b}.csv")
    print(f"wrote correlation tables to {out}")


def _cmd_train(args) -> None:
    cfg = _config_from_args(args)
    out = run_experiment(cfg)
    print(f"run complete: {out}")


def _cmd_evaluate(args) -> None:
    from .evaluate import evaluate_run
    out = evaluate_run(args.run_dir)
    print(f"re-evaluated models: {out}")


def _cmd_sweep(args) -> None:
    cfg = _config_from_args(args)
    try:
        budgets = [int(b) for b in args.epochs_list.split(",") if b.strip()]
    except ValueError:
        raise ConfigError(
            f"--epochs-list expects comma-separated integers, got "
            f"{args.epochs_list!r}") from None
    out = epoch_sweep(cfg, budgets)
    print(f"sweep complete: {out}")


def _cmd_fed(args) -> None:
    cfg = _config_from_args(args)
    cfg = apply_overrides(cfg, {"frameworks": "fed_local"})
    out = run_experiment(cfg)
    print(f"federated run complete: {out}")


def _cmd_report(args) -> None:
    written = emit_plot_data(args.run_dir)
    summary = render_report(args.run_dir)
    report_path = Path(args.run_dir) / "report.txt"
    report_path.write_text(summary + "\n", encoding="utf-8")
    print(summary)
    print(f"plot data files: {len(written)}; summary: {report_path}")


_COMMANDS = {
    "synth": _cmd_synth,
    "correlate": _cmd_correlate,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "fed": _cmd_fed,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        _COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (EnercastError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
