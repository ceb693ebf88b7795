"""Command-line entry point: ``irlsnet run | plot | validate-data``."""
from __future__ import annotations

import argparse
import logging
import sys

from .data import DataError, default_schema_path, load_va_csv
from .optim import OPTIMIZERS
from .plot import PlotError, emit_plot_data
from .scenarios import SCENARIOS, ScenarioConfig, ScenarioError, load_config, run_scenario
from .train import TrainingAborted

log = logging.getLogger("irlsnet")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="irlsnet", description="Uncertainty-aware regression experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress per repetition")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a named scenario and write its reports")
    r.add_argument("scenario", choices=SCENARIOS)
    r.add_argument("--config", help="JSON config file (flags override its values)")
    r.add_argument("--data", help="portfolio CSV for table1_va")
    r.add_argument("--schema", help="schema JSON for --data (default: bundled VA schema)")
    r.add_argument("--optimizer", choices=OPTIMIZERS)
    r.add_argument("--schedule", choices=("constant", "cyclical"))
    r.add_argument("--lr", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--reps", type=int)
    r.add_argument("--epochs", type=int)
    r.add_argument("--fraction", type=float, dest="train_fraction")
    r.add_argument("--synthetic", action="store_true", default=None,
                   help="table1_va: use the synthetic stand-in portfolio instead of a CSV")
    r.add_argument("--out", help="output directory (default: $IRLSNET_OUT/<scenario> or runs/<scenario>)")

    pl = sub.add_parser("plot", help="write SVG plots for a finished scenario directory")
    pl.add_argument("dir")

    v = sub.add_parser("validate-data", help="check a portfolio CSV against a schema")
    v.add_argument("file")
    v.add_argument("--schema", default=None, help=f"schema JSON (default: {default_schema_path()})")
    return p


_FLAG_KEYS = ("data", "schema", "optimizer", "schedule", "lr", "seed", "reps", "epochs", "train_fraction",
              "synthetic", "out")


def _cmd_run(args) -> int:
    doc = load_config(args.config) if args.config else {}
    doc["scenario"] = args.scenario
    for key in _FLAG_KEYS:
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    cfg = ScenarioConfig.from_dict(doc)
    result = run_scenario(cfg)
    out = result.config.out
    for rep in result.reports:
        print(f"{rep.model:>10s}  {rep.optimizer:<8s} avg PE {rep.avg_pe:+.4f}  std {rep.std_pe:.4f}  "
              f"avg |PE| {rep.avg_abs_pe:.4f}  avg MSE {rep.avg_mse:.4f}")
    print(f"wrote {out}")
    return 0


def _cmd_plot(args) -> int:
    for path in emit_plot_data(args.dir):
        print(f"wrote {path}")
    return 0


def _cmd_validate(args) -> int:
    ds = load_va_csv(args.file, args.schema or default_schema_path())
    print(f"{args.file}: {len(ds)} rows, {ds.n_features} encoded features, target sum {ds.targets.sum():.6g}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handlers = {"run": _cmd_run, "plot": _cmd_plot, "validate-data": _cmd_validate}
    try:
        return handlers[args.command](args)
    except (ScenarioError, DataError, PlotError) as exc:
        print(f"irlsnet: error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"irlsnet: training aborted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
