"""Command-line entry point: ``ampgan <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from . import config as config_mod
from . import pipeline

log = logging.getLogger("ampgan")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration (default: bundled toy corpus config)")
    p.add_argument("--seed", type=int, help="global seed, overrides the config")
    p.add_argument("--out", help="output directory, overrides the config")
    p.add_argument("--dataset", action="append", dest="datasets", metavar="NAME",
                   help="only process this dataset (repeatable)")
    p.add_argument("--paper-faithful", action="store_true", default=None,
                   help="whole-dataset balancing before splitting and the published 1e-10 GAN learning rate")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ampgan", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ampgan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="write per-dataset feature matrix CSVs")
    _common(p)

    p = sub.add_parser("balance", help="WGAN-GP balance encoded datasets")
    _common(p)
    p.add_argument("--features", help="feature CSV to balance instead of encoding the configured datasets")

    p = sub.add_parser("train", help="train a classifier or the stacking ensemble on full datasets")
    _common(p)
    p.add_argument("--classifier", required=True, choices=pipeline.CLASSIFIER_ORDER)
    p.add_argument("--features", help="feature CSV (encoded or balanced) to train on")

    p = sub.add_parser("evaluate", help="score a saved model on a feature CSV")
    _common(p)
    p.add_argument("--model", required=True, help="model checkpoint JSON from 'train'")
    p.add_argument("--features", required=True, help="feature CSV; synthetic rows are ignored")

    p = sub.add_parser("run", help="full pipeline: encode, balance, train and score under MCCV")
    _common(p)

    p = sub.add_parser("report", help="merge report JSONs into table.csv and summary.txt")
    p.add_argument("report_dir", help="directory of report JSONs written by 'run'")
    p.add_argument("--out", help="where to write the table (default: the report directory)")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "report":
        return pipeline.cmd_report(args.report_dir, args.out)

    overrides = {"seed": args.seed, "out": args.out, "paper_faithful": args.paper_faithful}
    try:
        cfg = config_mod.load_config(args.config, overrides)
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return pipeline.EXIT_INPUT
    except (config_mod.ConfigError, ValueError) as exc:
        log.error("invalid configuration: %s", exc)
        return pipeline.EXIT_INPUT

    try:
        if args.command == "encode":
            return pipeline.cmd_encode(cfg, args.datasets)
        if args.command == "balance":
            return pipeline.cmd_balance(cfg, args.datasets, args.features)
        if args.command == "train":
            return pipeline.cmd_train(cfg, args.classifier, args.datasets, args.features)
        if args.command == "evaluate":
            return pipeline.cmd_evaluate(cfg, args.model, args.features)
        return pipeline.cmd_run(cfg, args.datasets)
    except config_mod.ConfigError as exc:
        log.error("%s", exc)
        return pipeline.EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
