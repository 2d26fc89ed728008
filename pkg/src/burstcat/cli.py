"""``burstcat`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .assembler import AssemblyError
from .config import ConfigError, ExperimentConfig
from .dataset import BalanceError, ManifestError, MappingError, SplitConfigError
from .learner.models import ContractError, NumericError
from .learner.training import TrainConfigError
from .metrics import CoverageError, UndefinedMetricError
from .tensor_core import ChannelError, DimensionError, TensorFormatError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

CONFIG_ERRORS = (ConfigError, SplitConfigError, TrainConfigError, ContractError, AssemblyError)
DATA_ERRORS = (ManifestError, MappingError, BalanceError, TensorFormatError, DimensionError, ChannelError,
               CoverageError, UndefinedMetricError, pipeline.StaleCacheError, FileNotFoundError)
NUMERIC_ERRORS = (NumericError, FloatingPointError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="burstcat", description="Camera-trap burst classification pipeline.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file (defaults are used when omitted)")
    common.add_argument("--set", metavar="K=V", action="append", default=[], dest="overrides",
                        help="override one config key; repeatable")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config 'out')")
    common.add_argument("--seed", type=int, help="training seed (overrides config 'seed')")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for feature extraction")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate the synthetic burst dataset")
    sub.add_parser("features", parents=[common], help="precompute flow and MOG2 tensors per burst")
    p = sub.add_parser("split", parents=[common], help="split and balance the manifest")
    p.add_argument("--scenario", choices=("uniform", "site_based"), help="split scenario (default: split_mode)")
    for name, text in (("train", "train one variant"), ("eval", "evaluate one variant on the test split")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--variant", required=True, metavar="NAME", help="model variant, e.g. Hybrid_13")
        p.add_argument("--scenario", choices=("uniform", "site_based"), help="split scenario (default: split_mode)")
        if name == "eval":
            p.add_argument("--checkpoint", metavar="PATH", help="checkpoint file (default: the trained one)")
    sub.add_parser("experiment", parents=[common], help="run the full protocol for every scenario and seed")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg = cfg.with_overrides(args.overrides)
    data = cfg.to_dict()
    if args.out is not None:
        data["out"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = ExperimentConfig.from_dict(data)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg


def run(args) -> int:
    cfg = resolve_config(args)
    if args.command == "synth":
        print(pipeline.cmd_synth(cfg))
    elif args.command == "features":
        print(pipeline.cmd_features(cfg, args.jobs))
    elif args.command == "split":
        print(pipeline.cmd_split(cfg, args.scenario))
    elif args.command == "train":
        print(pipeline.cmd_train(cfg, args.variant, mode=args.scenario))
    elif args.command == "eval":
        report = pipeline.cmd_eval(cfg, args.variant, args.checkpoint, mode=args.scenario)
        print(f"{report.variant} {report.split} ROC AUC {report.roc_auc:.4f}")
    elif args.command == "experiment":
        text, _ = pipeline.cmd_experiment(cfg, args.jobs)
        print(text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return run(args)
    except CONFIG_ERRORS as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as err:  # remaining validation failures come from bad settings
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
