"""
Command line entry point.

    gmlsnet run regress-operator --op laplacian --dim 1
    gmlsnet run advdiff --dt-ratio 10
    gmlsnet gen-data qoi --seed 3 --out runs/qoi/dataset
    gmlsnet eval --checkpoint runs/qoi/checkpoint.json --dataset runs/qoi/dataset
    gmlsnet export-stencil --checkpoint runs/regress-operator/checkpoint.json

Exit codes: 0 success, 1 acceptance thresholds not met, 2 invalid
configuration or missing input file, 3 numerical failure.
"""

import argparse
import logging
import os
import sys
from types import ModuleType
from typing import Any, Dict, List

from gmls_nets.experiments import advdiff, brownian, qoi, regress_operator
from gmls_nets.experiments.common import output_dir, read_dataset_bundle, write_dataset_bundle
from gmls_nets.nets.layer import GMLSLayer, GMLSNetwork
from gmls_nets.nets.training import evaluate
from gmls_nets.utils.constants import (
    EXIT_INVALID_CONFIG,
    EXIT_NUMERICAL_FAILURE,
    EXIT_OK,
    EXIT_THRESHOLDS_FAILED,
)
from gmls_nets.utils.errors_utils import ConfigError, GMLSError, StencilError
from gmls_nets.utils.file_utils import FileUtils
from gmls_nets.utils.log_utils import setup_logging
from gmls_nets.utils.reader_utils import ReadFilesUtils
from gmls_nets.utils.tasks import TaskPool

logger = logging.getLogger(__name__)

EXPERIMENTS: Dict[str, ModuleType] = {
    "regress-operator": regress_operator,
    "advdiff": advdiff,
    "brownian": brownian,
    "qoi": qoi,
}
REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def default_config_path(tag: str, op: str | None = None, dim: int | None = None) -> str:
    """
    Versioned config for an experiment tag, looked up in ./configs first and
    then in the repository's configs directory.
    """
    if tag == "regress-operator":
        name = f"regress_{op or 'laplacian'}_{dim or 1}d"
    else:
        name = tag
    candidates = [os.path.join(root, "configs", f"{name}.json") for root in (os.getcwd(), REPO_ROOT)]
    for path in candidates:
        if os.path.exists(path):
            return path
    return candidates[0]


def load_config(args: argparse.Namespace) -> Dict[str, Any]:
    """Reads the config selected by the arguments and applies the CLI shortcuts."""
    if args.config is None and args.tag is None:
        raise ConfigError("give an experiment tag or --config")
    path = args.config or default_config_path(args.tag, args.op, args.dim)
    config = ReadFilesUtils.read_config(path)
    tag = config["experiment"]
    if args.tag is not None and args.tag != tag:
        raise ConfigError(f"config is for experiment '{tag}', not '{args.tag}'", source=path)
    if args.op is not None or args.dim is not None:
        if tag != "regress-operator":
            raise ConfigError("--op and --dim only apply to regress-operator", source=path)
        if args.op is not None and args.op != config["dataset"]["operator"]:
            raise ConfigError(f"config operator is '{config['dataset']['operator']}', not '{args.op}'", source=path)
        if args.dim is not None and args.dim != config["geometry"]["dim"]:
            raise ConfigError(f"config dimension is {config['geometry']['dim']}, not {args.dim}", source=path)
    if getattr(args, "dt_ratio", None):
        if tag != "advdiff":
            raise ConfigError("--dt-ratio only applies to advdiff", source=path)
        config["dataset"]["dt_ratios"] = sorted(args.dt_ratio)
    return config


def _require_file(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise ConfigError(f"{what} does not exist", source=path)
    return path


def command_run(args: argparse.Namespace) -> int:
    config = load_config(args)
    seed = config["seed"] if args.seed is None else args.seed
    out = output_dir(config, args.out)
    logger.info("Running %s with seed %d into %s", config["experiment"], seed, out)
    result = EXPERIMENTS[config["experiment"]].run(config, seed, out)
    failed = [name for name, ok in result.metrics.get("checks", {}).items() if not ok]
    if failed:
        logger.warning("Acceptance thresholds not met: %s", ", ".join(failed))
        return EXIT_THRESHOLDS_FAILED
    return EXIT_OK


def command_gen_data(args: argparse.Namespace) -> int:
    config = load_config(args)
    tag = config["experiment"]
    module = EXPERIMENTS[tag]
    if not hasattr(module, "generate_dataset"):
        raise ConfigError(f"{tag} has no offline dataset: its training pairs come from the exact solution during run")
    seed = config["seed"] if args.seed is None else args.seed
    directory = args.out or os.path.join("runs", FileUtils.clean_filename(tag), "dataset")
    dataset, cloud = module.generate_dataset(config, seed)
    manifest = write_dataset_bundle(dataset, cloud, directory, config)
    logger.info("Wrote %d train / %d test samples, manifest %s", dataset.n_train, dataset.n_test, manifest)
    return EXIT_OK


def command_eval(args: argparse.Namespace) -> int:
    net = GMLSNetwork.load(_require_file(args.checkpoint, "checkpoint"))
    dataset, _ = read_dataset_bundle(_require_file(args.dataset, "dataset directory"))
    test = evaluate(net, dataset.test_inputs, dataset.test_targets)
    metrics = {
        "checkpoint": os.path.abspath(args.checkpoint),
        "dataset": os.path.abspath(args.dataset),
        "seed": dataset.seed,
        "n_test": dataset.n_test,
        "test_mse": test["mse"],
        "test_rel_l2": test["rel_l2"],
        "test_rel_rmse": test["rel_rmse"],
    }
    directory = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    path = FileUtils.write_json(os.path.join(directory, "eval_metrics.json"), metrics)
    logger.info("Test relative l2 %.3e, metrics in %s", test["rel_l2"], path)
    return EXIT_OK


def command_export_stencil(args: argparse.Namespace) -> int:
    net = GMLSNetwork.load(_require_file(args.checkpoint, "checkpoint"))
    layers = [stage for stage in net.stages if isinstance(stage, GMLSLayer)]
    if not layers:
        raise StencilError("Checkpoint has no GMLS layer")
    stencil = layers[0].stencil()
    directory = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    path = stencil.to_csv(os.path.join(FileUtils.ensure_dir(directory), "stencil.csv"))
    logger.info("Wrote %d stencil entries to %s", stencil.matrix.nnz, path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Override the config seed")
    common.add_argument("--threads", type=int, default=1, help="Worker cap for geometry and stencil assembly")
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--log-level", default="INFO", help="DEBUG, INFO, WARNING or ERROR")

    experiment = argparse.ArgumentParser(add_help=False)
    experiment.add_argument("tag", nargs="?", choices=sorted(EXPERIMENTS), help="Experiment tag")
    experiment.add_argument("--config", default=None, help="Config file (default configs/<experiment>.json)")
    experiment.add_argument("--op", choices=["laplacian", "burgers"], default=None, help="regress-operator operator")
    experiment.add_argument("--dim", type=int, choices=[1, 2], default=None, help="regress-operator dimension")

    parser = argparse.ArgumentParser(prog="gmlsnet", description="Operator learning experiments with GMLS layers on point clouds")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", parents=[common, experiment], help="Run an experiment")
    run.add_argument(
        "--dt-ratio", type=float, action="append", default=None, help="advdiff time step in CFL units (repeatable)"
    )
    run.set_defaults(handler=command_run)

    gen = subparsers.add_parser("gen-data", parents=[common, experiment], help="Write a dataset bundle")
    gen.set_defaults(handler=command_gen_data)

    ev = subparsers.add_parser("eval", parents=[common], help="Evaluate a checkpoint on a dataset bundle")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--dataset", required=True, help="Directory written by gen-data")
    ev.set_defaults(handler=command_eval)

    export = subparsers.add_parser("export-stencil", parents=[common], help="Write the first layer's stencil CSV")
    export.add_argument("--checkpoint", required=True)
    export.set_defaults(handler=command_export_stencil)
    return parser


def main(argv: List[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        TaskPool.set_max_workers(args.threads)
        return args.handler(args)
    except ConfigError as e:
        print(e, file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except GMLSError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
