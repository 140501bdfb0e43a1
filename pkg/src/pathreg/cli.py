"""Command-line experiment harness.

Subcommands: ``train``, ``sweep-width``, ``balance-study``,
``compare-optimizers``, ``verify``.  Every experiment writes per-epoch
metric CSVs and a ``config.json`` with the fully resolved configuration
into ``--out``.  Exit codes: 0 success, 1 experiment failure, 2
verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .experiments import (
    DATA_DIR_ENV,
    ExperimentConfig,
    make_optimizer,
    prepare_run,
    run_balance_study,
    run_optimizer_compare,
    run_width_sweep,
    train_network,
    write_run_outputs,
    _build_optimizer,
)
from .graph import parse_architecture, read_graph_file
from .verify import run_verify


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--arch", default=None,
                        help="layer sizes like 100x256x10, or a graph description file")
    parser.add_argument("--dataset", default="synthetic",
                        choices=["synthetic", "mnist", "cifar10", "cifar100"])
    parser.add_argument("--data-dir", default=None,
                        help=f"dataset directory (also {DATA_DIR_ENV} env var)")
    parser.add_argument("--train-count", type=int, default=5000)
    parser.add_argument("--validation-count", type=int, default=1000)
    parser.add_argument("--test-count", type=int, default=1000)
    parser.add_argument("--downsample", type=int, default=10, metavar="SIDE",
                        help="downsample images to SIDE x SIDE (0 = keep native)")
    parser.add_argument("--optimizer", default="sgd", choices=["sgd", "adagrad", "pathsgd"])
    parser.add_argument("--alpha", type=float, default=None,
                        help="step size exponent: step = 10^-alpha")
    parser.add_argument("--momentum", type=float, default=0.0)
    parser.add_argument("--anneal", action="store_true",
                        help="per-epoch schedule: step x0.99, momentum +0.02 (cap 0.9)")
    parser.add_argument("--p", type=float, default=2.0, help="path-regularizer order")
    parser.add_argument("--dropout", action="store_true")
    parser.add_argument("--retain-probability", type=float, default=0.5)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch-size", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="output directory for metrics")


def _config_from_args(args, kind: str) -> ExperimentConfig:
    arch = (100, 256, 256, 10)
    if args.arch:
        if os.path.exists(args.arch):
            g = read_graph_file(args.arch)
            if g.layer_sizes is None:
                raise SystemExit("experiment harness needs a layered --arch")
            arch = tuple(g.layer_sizes)
        else:
            arch = tuple(parse_architecture(args.arch))
    cfg = ExperimentConfig(
        kind=kind,
        arch=arch,
        dataset=args.dataset,
        data_dir=args.data_dir,
        train_count=args.train_count,
        validation_count=args.validation_count,
        test_count=args.test_count,
        downsample_side=args.downsample,
        optimizer=args.optimizer,
        alpha=args.alpha,
        momentum=args.momentum,
        anneal=args.anneal,
        p=args.p,
        dropout=args.dropout,
        retain_probability=args.retain_probability,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        out=args.out,
    )
    extra = {}
    if getattr(args, "widths", None):
        extra["widths"] = tuple(int(w) for w in args.widths.split(","))
    if getattr(args, "optimizers", None):
        extra["optimizers"] = tuple(args.optimizers.split(","))
    if getattr(args, "unbalanced_units", None) is not None:
        extra["unbalanced_units"] = args.unbalanced_units
    if getattr(args, "grid_epochs", None) is not None:
        extra["grid_epochs"] = args.grid_epochs
    if getattr(args, "selection", None):
        extra["selection"] = args.selection
    return dataclasses.replace(cfg, **extra) if extra else cfg


def _out_dir(args, default: str) -> str:
    return args.out or default


def _cmd_train(args) -> int:
    cfg = _config_from_args(args, "train")
    g, w0, stream, validation, test = prepare_run(cfg)
    optimizer = _build_optimizer(cfg, g, cfg.optimizer)
    result = train_network(
        g, w0, optimizer, stream,
        epochs=cfg.epochs, validation_set=validation, test_set=test,
        dropout=cfg.dropout, retain_probability=cfg.retain_probability,
        name=f"train_{cfg.optimizer}",
    )
    out = _out_dir(args, "pathreg-out/train")
    summary = {
        "diverged": result.diverged,
        "final_objective": result.final("objective"),
        "final_train_error": result.final("train_error"),
        "final_test_error": result.final("test_error"),
        "best_validation_epoch": result.best_validation_epoch,
    }
    write_run_outputs(cfg, {result.log.name: result.log}, out, extra=summary)
    print(f"wrote {out}; final objective {summary['final_objective']:.6f}, "
          f"train error {summary['final_train_error']:.4f}, "
          f"test error {summary['final_test_error']:.4f}")
    return 1 if result.diverged else 0


def _cmd_sweep(args) -> int:
    cfg = _config_from_args(args, "width-sweep")
    if not args.arch:
        cfg = dataclasses.replace(cfg, arch=(100, 32, 10))
    cells = run_width_sweep(cfg)
    out = _out_dir(args, "pathreg-out/width-sweep")
    logs = {cell.result.log.name: cell.result.log for cell in cells}
    summary = {
        str(cell.width): {
            "diverged": cell.result.diverged,
            "final_train_error": cell.result.final("train_error") if cell.result.log.rows else None,
            "final_test_error": cell.result.final("test_error") if cell.result.log.rows else None,
            "early_stop_test_error": cell.result.test_error_at_best,
            "best_validation_epoch": cell.result.best_validation_epoch,
        }
        for cell in cells
    }
    write_run_outputs(cfg, logs, out, extra=summary)
    print(f"wrote {out}")
    for cell in cells:
        row = summary[str(cell.width)]
        print(f"  H={cell.width:>4}  train {row['final_train_error']}  "
              f"test {row['final_test_error']}  early-stop test {row['early_stop_test_error']}")
    return 1 if all(cell.result.diverged for cell in cells) else 0


def _cmd_balance(args) -> int:
    cfg = _config_from_args(args, "balance-study")
    studies = run_balance_study(cfg)
    out = _out_dir(args, "pathreg-out/balance-study")
    logs = {}
    summary = {}
    for kind, bundle in studies.items():
        for label in ("balanced", "unbalanced"):
            logs[bundle[label].log.name] = bundle[label].log
        summary[kind] = {
            "max_objective_rel_gap": bundle["max_objective_rel_gap"],
            "balanced_final_objective": bundle["balanced"].final("objective"),
            "unbalanced_final_objective": (
                bundle["unbalanced"].final("objective")
                if bundle["unbalanced"].log.rows else None
            ),
            "unbalanced_diverged": bundle["unbalanced"].diverged,
        }
    write_run_outputs(cfg, logs, out, extra=summary)
    print(f"wrote {out}")
    for kind, row in summary.items():
        print(f"  {kind}: balanced/unbalanced objective gap {row['max_objective_rel_gap']:.3e}")
    return 0


def _cmd_compare(args) -> int:
    cfg = _config_from_args(args, "optimizer-compare")
    if not getattr(args, "optimizers", None):
        cfg = dataclasses.replace(cfg, optimizers=("sgd", "adagrad", "pathsgd"))
    cells = run_optimizer_compare(cfg)
    out = _out_dir(args, "pathreg-out/optimizer-compare")
    logs = {cell.result.log.name: cell.result.log for cell in cells}
    summary = {
        cell.optimizer: {
            "alpha": cell.alpha,
            "epochs_to_objective_threshold": cell.epochs_to_threshold,
            "final_objective": cell.result.final("objective"),
            "final_train_error": cell.result.final("train_error"),
            "final_test_error": cell.result.final("test_error"),
            "grid": cell.grid,
        }
        for cell in cells
    }
    write_run_outputs(cfg, logs, out, extra=summary)
    print(f"wrote {out}")
    threshold = cfg.objective_threshold
    for cell in cells:
        print(f"  {cell.optimizer:>8}: alpha={cell.alpha:g}, "
              f"epochs to objective<={threshold}: {cell.epochs_to_threshold}, "
              f"final test error {cell.result.final('test_error'):.4f}")
    return 0


def _cmd_verify(args) -> int:
    results = run_verify(fast=args.fast, echo=print)
    failed = [r for r in results if not r.passed]
    total = sum(r.seconds for r in results)
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in {total:.1f}s")
    return 2 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pathreg",
        description="Train feedforward ReLU networks under the path-regularizer geometry.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="single training run")
    _add_common(p_train)
    p_train.set_defaults(fn=_cmd_train)

    p_sweep = sub.add_parser("sweep-width", help="hidden-width sweep (single hidden layer)")
    _add_common(p_sweep)
    p_sweep.add_argument("--widths", default=None, help="comma-separated hidden sizes")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_bal = sub.add_parser("balance-study", help="balanced vs unbalanced initialization")
    _add_common(p_bal)
    p_bal.add_argument("--optimizers", default=None, help="comma-separated optimizer kinds")
    p_bal.add_argument("--unbalanced-units", type=int, default=None)
    p_bal.set_defaults(fn=_cmd_balance)

    p_cmp = sub.add_parser("compare-optimizers", help="grid-tuned learning curves")
    _add_common(p_cmp)
    p_cmp.add_argument("--optimizers", default=None, help="comma-separated optimizer kinds")
    p_cmp.add_argument("--grid-epochs", type=int, default=None)
    p_cmp.add_argument("--selection", default=None, choices=["best-final", "fastest"])
    p_cmp.set_defaults(fn=_cmd_compare)

    p_ver = sub.add_parser("verify", help="run the self-verification suite")
    p_ver.add_argument("--fast", action="store_true", help="reduced trial counts")
    p_ver.set_defaults(fn=_cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # experiment failures exit 1, not a traceback
        if args.command == "verify":
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
