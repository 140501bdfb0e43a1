"""Experiment harness: training loop, width sweep, balance study, comparison.

Every run is driven by an :class:`ExperimentConfig`, writes per-epoch
metrics as CSV plus a JSON sidecar holding the fully resolved config, and
is bit-reproducible from its seed (wall-clock timings excepted, which is
why :meth:`MetricsLog.canonical_bytes` drops that column).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .data import BatchStream, Dataset, SplitSpec, downsample, load_cifar_binary, load_idx, split_and_batch
from .errors import DataConsistencyError, NumericError
from .graph import NetworkGraph, build_layered
from .network import Batch, backprop, error_rate, mean_loss
from .norms import max_norm, path_norm_dp
from .optim import make_optimizer, sample_dropout
from .rescale import init_balanced, init_unbalanced
from .synthetic import ensure_synthetic_mnist

#: Environment variable that overrides the dataset directory.
DATA_DIR_ENV = "PATHREG_DATA_DIR"

_MASK_STREAM_TAG = 99991  # dropout RNG stream, distinct from epoch indices


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment run."""

    kind: str = "train"  # train | width-sweep | balance-study | optimizer-compare
    arch: tuple = (100, 256, 256, 10)
    dataset: str = "synthetic"  # synthetic | mnist | cifar10 | cifar100
    data_dir: str | None = None
    train_count: int = 5000
    validation_count: int = 1000
    test_count: int = 1000
    downsample_side: int = 10  # 0 keeps the native resolution
    optimizer: str = "sgd"
    optimizers: tuple = ("pathsgd", "sgd")  # balance-study / optimizer-compare
    alpha: float | None = None  # step size 10**-alpha; None = per-optimizer default
    momentum: float = 0.0
    anneal: bool = False
    p: float = 2.0
    dropout: bool = False
    retain_probability: float = 0.5
    epochs: int = 30
    batch_size: int = 100
    seed: int = 0
    widths: tuple = (4, 8, 16, 32, 64, 128, 256, 512)
    unbalanced_units: int | None = None  # default: one quarter of the hidden units
    alpha_grid: tuple = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    grid_epochs: int = 5
    selection: str = "best-final"  # or "fastest"
    objective_threshold: float = 0.1
    stop_patience: int | None = None
    stop_min_improvement: float = 1e-6
    out: str | None = None

    def resolved(self) -> dict:
        return dataclasses.asdict(self)


#: Per-optimizer default step-size exponents (step size = 10**-alpha).
DEFAULT_ALPHA = {"sgd": 1.0, "adagrad": 1.5, "pathsgd": 2.0}

METRIC_COLUMNS = (
    "epoch",
    "objective",
    "train_error",
    "validation_error",
    "test_error",
    "path_norm",
    "max_norm",
    "wall_seconds",
)


class MetricsLog:
    """Per-epoch metric rows with lossless CSV round-tripping."""

    def __init__(self, name: str, rows=None):
        self.name = name
        self.rows = list(rows) if rows else []

    def append(self, **values) -> None:
        missing = set(METRIC_COLUMNS) - set(values)
        if missing:
            raise ValueError(f"missing metric columns: {sorted(missing)}")
        bad = [k for k in METRIC_COLUMNS if not math.isfinite(values[k])]
        if bad:
            raise NumericError(f"non-finite metrics {bad}")
        self.rows.append(tuple(values[k] for k in METRIC_COLUMNS))

    def column(self, name: str) -> np.ndarray:
        idx = METRIC_COLUMNS.index(name)
        return np.array([row[idx] for row in self.rows])

    def _lines(self, include_wall: bool = True):
        cols = METRIC_COLUMNS if include_wall else METRIC_COLUMNS[:-1]
        yield ",".join(cols)
        for row in self.rows:
            cells = [str(int(row[0]))]
            cells += [repr(float(v)) for v in row[1 : len(cols)]]
            yield ",".join(cells)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            for line in self._lines():
                fh.write(line + "\n")

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization: everything except wall-clock times."""
        return ("\n".join(self._lines(include_wall=False)) + "\n").encode("ascii")

    @classmethod
    def from_csv(cls, path, name: str | None = None) -> "MetricsLog":
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != METRIC_COLUMNS:
                raise ValueError(f"unexpected metrics header {header}")
            rows = []
            for line in fh:
                cells = line.strip().split(",")
                rows.append(tuple([int(cells[0])] + [float(c) for c in cells[1:]]))
        return cls(name or os.path.splitext(os.path.basename(path))[0], rows)


@dataclass
class TrainResult:
    """Outcome of one training run."""

    log: MetricsLog
    weights: np.ndarray
    diverged: bool
    best_validation_epoch: int
    best_validation_error: float
    test_error_at_best: float

    def final(self, column: str) -> float:
        return float(self.log.column(column)[-1])

    def epochs_to_objective(self, threshold: float) -> int | None:
        """First recorded epoch whose objective is at or below ``threshold``."""
        col = self.log.column("objective")
        epochs = self.log.column("epoch")
        hit = np.flatnonzero(col <= threshold)
        return int(epochs[hit[0]]) if len(hit) else None


def train_network(
    g: NetworkGraph,
    w0: np.ndarray,
    optimizer,
    stream: BatchStream,
    *,
    epochs: int,
    validation_set: Dataset | None = None,
    test_set: Dataset | None = None,
    dropout: bool = False,
    retain_probability: float = 0.5,
    stop_patience: int | None = None,
    stop_min_improvement: float = 1e-6,
    name: str = "run",
) -> TrainResult:
    """Mini-batch training with per-epoch metrics.

    Records an epoch-0 row for the initial weights, then one row per epoch.
    Training halts early when the objective has not improved by at least
    ``stop_min_improvement`` over the last ``stop_patience`` epochs, or when
    the objective or the weights stop being finite (``diverged``).
    """
    w = w0.copy()
    train_batch = stream.dataset.as_batch()
    val_batch = validation_set.as_batch() if validation_set is not None else None
    test_batch = test_set.as_batch() if test_set is not None else None
    mask_rng = np.random.default_rng([stream.seed, _MASK_STREAM_TAG])
    hidden_scale = retain_probability if dropout else 1.0
    log = MetricsLog(name)
    best_val = math.inf
    best_epoch = 0
    test_at_best = math.nan
    history: list[float] = []
    diverged = False

    def evaluate(epoch: int, wall: float) -> float:
        objective = mean_loss(g, w, train_batch, hidden_scale=hidden_scale)
        if not math.isfinite(objective):
            return objective
        row = {
            "epoch": epoch,
            "objective": objective,
            "train_error": error_rate(g, w, train_batch, hidden_scale=hidden_scale),
            "validation_error": (
                error_rate(g, w, val_batch, hidden_scale=hidden_scale)
                if val_batch is not None
                else 0.0
            ),
            "test_error": (
                error_rate(g, w, test_batch, hidden_scale=hidden_scale)
                if test_batch is not None
                else 0.0
            ),
            "path_norm": path_norm_dp(g, w, 2.0),
            "max_norm": max_norm(g, w, 2.0),
            "wall_seconds": wall,
        }
        log.append(**row)
        nonlocal best_val, best_epoch, test_at_best
        if val_batch is not None and row["validation_error"] < best_val:
            best_val = row["validation_error"]
            best_epoch = epoch
            test_at_best = row["test_error"]
        return objective

    try:
        history.append(evaluate(0, 0.0))
        if not math.isfinite(history[0]):
            return TrainResult(log, w, True, best_epoch, best_val, test_at_best)
        for epoch in range(1, epochs + 1):
            started = time.perf_counter()
            for batch in stream.epoch(epoch - 1):
                retained = None
                if dropout:
                    retained = sample_dropout(g, retain_probability, mask_rng).retained
                grad, _ = backprop(g, w, batch, retained=retained)
                w = optimizer.step(w, grad)
            optimizer.end_epoch()
            if not np.isfinite(w).all():
                diverged = True
                break
            objective = evaluate(epoch, time.perf_counter() - started)
            if not math.isfinite(objective):
                diverged = True
                break
            history.append(objective)
            if stop_patience is not None and len(history) > stop_patience:
                recent_best = min(history[-stop_patience:])
                earlier_best = min(history[: -stop_patience])
                if earlier_best - recent_best < stop_min_improvement:
                    break
    except NumericError:
        diverged = True
    return TrainResult(log, w, diverged, best_epoch, best_val, test_at_best)


# ---------------------------------------------------------------------------
# data plumbing


def resolve_data_dir(config: ExperimentConfig) -> str:
    directory = config.data_dir or os.environ.get(DATA_DIR_ENV)
    if directory is None:
        directory = os.path.join(os.getcwd(), "pathreg-data")
    return directory


def load_experiment_data(config: ExperimentConfig):
    """Load (train pool, test set) per the config, downsampled if requested."""
    directory = resolve_data_dir(config)
    if config.dataset == "synthetic":
        needed = config.train_count + config.validation_count
        ensure_synthetic_mnist(
            directory, n_train=max(8000, needed), n_test=max(2000, config.test_count)
        )
        train = load_idx(
            os.path.join(directory, "train-images-idx3-ubyte"),
            os.path.join(directory, "train-labels-idx1-ubyte"),
            class_count=10,
        )
        test = load_idx(
            os.path.join(directory, "t10k-images-idx3-ubyte"),
            os.path.join(directory, "t10k-labels-idx1-ubyte"),
            class_count=10,
        )
    elif config.dataset == "mnist":
        train = load_idx(
            os.path.join(directory, "train-images-idx3-ubyte"),
            os.path.join(directory, "train-labels-idx1-ubyte"),
            class_count=10,
        )
        test = load_idx(
            os.path.join(directory, "t10k-images-idx3-ubyte"),
            os.path.join(directory, "t10k-labels-idx1-ubyte"),
            class_count=10,
        )
    elif config.dataset == "cifar10":
        train = load_cifar_binary(
            [os.path.join(directory, f"data_batch_{i}.bin") for i in range(1, 6)],
            variant="cifar10",
        )
        test = load_cifar_binary(os.path.join(directory, "test_batch.bin"), "cifar10")
    elif config.dataset == "cifar100":
        train = load_cifar_binary(os.path.join(directory, "train.bin"), "cifar100")
        test = load_cifar_binary(os.path.join(directory, "test.bin"), "cifar100")
    else:
        raise ValueError(f"unknown dataset {config.dataset!r}")
    if config.downsample_side:
        train = downsample(train, config.downsample_side)
        test = downsample(test, config.downsample_side)
    return train, test


def prepare_run(config: ExperimentConfig, arch=None):
    """Graph, initial weights, batch stream and evaluation sets for a run."""
    train_pool, test_pool = load_experiment_data(config)
    spec = SplitSpec(config.train_count, config.validation_count, config.seed)
    stream, validation = split_and_batch(train_pool, spec, config.batch_size)
    if config.test_count > len(test_pool):
        raise DataConsistencyError(
            f"test_count {config.test_count} exceeds test set size {len(test_pool)}"
        )
    test = test_pool.subset(np.arange(config.test_count))
    arch = tuple(arch if arch is not None else config.arch)
    if arch[0] != stream.dataset.dim or arch[-1] != stream.dataset.class_count:
        raise DataConsistencyError(
            f"architecture {arch} does not match data "
            f"(D={stream.dataset.dim}, C={stream.dataset.class_count})"
        )
    g = build_layered(arch)
    w0 = init_balanced(g, [config.seed, 1])
    return g, w0, stream, validation, test


def _build_optimizer(config: ExperimentConfig, g: NetworkGraph, kind: str, alpha=None):
    used_alpha = alpha if alpha is not None else config.alpha
    if used_alpha is None:
        used_alpha = DEFAULT_ALPHA[kind]
    step = 10.0 ** -float(used_alpha)
    if kind == "sgd":
        return make_optimizer("sgd", g, step, momentum=config.momentum, anneal=config.anneal)
    if kind == "pathsgd":
        return make_optimizer("pathsgd", g, step, p=config.p)
    return make_optimizer(kind, g, step)


# ---------------------------------------------------------------------------
# the three studies


@dataclass
class SweepCell:
    width: int
    result: TrainResult


def run_width_sweep(config: ExperimentConfig) -> list[SweepCell]:
    """Train one network per hidden width and record the error profile.

    Uses annealed momentum SGD (step 0.1, momentum 0.5 unless overridden)
    and stops a cell early once the objective stalls.  A diverging cell is
    recorded as such and the sweep continues.
    """
    cells = []
    for width in config.widths:
        cfg = dataclasses.replace(config)
        g, w0, stream, validation, test = prepare_run(
            cfg, arch=(config.arch[0], int(width), config.arch[-1])
        )
        optimizer = make_optimizer(
            "sgd",
            g,
            10.0 ** -float(config.alpha if config.alpha is not None else 1.0),
            momentum=config.momentum if config.momentum else 0.5,
            anneal=True,
        )
        result = train_network(
            g,
            w0,
            optimizer,
            stream,
            epochs=config.epochs,
            validation_set=validation,
            test_set=test,
            stop_patience=config.stop_patience or 5,
            stop_min_improvement=config.stop_min_improvement,
            name=f"width_{width}",
        )
        cells.append(SweepCell(width=int(width), result=result))
    return cells


def run_balance_study(config: ExperimentConfig) -> dict:
    """Train from a balanced start and its unbalanced rescaling-equivalent.

    Returns per optimizer a dict with both results and the largest relative
    per-epoch objective gap between the two starts.
    """
    out = {}
    for kind in config.optimizers:
        g, w0, stream, validation, test = prepare_run(config)
        n_units = config.unbalanced_units
        if n_units is None:
            n_units = max(1, len(g.hidden_nodes) // 4)
        w_unbalanced = init_unbalanced(g, w0, [config.seed, 2], n_units)
        results = {}
        for label, weights in (("balanced", w0), ("unbalanced", w_unbalanced)):
            optimizer = _build_optimizer(config, g, kind)
            results[label] = train_network(
                g,
                weights,
                optimizer,
                stream,
                epochs=config.epochs,
                validation_set=validation,
                test_set=test,
                dropout=config.dropout,
                retain_probability=config.retain_probability,
                name=f"balance_{kind}_{label}",
            )
        gap = _curve_gap(results["balanced"].log, results["unbalanced"].log)
        out[kind] = {
            "balanced": results["balanced"],
            "unbalanced": results["unbalanced"],
            "max_objective_rel_gap": gap,
        }
    return out


def _curve_gap(log_a: MetricsLog, log_b: MetricsLog) -> float:
    """Largest relative difference between two objective curves."""
    a = log_a.column("objective")
    b = log_b.column("objective")
    n = min(len(a), len(b))
    if n == 0:
        return math.inf
    a, b = a[:n], b[:n]
    return float((np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12)).max())


@dataclass
class CompareCell:
    optimizer: str
    alpha: float
    grid: dict
    result: TrainResult
    epochs_to_threshold: int | None


def select_alpha(config: ExperimentConfig, kind: str) -> tuple[float, dict]:
    """Grid-search the step-size exponent on the validation split.

    ``best-final`` picks the smallest final validation error (ties: fewer
    epochs to its best, then larger step); ``fastest`` picks the fewest
    epochs to its own best validation error (ties: smaller final error).
    """
    table = {}
    for alpha in config.alpha_grid:
        g, w0, stream, validation, test = prepare_run(config)
        optimizer = _build_optimizer(config, g, kind, alpha=alpha)
        result = train_network(
            g,
            w0,
            optimizer,
            stream,
            epochs=config.grid_epochs,
            validation_set=validation,
            dropout=config.dropout,
            retain_probability=config.retain_probability,
            name=f"grid_{kind}_a{alpha}",
        )
        final_val = math.inf if result.diverged else result.final("validation_error")
        table[float(alpha)] = {
            "final_validation_error": final_val,
            "best_validation_error": result.best_validation_error,
            "epochs_to_best": result.best_validation_epoch,
            "diverged": result.diverged,
        }
    if config.selection == "fastest":
        key = lambda a: (
            table[a]["epochs_to_best"] if not table[a]["diverged"] else math.inf,
            table[a]["final_validation_error"],
            a,
        )
    else:
        key = lambda a: (
            table[a]["final_validation_error"],
            table[a]["epochs_to_best"],
            a,
        )
    best = min((float(a) for a in config.alpha_grid), key=key)
    return best, table


def run_optimizer_compare(config: ExperimentConfig) -> list[CompareCell]:
    """Learning curves for each optimizer at its grid-selected step size."""
    cells = []
    for kind in config.optimizers:
        alpha, grid = select_alpha(config, kind)
        g, w0, stream, validation, test = prepare_run(config)
        optimizer = _build_optimizer(config, g, kind, alpha=alpha)
        result = train_network(
            g,
            w0,
            optimizer,
            stream,
            epochs=config.epochs,
            validation_set=validation,
            test_set=test,
            dropout=config.dropout,
            retain_probability=config.retain_probability,
            name=f"compare_{kind}",
        )
        cells.append(
            CompareCell(
                optimizer=kind,
                alpha=alpha,
                grid=grid,
                result=result,
                epochs_to_threshold=result.epochs_to_objective(config.objective_threshold),
            )
        )
    return cells


# ---------------------------------------------------------------------------
# timing and output plumbing


def measure_step_time(g: NetworkGraph, kind: str, batch: Batch, *, seed=0, reps=30, p=2.0):
    """Median seconds per full optimization step (gradient plus update)."""
    w = init_balanced(g, seed)
    kwargs = {"p": p} if kind == "pathsgd" else {}
    optimizer = make_optimizer(kind, g, 1e-3, **kwargs)
    times = []
    for rep in range(reps + 3):
        started = time.perf_counter()
        grad, _ = backprop(g, w, batch)
        w2 = optimizer.step(w, grad)
        elapsed = time.perf_counter() - started
        if rep >= 3:  # warmup discarded
            times.append(elapsed)
        del w2
    return float(np.median(times))


def write_run_outputs(config: ExperimentConfig, logs: dict, out_dir, extra: dict | None = None):
    """Write metric CSVs plus the resolved config (and optional summary)."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="ascii") as fh:
        json.dump(config.resolved(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, log in logs.items():
        log.to_csv(os.path.join(out_dir, f"{name}.csv"))
    if extra is not None:
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="ascii") as fh:
            json.dump(extra, fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")
