"""Self-verification: oracle equivalences, invariances, gradient checks.

Every check is a function returning ``(passed, detail)``; `run_verify`
executes them all with per-check timing and returns structured results.
Failures carry the seed and a compact description of the counterexample
so they can be replayed deterministically.

The random-net generators here are shared with the test suite: layered
generators produce graphs where every input-to-output path has the same
length (which the balancing identity requires); `random_dag` additionally
splices in skip connections to exercise the general-DAG code paths.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .graph import NetworkGraph, build_dag, build_layered
from .network import (
    Batch,
    backprop,
    forward,
    loss_gradient,
    mean_loss,
    output_scores,
    softmax_cross_entropy,
    truncated_softmax_loss,
)
from .norms import max_norm, path_norm_bruteforce, path_norm_dp
from .optim import PathScaleTable, PathSGD, SGD, compute_path_scales, edge_scale_bruteforce
from .rescale import (
    balance,
    init_balanced,
    is_rescaling_equivalent,
    random_rescale_ops,
    rescale_sequence,
)

P_GRID = (1.0, 1.5, 2.0, 3.0)


# ---------------------------------------------------------------------------
# random instances


def random_layered_graph(
    rng, max_hidden_layers: int = 2, max_width: int = 4, drop: float = 0.35, outputs: int | None = None
) -> NetworkGraph:
    """Sparse layered DAG: consecutive-layer edges only, no dead units.

    Edges are dropped independently, then repaired so every non-input node
    keeps an incoming edge and every non-output node an outgoing one.
    ``outputs`` pins the size of the last layer.
    """
    n_layers = int(rng.integers(2, max_hidden_layers + 3))  # includes in/out layers
    sizes = [int(rng.integers(1, max_width + 1)) for _ in range(n_layers)]
    if outputs is not None:
        sizes[-1] = outputs
    starts = np.concatenate(([0], np.cumsum(sizes)))
    nodes = list(range(int(starts[-1])))
    edges = set()
    for l in range(n_layers - 1):
        for u in range(starts[l], starts[l + 1]):
            for v in range(starts[l + 1], starts[l + 2]):
                if rng.random() >= drop:
                    edges.add((u, v))
    for l in range(n_layers - 1):
        for u in range(starts[l], starts[l + 1]):
            if not any(e[0] == u for e in edges):
                edges.add((u, int(rng.integers(starts[l + 1], starts[l + 2]))))
        for v in range(starts[l + 1], starts[l + 2]):
            if not any(e[1] == v for e in edges):
                edges.add((int(rng.integers(starts[l], starts[l + 1])), v))
    return build_dag(
        nodes,
        input_nodes=nodes[: sizes[0]],
        output_nodes=nodes[starts[-2] : starts[-1]],
        edges=sorted(edges),
    )


def random_dag(rng, skip_prob: float = 0.5, **kwargs) -> NetworkGraph:
    """Layered random graph plus occasional skip connections (general DAG)."""
    g = random_layered_graph(rng, **kwargs)
    if g.depth < 2 or rng.random() >= skip_prob:
        return g
    edges = {(int(u), int(v)) for u, v in g.edges}
    levels = g.level_in
    for _ in range(int(rng.integers(1, 3))):
        u = int(rng.integers(0, g.n_nodes))
        far = np.flatnonzero((levels >= levels[u] + 2) & ~g.is_input)
        if len(far) == 0 or g.is_output[u]:
            continue
        v = int(rng.choice(far))
        edges.add((u, v))
    return build_dag(
        range(g.n_nodes),
        input_nodes=g.input_nodes.tolist(),
        output_nodes=g.output_nodes.tolist(),
        edges=sorted(edges),
    )


def random_weights(rng, g: NetworkGraph, low: float = -2.0, high: float = 2.0, min_abs: float = 0.0) -> np.ndarray:
    """Uniform signed weights; ``min_abs`` pushes magnitudes away from zero."""
    w = rng.uniform(low, high, size=g.n_edges)
    if min_abs > 0:
        sign = np.where(w < 0, -1.0, 1.0)
        w = sign * np.maximum(np.abs(w), min_abs)
    return w


def random_training_setup(rng, n_examples: int = 16):
    """Small graded net with data, for optimizer-trajectory checks."""
    sizes = [int(rng.integers(2, 5)) for _ in range(int(rng.integers(3, 5)))]
    g = build_layered(sizes)
    w = init_balanced(g, int(rng.integers(2**31)))
    X = rng.normal(0.0, 1.0, size=(n_examples, sizes[0]))
    y = rng.integers(0, sizes[-1], size=n_examples)
    return g, w, Batch(inputs=X, labels=y)


# ---------------------------------------------------------------------------
# checks


def check_path_norm_oracle(seed: int = 20240, trials: int = 200, rel_tol: float = 1e-10):
    """DP path norm equals brute-force enumeration on random DAGs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        g = random_dag(rng)
        w = random_weights(rng, g)
        p = P_GRID[trial % len(P_GRID)]
        dp = path_norm_dp(g, w, p)
        brute = path_norm_bruteforce(g, w, p)
        rel = abs(dp - brute) / max(abs(brute), 1e-300)
        worst = max(worst, rel)
        if rel > rel_tol:
            return False, (
                f"trial {trial} (seed {seed}): p={p}, dp={dp!r} vs brute={brute!r}, "
                f"rel={rel:.3e}; layers={g.layer_sizes}, edges={g.edges.tolist()}, w={w.tolist()}"
            )
    return True, f"{trials} graphs, worst rel err {worst:.2e}"


def check_edge_scales_oracle(seed: int = 20241, trials: int = 200, rel_tol: float = 1e-10, scales_fn=compute_path_scales):
    """Per-edge step scalings match the excluded-product path sums."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        g = random_dag(rng)
        w = random_weights(rng, g)
        p = P_GRID[trial % len(P_GRID)]
        table = scales_fn(g, w, p)
        for e in range(g.n_edges):
            brute = edge_scale_bruteforce(g, w, e, p)
            rel = abs(table.gamma_edge[e] - brute) / max(abs(brute), 1e-300)
            worst = max(worst, rel)
            if rel > rel_tol:
                u, v = g.edges[e]
                return False, (
                    f"trial {trial} (seed {seed}): edge {e} ({u}->{v}), p={p}, "
                    f"table={table.gamma_edge[e]!r} vs brute={brute!r}, rel={rel:.3e}; "
                    f"edges={g.edges.tolist()}, w={w.tolist()}"
                )
    return True, f"{trials} graphs, worst rel err {worst:.2e}"


def check_rescale_invariances(seed: int = 20242, trials: int = 60):
    """Rescaling changes neither the computed function nor the path norm."""
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        g = random_layered_graph(rng)
        if len(g.hidden_nodes) == 0:
            continue
        w = random_weights(rng, g, min_abs=0.05)
        ops = random_rescale_ops(g, rng, count=int(rng.integers(1, 5)))
        w2 = rescale_sequence(g, w, ops)
        X = rng.normal(0.0, 1.0, size=(8, g.n_inputs))
        s1 = output_scores(g, w, X)
        s2 = output_scores(g, w2, X)
        scale = max(np.abs(s1).max(), 1e-12)
        if not np.allclose(s1, s2, rtol=1e-10, atol=1e-10 * scale):
            return False, f"trial {trial} (seed {seed}): outputs moved under rescaling"
        for p in P_GRID:
            phi1 = path_norm_dp(g, w, p)
            phi2 = path_norm_dp(g, w2, p)
            if abs(phi1 - phi2) > 1e-12 * max(phi1, 1e-300):
                return False, (
                    f"trial {trial} (seed {seed}): path norm moved {phi1!r} -> {phi2!r} at p={p}"
                )
    return True, f"{trials} graphs x {len(P_GRID)} orders"


def check_balance_identity(seed: int = 20243, trials: int = 50, rel_tol: float = 1e-6):
    """Balancing attains the minimum per-unit max-norm: phi_p = mu^depth.

    Also verifies no sampled rescaling beats the balanced value, and that
    balancing never increases the max-norm.
    """
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        g = random_layered_graph(rng)
        if len(g.hidden_nodes) == 0:
            continue
        w = random_weights(rng, g, min_abs=0.1)
        p = P_GRID[trial % len(P_GRID)]
        phi = path_norm_bruteforce(g, w, p)
        balanced = balance(g, w, p)
        mu_balanced = max_norm(g, balanced, p)
        attained = mu_balanced**g.depth
        if abs(attained - phi) > rel_tol * max(phi, 1e-300):
            return False, (
                f"trial {trial} (seed {seed}): phi={phi!r} but balanced mu^d={attained!r}; "
                f"layers from sizes={g.layer_sizes}, edges={g.edges.tolist()}, w={w.tolist()}"
            )
        if mu_balanced > max_norm(g, w, p) * (1 + 1e-12):
            return False, f"trial {trial} (seed {seed}): balancing increased the max-norm"
        for _ in range(8):
            ops = random_rescale_ops(g, rng, count=int(rng.integers(1, 6)))
            sampled = max_norm(g, rescale_sequence(g, w, ops), p) ** g.depth
            if sampled < phi - rel_tol * max(phi, 1e-300):
                return False, (
                    f"trial {trial} (seed {seed}): sampled rescaling beat the balanced "
                    f"optimum ({sampled!r} < {phi!r})"
                )
    return True, f"{trials} graded nets"


def check_loss_bound(seed: int = 20244, trials: int = 10_000, classes: int = 10):
    """Truncated loss stays within 3e-7 * classes... of plain cross entropy."""
    rng = np.random.default_rng(seed)
    bound = 0.000003 * classes
    worst = 0.0
    for trial in range(trials):
        scores = rng.uniform(-30.0, 30.0, size=classes)
        label = int(rng.integers(classes))
        if trial % 3 == 1:  # force a margin straddling the two branch points
            other = (label + 1 + int(rng.integers(classes - 1))) % classes
            scores[other] = scores[label] - rng.uniform(10.0, 14.0)
        gap = abs(
            truncated_softmax_loss(scores, label) - softmax_cross_entropy(scores, label)
        )
        worst = max(worst, gap)
        if gap > bound:
            return False, (
                f"trial {trial} (seed {seed}): |loss - reference| = {gap!r} > {bound}; "
                f"scores={scores.tolist()}, label={label}"
            )
    return True, f"{trials} score vectors, worst gap {worst:.2e} <= {bound}"


def check_loss_continuity(tol: float = 1e-12):
    """Value and gradient agree across the exponential branch point."""
    for delta in (0.0, 1e-9, 1e-7):
        lo = np.array([0.0, -11.0 - delta])
        hi = np.array([0.0, -11.0 + delta])
        dv = abs(truncated_softmax_loss(hi, 0) - truncated_softmax_loss(lo, 0))
        dg = np.abs(loss_gradient(hi, 0) - loss_gradient(lo, 0)).max()
        if dv > tol + 2 * delta or dg > tol + 2 * delta:
            return False, f"branch mismatch at offset {delta}: value {dv!r}, gradient {dg!r}"
    return True, "value and gradient continuous at the branch point"


def check_gradients(seed: int = 20245, trials: int = 20, rel_tol: float = 1e-5, step: float = 1e-4):
    """Backprop matches central finite differences away from ReLU kinks."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        g, w, batch = random_training_setup(rng, n_examples=6)
        clear = False
        for _ in range(20):  # resample until no pre-activation sits near a kink
            record = forward(g, w, batch.inputs)
            margins = np.abs(record.pre[:, g.hidden_nodes])
            if margins.size == 0 or margins.min() > 1e-2:
                clear = True
                break
            w = init_balanced(g, int(rng.integers(2**31)))
        if not clear:
            continue
        grad, _ = backprop(g, w, batch)
        numeric = np.empty_like(grad)
        for e in range(g.n_edges):
            w_hi = w.copy()
            w_hi[e] += step
            w_lo = w.copy()
            w_lo[e] -= step
            numeric[e] = (mean_loss(g, w_hi, batch) - mean_loss(g, w_lo, batch)) / (2 * step)
        denom = max(np.abs(numeric).max(), 1e-8)
        rel = np.abs(grad - numeric).max() / denom
        worst = max(worst, rel)
        if rel > rel_tol:
            return False, (
                f"trial {trial} (seed {seed}): gradient mismatch rel={rel:.3e}; "
                f"layers={g.layer_sizes}, w={w.tolist()}"
            )
    return True, f"{trials} nets, worst rel err {worst:.2e}"


def check_pathsgd_reduces_to_sgd(seed: int = 20246):
    """With all scalings forced to one, the update is bit-identical to SGD."""
    rng = np.random.default_rng(seed)
    g, w, batch = random_training_setup(rng)

    def unit_scales(graph, weights, p):
        return PathScaleTable(
            gamma_in=np.ones(graph.n_nodes),
            gamma_out=np.ones(graph.n_nodes),
            gamma_edge=np.ones(graph.n_edges),
        )

    a = PathSGD(g, 0.05, scales_fn=unit_scales)
    b = SGD(0.05, momentum=0.0)
    wa, wb = w.copy(), w.copy()
    for _ in range(25):
        ga, _ = backprop(g, wa, batch)
        gb, _ = backprop(g, wb, batch)
        wa = a.step(wa, ga)
        wb = b.step(wb, gb)
        if not np.array_equal(wa, wb):
            return False, f"trajectories split (seed {seed})"
    return True, "25 steps bit-identical"


def check_pathsgd_invariance(
    seed: int = 20247,
    trials: int = 20,
    steps: int = 100,
    tol: float = 1e-6,
    loss_rel_tol: float = 1e-8,
):
    """Path-scaled trajectories started at rescaling-equivalent points stay
    equivalent step by step, with matching loss curves."""
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        g, w, batch = random_training_setup(rng)
        ops = random_rescale_ops(g, rng, count=int(rng.integers(2, 6)))
        w_tilde = rescale_sequence(g, w, ops)
        opt_a = PathSGD(g, 0.01)
        opt_b = PathSGD(g, 0.01)
        for t in range(steps):
            ga, la = backprop(g, w, batch)
            gb, lb = backprop(g, w_tilde, batch)
            if abs(la - lb) > loss_rel_tol * max(abs(la), 1e-300):
                return False, (
                    f"trial {trial} (seed {seed}): losses split at step {t}: {la!r} vs {lb!r}"
                )
            w = opt_a.step(w, ga)
            w_tilde = opt_b.step(w_tilde, gb)
            if not is_rescaling_equivalent(g, w, w_tilde, tol=tol):
                return False, (
                    f"trial {trial} (seed {seed}): equivalence lost at step {t}; "
                    f"layers={g.layer_sizes}"
                )
    return True, f"{trials} nets x {steps} steps"


def check_sgd_not_invariant(seed: int = 20248, trials: int = 8, steps: int = 10, tol: float = 1e-6):
    """Negative control: plain SGD breaks rescaling equivalence quickly."""
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        g, w, batch = random_training_setup(rng)
        ops = random_rescale_ops(g, rng, count=4, log_range=(0.7, 1.6))
        w_tilde = rescale_sequence(g, w, ops)
        opt_a = SGD(0.05)
        opt_b = SGD(0.05)
        broken = False
        for _ in range(steps):
            ga, _ = backprop(g, w, batch)
            gb, _ = backprop(g, w_tilde, batch)
            w = opt_a.step(w, ga)
            w_tilde = opt_b.step(w_tilde, gb)
            if not is_rescaling_equivalent(g, w, w_tilde, tol=tol):
                broken = True
                break
        if not broken:
            return False, (
                f"trial {trial} (seed {seed}): SGD stayed equivalent for {steps} steps"
            )
    return True, f"equivalence broke within {steps} steps on all {trials} nets"


def check_batch_determinism(seed: int = 20249):
    """Identical seeds give identical batch sequences."""
    from .data import BatchStream, Dataset

    rng = np.random.default_rng(seed)
    ds = Dataset(
        images=rng.random((40, 5)), labels=rng.integers(0, 3, 40), class_count=3
    )
    a = BatchStream(ds, 7, seed=3)
    b = BatchStream(ds, 7, seed=3)
    for epoch in range(3):
        for x, y in zip(a.epoch(epoch), b.epoch(epoch)):
            if not (np.array_equal(x.inputs, y.inputs) and np.array_equal(x.labels, y.labels)):
                return False, f"epoch {epoch} diverged"
    sizes = [len(batch) for batch in a.epoch(0)]
    if sizes != [7, 7, 7, 7, 7, 5]:
        return False, f"unexpected batch sizes {sizes}"
    return True, "3 epochs identical, short final batch kept"


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float
    detail: str


ALL_CHECKS = (
    ("path-norm-dp-vs-bruteforce", check_path_norm_oracle),
    ("edge-scales-vs-bruteforce", check_edge_scales_oracle),
    ("rescaling-leaves-function-and-path-norm", check_rescale_invariances),
    ("balanced-max-norm-identity", check_balance_identity),
    ("truncated-loss-tracks-cross-entropy", check_loss_bound),
    ("loss-branch-continuity", check_loss_continuity),
    ("backprop-vs-finite-differences", check_gradients),
    ("unit-scales-reduce-to-sgd", check_pathsgd_reduces_to_sgd),
    ("path-sgd-rescaling-invariance", check_pathsgd_invariance),
    ("sgd-not-rescaling-invariant", check_sgd_not_invariant),
    ("batch-stream-determinism", check_batch_determinism),
)

_FAST_OVERRIDES = {
    "path-norm-dp-vs-bruteforce": {"trials": 40},
    "edge-scales-vs-bruteforce": {"trials": 40},
    "balanced-max-norm-identity": {"trials": 15},
    "truncated-loss-tracks-cross-entropy": {"trials": 2000},
    "backprop-vs-finite-differences": {"trials": 6},
    "path-sgd-rescaling-invariance": {"trials": 4, "steps": 30},
}


def run_verify(fast: bool = False, echo=None) -> list[CheckResult]:
    """Run every check; returns results and optionally prints one line each."""
    results = []
    for name, fn in ALL_CHECKS:
        kwargs = _FAST_OVERRIDES.get(name, {}) if fast else {}
        started = time.perf_counter()
        passed, detail = fn(**kwargs)
        seconds = time.perf_counter() - started
        results.append(CheckResult(name=name, passed=passed, seconds=seconds, detail=detail))
        if echo is not None:
            status = "PASS" if passed else "FAIL"
            echo(f"[{status}] {name} ({seconds:.2f}s) {detail}")
    return results
