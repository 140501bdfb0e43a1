"""Rescaling symmetry of ReLU networks: apply, canonicalize, test, initialize.

Scaling every incoming weight of a hidden unit by c > 0 and every outgoing
weight by 1/c leaves the computed function unchanged.  Two weight settings
are rescaling equivalent when a sequence of such operations maps one to the
other.  `balance` produces a canonical representative of the equivalence
class, which makes equivalence decidable by entrywise comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateUnitError,
    InvalidFactorError,
    InvalidRequestError,
    NumericError,
    RoleViolationError,
)
from .graph import NetworkGraph
from .norms import (
    _abs_pow,
    _check_w,
    incoming_power_sums,
    outgoing_power_sums,
    path_norm_dp,
    path_vector,
)

#: Path-vector cross-check in equivalence tests is skipped above this count.
EQUIVALENCE_PATH_CAP = 4096


@dataclass(frozen=True)
class RescaleOp:
    """Multiply incoming edges of ``node`` by ``factor``, divide outgoing."""

    node: int
    factor: float

    def __post_init__(self):
        if not (math.isfinite(self.factor) and self.factor > 0):
            raise InvalidFactorError(f"factor must be finite and > 0, got {self.factor}")


def rescale(g: NetworkGraph, w, op: RescaleOp) -> np.ndarray:
    """Apply one rescaling operation; the input weights are not modified."""
    w = _check_w(g, w)
    if not g.is_hidden[op.node]:
        raise RoleViolationError(f"node {op.node} is not a hidden unit")
    out = w.copy()
    out[g.edge_targets == op.node] *= op.factor
    out[g.edge_sources == op.node] /= op.factor
    return out


def rescale_sequence(g: NetworkGraph, w, ops) -> np.ndarray:
    """Apply a sequence of rescaling operations in order."""
    w = _check_w(g, w).copy()
    for op in ops:
        w = rescale(g, w, op)
    return w


def random_rescale_ops(g: NetworkGraph, rng, count: int, log_range=(-1.6, 1.6)):
    """Random rescaling sequence: hidden nodes with replacement, log-uniform
    factors.  Useful for invariance tests and unbalancing."""
    if len(g.hidden_nodes) == 0:
        raise InvalidRequestError("graph has no hidden units")
    nodes = rng.choice(g.hidden_nodes, size=count, replace=True)
    factors = np.exp(rng.uniform(log_range[0], log_range[1], size=count))
    return [RescaleOp(int(v), float(c)) for v, c in zip(nodes, factors)]


def _check_nondegenerate(g: NetworkGraph, w, p: float) -> None:
    inc = incoming_power_sums(g, w, p)
    out = outgoing_power_sums(g, w, p)
    bad = g.hidden_nodes[(inc[g.hidden_nodes] == 0) | (out[g.hidden_nodes] == 0)]
    if len(bad):
        raise DegenerateUnitError(
            f"hidden units with an all-zero weight group: {bad.tolist()}"
        )


def balance(g: NetworkGraph, w, p: float = 2.0) -> np.ndarray:
    """Canonical representative of the rescaling-equivalence class of ``w``.

    One topological sweep rescales every hidden unit so its incoming l_p
    group norm equals ``path_norm(w)^(1/depth)``.  On graphs where every
    input-to-output path has the same length this attains the smallest
    per-unit max-norm among all equivalent networks (and the canonical
    form is unique, enabling entrywise equivalence tests).
    """
    w = _check_w(g, w)
    _check_nondegenerate(g, w, p)
    phi = path_norm_dp(g, w, p)
    target_mass = phi ** (p / g.depth)  # incoming group |.|^p mass after balancing
    vals = _abs_pow(w, p)
    inv_c_pow = np.ones(g.n_nodes)  # 1 / c_v^p
    for plan in g.in_plans:
        mass = inv_c_pow[plan.sources] @ plan.matrix(vals)
        hidden = g.is_hidden[plan.targets]
        # c_v^p = target_mass / mass sets the rescaled group mass to target_mass
        inv_c_pow[plan.targets[hidden]] = mass[hidden] / target_mass
    c = inv_c_pow ** (-1.0 / p)
    out = w * c[g.edge_targets] / c[g.edge_sources]
    if not np.isfinite(out).all():
        raise NumericError("balancing overflowed; weights span too many scales")
    return out


def is_rescaling_equivalent(g: NetworkGraph, w1, w2, tol: float = 1e-6) -> bool:
    """Whether two weight settings are rescaling equivalent within ``tol``.

    Both are mapped to the canonical balanced form and compared entrywise;
    on graphs small enough to enumerate, the path vectors are compared as a
    second witness.
    """
    b1 = balance(g, w1, 2.0)
    b2 = balance(g, w2, 2.0)
    scale = max(np.abs(b1).max(), np.abs(b2).max())
    if not np.allclose(b1, b2, rtol=tol, atol=tol * scale):
        return False
    if g.path_count() <= EQUIVALENCE_PATH_CAP:
        v1 = path_vector(g, w1).values
        v2 = path_vector(g, w2).values
        mag = np.maximum(np.abs(v1), np.abs(v2))
        if not (np.abs(v1 - v2) <= tol * np.maximum(mag, mag.max())).all():
            return False
    return True


def init_balanced(g: NetworkGraph, seed) -> np.ndarray:
    """Gaussian weights with per-unit std 1/sqrt(fan-in); deterministic per seed."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(g.n_edges)
    w *= 1.0 / np.sqrt(g.in_degree[g.edge_targets])
    return w


def init_unbalanced(g: NetworkGraph, w_balanced, seed, n_units: int) -> np.ndarray:
    """Unbalance a network by random rescalings (equivalent by construction).

    Picks ``n_units`` hidden units with replacement and rescales each by
    ``10*c`` with ``c`` drawn from a standard log-normal.
    """
    w = _check_w(g, w_balanced)
    if len(g.hidden_nodes) == 0:
        raise InvalidRequestError("graph has no hidden units")
    if n_units < 1:
        raise InvalidRequestError(f"n_units must be >= 1, got {n_units}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(g.hidden_nodes, size=n_units, replace=True)
    factors = 10.0 * rng.lognormal(0.0, 1.0, size=n_units)
    log_f = np.zeros(g.n_nodes)
    np.add.at(log_f, picks, np.log(factors))
    f = np.exp(log_f)
    return w * f[g.edge_targets] / f[g.edge_sources]
