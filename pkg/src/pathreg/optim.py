"""Optimizers: SGD with momentum, AdaGrad, and path-scaled SGD, plus dropout.

The path-scaled optimizer divides each edge's gradient step by

    scale(w, e) = (sum over input->output paths through e of the product
                   of |w|^p over the path's other edges) ** (2/p)

computed for all edges at once by one forward and one backward sweep over
the level sets (`compute_path_scales`).  Per mini-batch this costs about
one extra single-example forward/backward, and the resulting update is
invariant under the rescaling symmetry of ReLU networks, which plain SGD
and AdaGrad are not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidRequestError, NumericError
from .graph import NetworkGraph, paths_through_edge
from .norms import _abs_pow, path_sums_in, path_sums_out


@dataclass(frozen=True)
class PathScaleTable:
    """Per-node accumulators and the per-edge step scaling built from them.

    ``gamma_in[u]`` sums |w|^p path products from the inputs to u (1 at
    inputs), ``gamma_out[v]`` symmetrically to the outputs, and for edge
    e = (u -> v): ``gamma_edge[e] = (gamma_in[u] * gamma_out[v]) ** (2/p)``.
    """

    gamma_in: np.ndarray
    gamma_out: np.ndarray
    gamma_edge: np.ndarray


def compute_path_scales(g: NetworkGraph, w, p: float = 2.0) -> PathScaleTable:
    """Step scalings for every edge in two level-set sweeps."""
    gin = path_sums_in(g, w, p)
    gout = path_sums_out(g, w, p)
    gamma_edge = np.empty(g.n_edges)
    for plan in g.in_plans:
        grid = gin[plan.sources][:, None] * gout[plan.targets][None, :]
        plan.assign_edge_values(gamma_edge, grid)
    if p != 2.0:
        gamma_edge **= 2.0 / p
    if not np.isfinite(gamma_edge).all():
        raise NumericError("overflow while accumulating path scales")
    return PathScaleTable(gamma_in=gin, gamma_out=gout, gamma_edge=gamma_edge)


def edge_scale_bruteforce(g: NetworkGraph, w, edge, p: float = 2.0) -> float:
    """Oracle for one edge's step scaling by explicit path enumeration."""
    eid = g.edge_index(edge)
    w = np.asarray(w, dtype=np.float64)
    total = 0.0
    for path in paths_through_edge(g, eid):
        others = [e for e in path if e != eid]
        total += _abs_pow(w[others], p).prod() if others else 1.0
    return float(total ** (2.0 / p))


@dataclass(frozen=True)
class DropoutMask:
    """Per-node retention flags; input and output nodes are always kept."""

    retained: np.ndarray
    retain_probability: float


def sample_dropout(g: NetworkGraph, retain_probability: float, rng) -> DropoutMask:
    """Bernoulli retention mask over the hidden units.

    ``rng`` is a numpy Generator or a seed.  With ``retain_probability=1``
    the mask is the identity.
    """
    if not 0.0 < retain_probability <= 1.0:
        raise InvalidRequestError(
            f"retain probability must be in (0, 1], got {retain_probability}"
        )
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    retained = np.ones(g.n_nodes, dtype=bool)
    if retain_probability < 1.0:
        keep = rng.random(len(g.hidden_nodes)) < retain_probability
        retained[g.hidden_nodes] = keep
    return DropoutMask(retained=retained, retain_probability=retain_probability)


class SGD:
    """Gradient descent with heavy-ball momentum.

    With ``anneal=True`` each epoch multiplies the step size by 0.99 and
    raises the momentum by 0.02 up to a cap of 0.9.
    """

    def __init__(self, step_size: float, momentum: float = 0.0, *, anneal: bool = False):
        if step_size <= 0:
            raise ValueError(f"step size must be > 0, got {step_size}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.step_size = step_size
        self.momentum = momentum
        self.anneal = anneal
        self.epoch = 0
        self._velocity = None

    def step(self, w: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self._velocity is None:
            self._velocity = np.zeros_like(w)
        self._velocity = self.momentum * self._velocity - self.step_size * grad
        return w + self._velocity

    def end_epoch(self) -> None:
        self.epoch += 1
        if self.anneal:
            self.step_size *= 0.99
            self.momentum = min(0.9, self.momentum + 0.02)


class AdaGrad:
    """Per-coordinate step sizes from accumulated squared gradients."""

    def __init__(self, step_size: float, eps: float = 1e-8):
        if step_size <= 0:
            raise ValueError(f"step size must be > 0, got {step_size}")
        self.step_size = step_size
        self.eps = eps
        self.epoch = 0
        self._accum = None

    def step(self, w: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self._accum is None:
            self._accum = np.zeros_like(w)
        self._accum += grad * grad
        return w - self.step_size * grad / (np.sqrt(self._accum) + self.eps)

    def end_epoch(self) -> None:
        self.epoch += 1


class PathSGD:
    """SGD in the geometry of the l_p path regularizer.

    Every step recomputes the per-edge scalings at the current weights
    (``refresh_every`` trades accuracy for speed by reusing stale scalings)
    and updates all coordinates synchronously.  Edges whose scaling falls
    below ``min_scale`` are skipped that step rather than divided by ~0.
    With all scalings equal to one the update is plain gradient descent.
    """

    def __init__(
        self,
        graph: NetworkGraph,
        step_size: float,
        p: float = 2.0,
        *,
        refresh_every: int = 1,
        min_scale: float = 1e-12,
        scales_fn=compute_path_scales,
    ):
        if step_size <= 0:
            raise ValueError(f"step size must be > 0, got {step_size}")
        if refresh_every < 1:
            raise ValueError(f"refresh_every must be >= 1, got {refresh_every}")
        self.graph = graph
        self.step_size = step_size
        self.p = p
        self.refresh_every = refresh_every
        self.min_scale = min_scale
        self.scales_fn = scales_fn
        self.epoch = 0
        self._steps = 0
        self._table = None

    def step(self, w: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self._table is None or self._steps % self.refresh_every == 0:
            self._table = self.scales_fn(self.graph, w, self.p)
        self._steps += 1
        gamma = self._table.gamma_edge
        live = gamma >= self.min_scale
        update = np.zeros_like(w)
        np.divide(self.step_size * grad, gamma, out=update, where=live)
        return w - update

    def end_epoch(self) -> None:
        self.epoch += 1


def make_optimizer(kind: str, graph: NetworkGraph, step_size: float, **kwargs):
    """Factory used by the experiment harness; kind in {sgd, adagrad, pathsgd}."""
    if kind == "sgd":
        return SGD(step_size, **kwargs)
    if kind == "adagrad":
        return AdaGrad(step_size, **kwargs)
    if kind == "pathsgd":
        return PathSGD(graph, step_size, **kwargs)
    raise ValueError(f"unknown optimizer kind {kind!r}")
