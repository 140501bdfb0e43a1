"""Weight-scale measures: group norms, the path vector, path regularizer.

The path regularizer of order p is the l_p norm of the path vector (one
coordinate per input-to-output path, each the product of the weights along
that path).  Naively that is exponential in depth; `path_norm_dp` computes
it with one forward sweep over the level sets, and `path_norm_bruteforce`
keeps the enumeration form as an oracle for small graphs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParamsError, NumericError, ShapeError
from .graph import PATH_CAP_DEFAULT, NetworkGraph, Path, enumerate_paths


def _abs_pow(w: np.ndarray, p: float) -> np.ndarray:
    if p == 2.0:
        return w * w
    if p == 1.0:
        return np.abs(w)
    return np.abs(w) ** p


def _check_w(g: NetworkGraph, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (g.n_edges,):
        raise ShapeError(f"expected {g.n_edges} weights, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise NumericError("weights contain non-finite values")
    return w


def incoming_power_sums(g: NetworkGraph, w, p: float) -> np.ndarray:
    """Per-node sum of |w|^p over incoming edges (zero at input nodes)."""
    w = _check_w(g, w)
    vals = _abs_pow(w, p)
    sums = np.zeros(g.n_nodes)
    for plan in g.in_plans:
        sums[plan.targets] = plan.matrix(vals).sum(axis=0)
    return sums


def outgoing_power_sums(g: NetworkGraph, w, p: float) -> np.ndarray:
    """Per-node sum of |w|^p over outgoing edges (zero at output nodes)."""
    w = _check_w(g, w)
    vals = _abs_pow(w, p)
    sums = np.zeros(g.n_nodes)
    for plan in g.out_plans:
        sums[plan.targets] = plan.matrix(vals).sum(axis=0)
    return sums


def group_norm(g: NetworkGraph, w, p: float, q: float) -> float:
    """Per-unit l_p norms of incoming weights aggregated by an l_q norm.

    The unit sum ranges over nodes that have incoming edges (hidden and
    output); ``q=math.inf`` gives the per-unit max-norm.
    """
    if p < 1.0 or q < 1.0:
        raise InvalidParamsError(f"need p, q >= 1, got p={p}, q={q}")
    sums = incoming_power_sums(g, w, p)[~g.is_input]
    if math.isinf(q):
        return float(sums.max() ** (1.0 / p))
    return float((sums ** (q / p)).sum() ** (1.0 / q))


def max_norm(g: NetworkGraph, w, p: float) -> float:
    """Largest per-unit l_p norm of incoming weights (q = infinity case)."""
    return group_norm(g, w, p, math.inf)


@dataclass(frozen=True)
class PathVector:
    """Products of weights along every input-to-output path.

    ``paths[i]`` is a tuple of edge indices and ``values[i]`` its product;
    order matches :func:`pathreg.graph.enumerate_paths`.
    """

    paths: tuple[Path, ...]
    values: np.ndarray

    def as_dict(self) -> dict[Path, float]:
        return {p: float(v) for p, v in zip(self.paths, self.values)}


def path_vector(g: NetworkGraph, w, cap: int = PATH_CAP_DEFAULT) -> PathVector:
    """Explicit path vector (oracle scale only; refuses above ``cap``)."""
    w = _check_w(g, w)
    paths = enumerate_paths(g, cap=cap)
    values = np.array([w[list(p)].prod() for p in paths])
    return PathVector(paths=tuple(paths), values=values)


def path_norm_bruteforce(g: NetworkGraph, w, p: float, cap: int = PATH_CAP_DEFAULT) -> float:
    """l_p norm of the path vector by explicit enumeration."""
    if p < 1.0:
        raise InvalidParamsError(f"need p >= 1, got p={p}")
    values = path_vector(g, w, cap=cap).values
    return float((np.abs(values) ** p).sum() ** (1.0 / p))


def path_sums_in(g: NetworkGraph, w, p: float) -> np.ndarray:
    """Forward accumulation of |w|^p path products from the inputs.

    ``out[v]`` is the sum over input-to-v paths of the product of |w|^p
    along the path; 1 at input nodes (empty product).
    """
    w = _check_w(g, w)
    vals = _abs_pow(w, p)
    gamma = np.zeros(g.n_nodes)
    gamma[g.input_nodes] = 1.0
    for plan in g.in_plans:
        gamma[plan.targets] = gamma[plan.sources] @ plan.matrix(vals)
    if not np.isfinite(gamma).all():
        raise NumericError("overflow while accumulating path sums")
    return gamma


def path_sums_out(g: NetworkGraph, w, p: float) -> np.ndarray:
    """Backward accumulation of |w|^p path products to the outputs."""
    w = _check_w(g, w)
    vals = _abs_pow(w, p)
    gamma = np.zeros(g.n_nodes)
    gamma[g.output_nodes] = 1.0
    for plan in g.out_plans:
        gamma[plan.targets] = gamma[plan.sources] @ plan.matrix(vals)
    if not np.isfinite(gamma).all():
        raise NumericError("overflow while accumulating path sums")
    return gamma


def path_norm_dp(g: NetworkGraph, w, p: float) -> float:
    """l_p path regularizer in a single forward sweep (works at full scale).

    Equals :func:`path_norm_bruteforce` wherever enumeration is feasible
    and runs in one topological pass otherwise.  Raises loudly on overflow
    instead of returning infinity.
    """
    if p < 1.0:
        raise InvalidParamsError(f"need p >= 1, got p={p}")
    gamma = path_sums_in(g, w, p)
    return float(gamma[g.output_nodes].sum() ** (1.0 / p))
