"""Feedforward network DAGs with dense node and edge indexing.

Nodes are integers ``0..n_nodes-1`` and edges carry dense indices
``0..n_edges-1``, so a weight assignment is a flat float array aligned with
edge index.  Graphs are immutable after construction and safe to share.

Level sets group nodes by longest-path distance: ``level_sets_in[i]`` holds
the nodes whose longest path from an input has length ``i`` (symmetrically
``level_sets_out`` for paths to an output).  All forward/backward dynamic
programs in this package walk these levels, which is valid for arbitrary
DAGs including skip connections: every predecessor of a level-``i`` node
sits at a strictly lower level.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    CyclicGraphError,
    DeadUnitError,
    InvalidArchitectureError,
    MissingEdgeError,
    OracleTooLargeError,
    RoleViolationError,
)

#: Default ceiling on exhaustive path enumeration (oracles refuse above it).
PATH_CAP_DEFAULT = 1_000_000

#: A path is the tuple of edge indices from an input node to an output node.
Path = tuple[int, ...]


@dataclass(frozen=True)
class LevelPlan:
    """Edge layout for one level of a forward or backward sweep.

    ``matrix(vals)`` returns M with ``M[src_local, tgt_local] = vals[edge]``
    so one level update is ``out[targets] = in[sources] @ M``.  For graphs
    built by :func:`build_layered` the edge block is contiguous and the
    matrix is a zero-copy reshape of ``vals``; otherwise it is scattered
    from explicit index arrays.
    """

    targets: np.ndarray
    sources: np.ndarray
    block: tuple[int, int, str] | None  # (start, stop, "C" | "T")
    edge_ids: np.ndarray | None
    src_local: np.ndarray | None
    tgt_local: np.ndarray | None

    def matrix(self, vals: np.ndarray) -> np.ndarray:
        n_src, n_tgt = len(self.sources), len(self.targets)
        if self.block is not None:
            start, stop, orient = self.block
            if orient == "C":
                return vals[start:stop].reshape(n_src, n_tgt)
            return vals[start:stop].reshape(n_tgt, n_src).T
        m = np.zeros((n_src, n_tgt), dtype=vals.dtype)
        m[self.src_local, self.tgt_local] = vals[self.edge_ids]
        return m

    def assign_edge_values(self, dest: np.ndarray, grid: np.ndarray) -> None:
        """Write ``grid[src_local, tgt_local]`` into ``dest`` at edge index."""
        if self.block is not None:
            start, stop, orient = self.block
            if orient == "C":
                dest[start:stop] = grid.ravel()
            else:
                dest[start:stop] = grid.T.ravel()
        else:
            dest[self.edge_ids] = grid[self.src_local, self.tgt_local]


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class NetworkGraph:
    """Immutable DAG with designated input/output nodes and level sets.

    Use :func:`build_layered` or :func:`build_dag` to construct one.
    """

    def __init__(
        self,
        *,
        labels,
        input_nodes,
        output_nodes,
        level_in,
        level_out,
        in_plans,
        out_plans,
        n_edges,
        in_degree,
        out_degree,
        layer_sizes=None,
        edges=None,
    ):
        self.labels = tuple(labels)
        self.n_nodes = len(self.labels)
        self.input_nodes = _readonly(np.asarray(input_nodes, dtype=np.intp))
        self.output_nodes = _readonly(np.asarray(output_nodes, dtype=np.intp))
        self.level_in = _readonly(np.asarray(level_in, dtype=np.intp))
        self.level_out = _readonly(np.asarray(level_out, dtype=np.intp))
        self.depth = int(self.level_in.max())
        self.in_plans = tuple(in_plans)
        self.out_plans = tuple(out_plans)
        self.n_edges = int(n_edges)
        self.in_degree = _readonly(np.asarray(in_degree, dtype=np.intp))
        self.out_degree = _readonly(np.asarray(out_degree, dtype=np.intp))
        self.layer_sizes = None if layer_sizes is None else tuple(layer_sizes)
        self._edges = edges
        role = np.zeros(self.n_nodes, dtype=np.int8)
        role[self.input_nodes] = 1
        role[self.output_nodes] = 2
        self.is_input = _readonly(role == 1)
        self.is_output = _readonly(role == 2)
        self.is_hidden = _readonly(role == 0)
        self.hidden_nodes = _readonly(np.flatnonzero(self.is_hidden))

    @property
    def n_inputs(self) -> int:
        return len(self.input_nodes)

    @property
    def n_outputs(self) -> int:
        return len(self.output_nodes)

    @cached_property
    def edges(self) -> np.ndarray:
        """All edges as an ``(n_edges, 2)`` array of (source, target) pairs.

        Materialized lazily: layered graphs can be large and most operations
        only touch the per-level plans.
        """
        if self._edges is not None:
            return self._edges
        sizes = self.layer_sizes
        starts = np.concatenate(([0], np.cumsum(sizes)))
        blocks = []
        for layer in range(len(sizes) - 1):
            src = np.arange(starts[layer], starts[layer + 1], dtype=np.int64)
            tgt = np.arange(starts[layer + 1], starts[layer + 2], dtype=np.int64)
            pair = np.empty((sizes[layer] * sizes[layer + 1], 2), dtype=np.int64)
            pair[:, 0] = np.repeat(src, sizes[layer + 1])
            pair[:, 1] = np.tile(tgt, sizes[layer])
            blocks.append(pair)
        return _readonly(np.concatenate(blocks, axis=0))

    @cached_property
    def edge_sources(self) -> np.ndarray:
        return self.edges[:, 0]

    @cached_property
    def edge_targets(self) -> np.ndarray:
        return self.edges[:, 1]

    @cached_property
    def level_sets_in(self) -> tuple[np.ndarray, ...]:
        return tuple(
            _readonly(np.flatnonzero(self.level_in == i)) for i in range(self.depth + 1)
        )

    @cached_property
    def level_sets_out(self) -> tuple[np.ndarray, ...]:
        return tuple(
            _readonly(np.flatnonzero(self.level_out == i)) for i in range(self.depth + 1)
        )

    @cached_property
    def _edge_lookup(self) -> dict[tuple[int, int], int]:
        return {(int(u), int(v)): i for i, (u, v) in enumerate(self.edges)}

    def edge_index(self, edge) -> int:
        """Resolve an edge given as an index or a (source, target) pair."""
        if isinstance(edge, (int, np.integer)):
            idx = int(edge)
            if not 0 <= idx < self.n_edges:
                raise MissingEdgeError(f"edge index {idx} out of range")
            return idx
        key = (int(edge[0]), int(edge[1]))
        try:
            return self._edge_lookup[key]
        except KeyError:
            raise MissingEdgeError(f"no edge {key} in graph") from None

    @cached_property
    def _out_adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """Outgoing edge ids grouped by source: (offsets, edge ids)."""
        order = np.argsort(self.edge_sources, kind="stable")
        offsets = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.edge_sources, minlength=self.n_nodes), out=offsets[1:])
        return offsets, order

    def out_edge_ids(self, node: int) -> np.ndarray:
        offsets, order = self._out_adjacency
        return order[offsets[node] : offsets[node + 1]]

    def path_count(self) -> int:
        """Exact number of input-to-output paths (arbitrary precision)."""
        if self.layer_sizes is not None:
            count = 1
            for size in self.layer_sizes:
                count *= size
            return count
        counts = [0] * self.n_nodes
        for i in self.input_nodes:
            counts[i] = 1
        for u, v in sorted(self.edges.tolist(), key=lambda e: self.level_in[e[1]]):
            counts[v] += counts[u]
        return sum(counts[i] for i in self.output_nodes)


def _build_from_arrays(labels, input_ids, output_ids, edge_array) -> NetworkGraph:
    """Validate a generic DAG and assemble the NetworkGraph."""
    n = len(labels)
    src, tgt = edge_array[:, 0], edge_array[:, 1]
    in_degree = np.bincount(tgt, minlength=n)
    out_degree = np.bincount(src, minlength=n)

    # Kahn's algorithm for cycle detection and a topological order.
    remaining = in_degree.copy()
    succ: list[list[int]] = [[] for _ in range(n)]
    for u, v in edge_array:
        succ[u].append(int(v))
    frontier = [i for i in range(n) if remaining[i] == 0]
    topo = []
    while frontier:
        u = frontier.pop()
        topo.append(u)
        for v in succ[u]:
            remaining[v] -= 1
            if remaining[v] == 0:
                frontier.append(v)
    if len(topo) != n:
        raise CyclicGraphError("edge relation contains a directed cycle")

    input_set = set(int(i) for i in input_ids)
    output_set = set(int(i) for i in output_ids)
    if input_set & output_set:
        raise RoleViolationError("a node cannot be both input and output")
    bad_in = [i for i in input_ids if in_degree[i] > 0]
    if bad_in:
        raise RoleViolationError(f"input nodes with incoming edges: {bad_in}")
    bad_out = [i for i in output_ids if out_degree[i] > 0]
    if bad_out:
        raise RoleViolationError(f"output nodes with outgoing edges: {bad_out}")

    # Reachability both ways; every unit must lie on some input->output path.
    pred: list[list[int]] = [[] for _ in range(n)]
    for u, v in edge_array:
        pred[v].append(int(u))
    fwd = np.zeros(n, dtype=bool)
    fwd[list(input_set)] = True
    for u in topo:
        if not fwd[u]:
            fwd[u] = any(fwd[q] for q in pred[u])
    if not fwd.all():
        dead = [labels[i] for i in np.flatnonzero(~fwd)]
        raise DeadUnitError(f"nodes unreachable from any input: {dead}")
    bwd = np.zeros(n, dtype=bool)
    bwd[list(output_set)] = True
    for u in reversed(topo):
        if not bwd[u]:
            bwd[u] = any(bwd[q] for q in succ[u])
    if not bwd.all():
        dead = [labels[i] for i in np.flatnonzero(~bwd)]
        raise DeadUnitError(f"nodes that reach no output: {dead}")

    level_in = np.zeros(n, dtype=np.int64)
    for u in topo:
        for v in succ[u]:
            level_in[v] = max(level_in[v], level_in[u] + 1)
    level_out = np.zeros(n, dtype=np.int64)
    for u in reversed(topo):
        for q in pred[u]:
            level_out[q] = max(level_out[q], level_out[u] + 1)
    depth = int(level_in.max())

    def plans_for(level_of_anchor, anchor, other):
        """Group edges by the level of their anchor endpoint."""
        plans = []
        for lvl in range(1, depth + 1):
            eids = np.flatnonzero(level_of_anchor[anchor] == lvl)
            targets = np.unique(anchor[eids])
            sources = np.unique(other[eids])
            plans.append(
                LevelPlan(
                    targets=_readonly(targets),
                    sources=_readonly(sources),
                    block=None,
                    edge_ids=_readonly(eids),
                    src_local=_readonly(np.searchsorted(sources, other[eids])),
                    tgt_local=_readonly(np.searchsorted(targets, anchor[eids])),
                )
            )
        return tuple(plans)

    in_plans = plans_for(level_in, tgt, src)
    out_plans = plans_for(level_out, src, tgt)

    return NetworkGraph(
        labels=labels,
        input_nodes=list(input_ids),
        output_nodes=list(output_ids),
        level_in=level_in,
        level_out=level_out,
        in_plans=in_plans,
        out_plans=out_plans,
        n_edges=len(edge_array),
        in_degree=in_degree,
        out_degree=out_degree,
        edges=_readonly(edge_array),
    )


def build_dag(nodes, input_nodes, output_nodes, edges) -> NetworkGraph:
    """Construct and validate a network DAG from explicit node and edge lists.

    ``nodes`` may hold arbitrary hashable labels; they are mapped to dense
    integer ids in the given order.  Raises :class:`CyclicGraphError`,
    :class:`RoleViolationError` or :class:`DeadUnitError` on bad structure.
    """
    labels = tuple(nodes)
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate node labels")
    if not labels:
        raise ValueError("graph needs at least one node")
    index = {lab: i for i, lab in enumerate(labels)}
    try:
        input_ids = [index[x] for x in input_nodes]
        output_ids = [index[x] for x in output_nodes]
        pairs = [(index[u], index[v]) for u, v in edges]
    except KeyError as exc:
        raise ValueError(f"unknown node label {exc.args[0]!r}") from None
    if not input_ids or not output_ids:
        raise ValueError("need at least one input and one output node")
    if len(set(pairs)) != len(pairs):
        raise ValueError("duplicate edges")
    for u, v in pairs:
        if u == v:
            raise CyclicGraphError(f"self-loop at node {labels[u]!r}")
    if not pairs:
        raise DeadUnitError("graph has no edges")
    edge_array = np.asarray(pairs, dtype=np.int64)
    return _build_from_arrays(labels, input_ids, output_ids, edge_array)


def build_layered(layer_sizes) -> NetworkGraph:
    """Fully connected layered network; depth equals number of layers - 1.

    Nodes are numbered layer by layer and the edge block between layers
    ``l`` and ``l+1`` is row-major in (source, target), which lets every
    per-level plan view the weight vector as a matrix without copying.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise InvalidArchitectureError(
            f"need >= 2 layers with positive sizes, got {layer_sizes!r}"
        )
    depth = len(sizes) - 1
    node_starts = np.concatenate(([0], np.cumsum(sizes)))
    n = int(node_starts[-1])
    edge_counts = [sizes[l] * sizes[l + 1] for l in range(depth)]
    edge_starts = np.concatenate(([0], np.cumsum(edge_counts)))

    def layer_nodes(l):
        return np.arange(node_starts[l], node_starts[l + 1], dtype=np.intp)

    in_plans = []
    out_plans = []
    for l in range(depth):
        start, stop = int(edge_starts[l]), int(edge_starts[l + 1])
        in_plans.append(
            LevelPlan(
                targets=_readonly(layer_nodes(l + 1)),
                sources=_readonly(layer_nodes(l)),
                block=(start, stop, "C"),
                edge_ids=None,
                src_local=None,
                tgt_local=None,
            )
        )
    for j in range(1, depth + 1):
        l = depth - j  # out-level j computes layer l from layer l+1
        start, stop = int(edge_starts[l]), int(edge_starts[l + 1])
        out_plans.append(
            LevelPlan(
                targets=_readonly(layer_nodes(l)),
                sources=_readonly(layer_nodes(l + 1)),
                block=(start, stop, "T"),
                edge_ids=None,
                src_local=None,
                tgt_local=None,
            )
        )

    level_in = np.repeat(np.arange(depth + 1), sizes)
    in_degree = np.repeat([0] + sizes[:-1], sizes)
    out_degree = np.repeat(sizes[1:] + [0], sizes)
    return NetworkGraph(
        labels=range(n),
        input_nodes=layer_nodes(0),
        output_nodes=layer_nodes(depth),
        level_in=level_in,
        level_out=depth - level_in,
        in_plans=tuple(in_plans),
        out_plans=tuple(out_plans),
        n_edges=int(edge_starts[-1]),
        in_degree=in_degree,
        out_degree=out_degree,
        layer_sizes=sizes,
    )


def enumerate_paths(g: NetworkGraph, cap: int = PATH_CAP_DEFAULT) -> list[Path]:
    """All input-to-output paths as tuples of edge indices, lexicographic.

    Exhaustive by construction; refuses with :class:`OracleTooLargeError`
    when the exact path count exceeds ``cap``.
    """
    total = g.path_count()
    if total > cap:
        raise OracleTooLargeError(f"{total} paths exceeds cap {cap}")
    targets = g.edge_targets
    is_output = g.is_output
    paths: list[Path] = []
    prefix: list[int] = []

    def walk(node: int) -> None:
        if is_output[node]:
            paths.append(tuple(prefix))
            return
        for e in np.sort(g.out_edge_ids(node)):
            prefix.append(int(e))
            walk(int(targets[e]))
            prefix.pop()

    first_edges = np.flatnonzero(g.is_input[g.edge_sources])
    for e in np.sort(first_edges):
        prefix.append(int(e))
        walk(int(targets[e]))
        prefix.pop()
    return paths


def paths_through_edge(g: NetworkGraph, edge, cap: int = PATH_CAP_DEFAULT) -> list[Path]:
    """The subset of ``enumerate_paths(g)`` whose edge set contains ``edge``."""
    eid = g.edge_index(edge)
    return [p for p in enumerate_paths(g, cap=cap) if eid in p]


def path_nodes(g: NetworkGraph, path: Path) -> list[int]:
    """Node sequence visited by a path (length = len(path) + 1)."""
    nodes = [int(g.edge_sources[path[0]])]
    nodes.extend(int(g.edge_targets[e]) for e in path)
    return nodes


def parse_architecture(text: str) -> list[int]:
    """Parse a layer-size description like ``"100x256x10"`` or ``"100,256,10"``."""
    seps = text.replace("x", " ").replace(",", " ").replace("-", " ")
    try:
        sizes = [int(tok) for tok in seps.split()]
    except ValueError:
        raise InvalidArchitectureError(f"cannot parse architecture {text!r}") from None
    if not sizes:
        raise InvalidArchitectureError(f"cannot parse architecture {text!r}")
    return sizes


def read_graph_file(path) -> NetworkGraph:
    """Read a graph description file.

    Two forms are accepted.  Layered::

        layers: 100 256 10

    Explicit DAG (whitespace-separated node labels)::

        inputs: a b
        outputs: z
        edge: a h
        edge: b h
        edge: h z

    Lines starting with ``#`` are comments.  Nodes are declared implicitly
    by appearing in a role line or an edge.
    """
    inputs: list[str] = []
    outputs: list[str] = []
    edges: list[tuple[str, str]] = []
    nodes: list[str] = []
    seen: set[str] = set()

    def note(label: str) -> None:
        if label not in seen:
            seen.add(label)
            nodes.append(label)

    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, rest = line.partition(":")
            key = key.strip().lower()
            toks = rest.split()
            if key == "layers":
                return build_layered([int(t) for t in toks])
            if key == "inputs":
                inputs.extend(toks)
                for t in toks:
                    note(t)
            elif key == "outputs":
                outputs.extend(toks)
                for t in toks:
                    note(t)
            elif key == "edge":
                if len(toks) != 2:
                    raise ValueError(f"edge line needs two nodes: {raw!r}")
                edges.append((toks[0], toks[1]))
                note(toks[0])
                note(toks[1])
            else:
                raise ValueError(f"unrecognized graph file line: {raw!r}")
    return build_dag(nodes, inputs, outputs, edges)
