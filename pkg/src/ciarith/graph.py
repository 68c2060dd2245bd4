"""Directed weighted graphs, shortest paths, and edge-list CSV ingestion.

Edges are the samples of the path-cost application: each edge carries an
id (its sample index), a routing cost, and optionally a feature vector and
a true label. Paths double as index groups over edge ids.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .core import IndexGroup

__all__ = [
    "Edge",
    "WeightedGraph",
    "PathGroup",
    "dijkstra",
    "sample_path_groups",
    "load_edge_list",
    "save_edge_list",
]

logger = logging.getLogger(__name__)

_HEADER_FIXED = ("edge_id", "src", "dst", "cost")


@dataclass(frozen=True)
class Edge:
    edge_id: int
    src: int
    dst: int
    cost: float
    features: tuple[float, ...] | None = None
    label: float | None = None


@dataclass(frozen=True)
class PathGroup:
    """An s-t path as the ordered edge ids it traverses."""

    source: int
    target: int
    edge_ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.edge_ids)

    def as_index_group(self, group_id: int) -> IndexGroup:
        return IndexGroup(group_id=group_id, members=frozenset(self.edge_ids))


class WeightedGraph:
    """Immutable directed graph with non-negative edge costs."""

    def __init__(self, nodes: Iterable[int], edges: Sequence[Edge]):
        self.node_ids = np.array(sorted(set(int(n) for n in nodes)), dtype=np.int64)
        self._node_pos = {int(n): i for i, n in enumerate(self.node_ids)}
        # row order is edge-id order, so ties resolve toward smaller ids
        self.edges = tuple(sorted(edges, key=lambda e: e.edge_id))

        seen: set[int] = set()
        n_feat = None
        for e in self.edges:
            if e.edge_id in seen:
                raise ValueError(f"duplicate edge_id {e.edge_id}")
            seen.add(e.edge_id)
            if e.src not in self._node_pos or e.dst not in self._node_pos:
                raise ValueError(
                    f"edge {e.edge_id} references unknown node {e.src}->{e.dst}"
                )
            if not (math.isfinite(e.cost) and e.cost >= 0):
                raise ValueError(f"edge {e.edge_id} has invalid cost {e.cost}")
            if e.features is not None:
                if n_feat is None:
                    n_feat = len(e.features)
                elif len(e.features) != n_feat:
                    raise ValueError(
                        f"edge {e.edge_id} has {len(e.features)} features, "
                        f"expected {n_feat}"
                    )

        self.edge_ids = np.array([e.edge_id for e in self.edges], dtype=np.int64)
        self._edge_row = {int(e.edge_id): i for i, e in enumerate(self.edges)}
        self.costs = np.array([e.cost for e in self.edges], dtype=float)
        self.src_pos = np.array([self._node_pos[e.src] for e in self.edges], dtype=np.int64)
        self.dst_pos = np.array([self._node_pos[e.dst] for e in self.edges], dtype=np.int64)
        if n_feat is not None and all(e.features is not None for e in self.edges):
            self.features = np.array([e.features for e in self.edges], dtype=float)
        else:
            self.features = None
        self.labels = np.array(
            [math.nan if e.label is None else e.label for e in self.edges], dtype=float
        )
        self._csr = None

    @property
    def n_nodes(self) -> int:
        return self.node_ids.size

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def node_position(self, node_id: int) -> int:
        try:
            return self._node_pos[int(node_id)]
        except KeyError:
            raise ValueError(f"unknown node {node_id}") from None

    def edge_row(self, edge_id: int) -> int:
        try:
            return self._edge_row[int(edge_id)]
        except KeyError:
            raise ValueError(f"unknown edge {edge_id}") from None

    def csr(self):
        """(indptr, adj_node, adj_edge) adjacency sorted by (dst, edge row)."""
        if self._csr is None:
            order = np.lexsort((np.arange(self.n_edges), self.dst_pos, self.src_pos))
            adj_node = self.dst_pos[order]
            adj_edge = np.arange(self.n_edges, dtype=np.int64)[order]
            counts = np.bincount(self.src_pos, minlength=self.n_nodes)
            indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
            np.cumsum(counts, out=indptr[1:])
            self._csr = (indptr, adj_node, adj_edge)
        return self._csr

    def validate_path(self, path: PathGroup) -> None:
        """Check the chaining invariant; raises ValueError when broken."""
        at = path.source
        for eid in path.edge_ids:
            e = self.edges[self.edge_row(eid)]
            if e.src != at:
                raise ValueError(f"path breaks at edge {eid}: expected src {at}")
            at = e.dst
        if at != path.target:
            raise ValueError(f"path ends at {at}, expected {path.target}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return (
            np.array_equal(self.node_ids, other.node_ids)
            and self.edges == other.edges
        )


def _cost_array(graph: WeightedGraph, cost_fn) -> np.ndarray:
    if cost_fn is None:
        cost = graph.costs
    elif callable(cost_fn):
        cost = np.array([cost_fn(e) for e in graph.edges], dtype=float)
    else:
        cost = np.asarray(cost_fn, dtype=float)
        if cost.shape != (graph.n_edges,):
            raise ValueError(
                f"cost array has shape {cost.shape}, expected ({graph.n_edges},)"
            )
    if cost.size and (not np.all(np.isfinite(cost)) or cost.min() < 0):
        raise ValueError("edge costs must be finite and non-negative")
    return cost


def dijkstra(
    graph: WeightedGraph,
    source: int,
    target: int,
    cost_fn: Callable[[Edge], float] | np.ndarray | None = None,
) -> PathGroup | None:
    """Minimum-cost path from source to target, or None when unreachable.

    ``cost_fn`` may be a per-edge callable, an array aligned with the
    graph's edge order, or None for the stored costs. Distance ties resolve
    toward the smallest (predecessor node, edge) pair, so results are
    reproducible across runs and kernel backends.
    """
    s = graph.node_position(source)
    t = graph.node_position(target)
    cost = _cost_array(graph, cost_fn)
    if s == t:
        return PathGroup(source=source, target=target, edge_ids=())
    indptr, adj_node, adj_edge = graph.csr()
    dist, _, pred_edge = kernels.dijkstra_arrays(indptr, adj_node, adj_edge, cost, s, t)
    if not np.isfinite(dist[t]):
        return None
    rows: list[int] = []
    at = t
    while at != s:
        e = int(pred_edge[at])
        rows.append(e)
        at = int(graph.src_pos[e])
    rows.reverse()
    return PathGroup(
        source=source,
        target=target,
        edge_ids=tuple(int(graph.edge_ids[r]) for r in rows),
    )


def sample_path_groups(
    graph: WeightedGraph,
    K: int,
    rng_seed: int,
    min_path_len: int = 1,
    cost_fn: Callable[[Edge], float] | np.ndarray | None = None,
    retry_factor: int = 100,
) -> list[PathGroup]:
    """K shortest paths between uniformly sampled distinct (s, t) node pairs.

    Pairs whose shortest path is missing or shorter than ``min_path_len``
    edges are skipped. Raises after ``retry_factor * K`` draws reporting
    how many paths were collected.
    """
    if min_path_len < 1:
        raise ValueError("min_path_len must be >= 1")
    if graph.n_nodes < 2:
        raise ValueError("need at least two nodes to sample paths")
    cost = _cost_array(graph, cost_fn)
    rng = np.random.default_rng(rng_seed)
    budget = retry_factor * K
    out: list[PathGroup] = []
    n = graph.n_nodes
    for _ in range(budget):
        if len(out) >= K:
            break
        s = int(rng.integers(n))
        t = int(rng.integers(n - 1))
        if t >= s:
            t += 1
        path = dijkstra(graph, int(graph.node_ids[s]), int(graph.node_ids[t]), cost)
        if path is not None and len(path) >= min_path_len:
            out.append(path)
    if len(out) < K:
        raise ValueError(
            f"collected only {len(out)} of {K} paths within {budget} draws "
            f"(min_path_len={min_path_len})"
        )
    return out


# ---------------------------------------------------------------------------
# Edge-list CSV: edge_id,src,dst,cost[,feat_0..feat_d][,label]
# ---------------------------------------------------------------------------


def _parse_num(token: str, line_no: int, col: str, as_int: bool = False):
    try:
        return int(token) if as_int else float(token)
    except ValueError:
        kind = "integer" if as_int else "number"
        raise ValueError(f"line {line_no}: column {col!r}: {token!r} is not a {kind}") from None


def load_edge_list(path) -> WeightedGraph:
    """Parse an edge-list CSV; malformed rows are reported with line numbers."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if tuple(header[:4]) != _HEADER_FIXED:
            raise ValueError(
                f"{path}: header must start with {','.join(_HEADER_FIXED)}, got {header[:4]}"
            )
        extra = header[4:]
        has_label = bool(extra) and extra[-1] == "label"
        feat_cols = extra[:-1] if has_label else extra
        for d, name in enumerate(feat_cols):
            if name != f"feat_{d}":
                raise ValueError(f"{path}: unexpected column {name!r}; expected feat_{d}")

        edges: list[Edge] = []
        seen: dict[int, int] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            eid = _parse_num(row[0], line_no, "edge_id", as_int=True)
            if eid in seen:
                raise ValueError(
                    f"line {line_no}: duplicate edge_id {eid} (first seen line {seen[eid]})"
                )
            seen[eid] = line_no
            src = _parse_num(row[1], line_no, "src", as_int=True)
            dst = _parse_num(row[2], line_no, "dst", as_int=True)
            cost = _parse_num(row[3], line_no, "cost")
            if not (math.isfinite(cost) and cost >= 0):
                raise ValueError(f"line {line_no}: cost must be finite and >= 0, got {cost}")
            feats = None
            if feat_cols:
                feats = tuple(
                    _parse_num(row[4 + d], line_no, feat_cols[d])
                    for d in range(len(feat_cols))
                )
            label = None
            if has_label:
                tok = row[len(header) - 1].strip()
                if tok:
                    label = _parse_num(tok, line_no, "label")
            edges.append(
                Edge(edge_id=eid, src=src, dst=dst, cost=cost, features=feats, label=label)
            )
    nodes = {e.src for e in edges} | {e.dst for e in edges}
    return WeightedGraph(nodes=nodes, edges=edges)


def save_edge_list(graph: WeightedGraph, path) -> None:
    """Write the edge-list CSV so that a reload reproduces the graph exactly."""
    n_feat = graph.features.shape[1] if graph.features is not None else 0
    has_label = bool(graph.edges) and any(e.label is not None for e in graph.edges)
    header = list(_HEADER_FIXED) + [f"feat_{d}" for d in range(n_feat)]
    if has_label:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for e in graph.edges:
            row = [e.edge_id, e.src, e.dst, repr(e.cost)]
            if n_feat:
                row.extend(repr(v) for v in e.features)
            if has_label:
                row.append("" if e.label is None else repr(e.label))
            writer.writerow(row)
