"""Heterogeneous entity/attribute graphs and exact-order neighborhoods.

Entity nodes occupy ids [0, num_entity_nodes); attribute nodes follow, one
per distinct (attribute_name, value) pair in sorted order, so construction
is independent of attribute-table row order. Edges are undirected and every
node carries a self-loop. Graphs are immutable after construction; noise
injection returns a new graph.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import UNKNOWN, AttributeTable
from .errors import DomainError, SaturationError, ShapeError

log = logging.getLogger(__name__)

ENTITY = "entity"
ATTRIBUTE = "attribute"


def _norm(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u <= v else (v, u)


@dataclass
class HeterogeneousGraph:
    num_entity_nodes: int
    num_attribute_nodes: int
    edges: set[tuple[int, int]]                      # normalized pairs, incl. self-loops
    attr_label: dict[int, tuple[str, str]] = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return self.num_entity_nodes + self.num_attribute_nodes

    def node_kind(self, node: int) -> str:
        if not (0 <= node < self.num_nodes):
            raise IndexError(f"node {node} out of range [0, {self.num_nodes})")
        return ENTITY if node < self.num_entity_nodes else ATTRIBUTE

    def non_self_edges(self) -> list[tuple[int, int]]:
        return sorted(e for e in self.edges if e[0] != e[1])

    def adjacency(self) -> list[np.ndarray]:
        """Per-node sorted neighbor arrays, self-loops excluded."""
        nbrs: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            if u == v:
                continue
            nbrs[u].append(v)
            nbrs[v].append(u)
        return [np.array(sorted(ns), dtype=np.int64) for ns in nbrs]


def build_heterogeneous_graph(num_entities: int, attrs: AttributeTable,
                              attr_schema: list[str]) -> HeterogeneousGraph:
    """Connect each entity to one attribute node per known (name, value) pair.

    ``unknown`` values produce no node (a shared unknown hub would swamp the
    neighborhoods). An empty schema degrades to entity nodes + self-loops.
    """
    if num_entities < 1:
        raise DomainError("num_entities must be >= 1")
    missing = [e for e in range(num_entities) if e not in attrs.rows]
    if attr_schema and missing:
        raise DomainError(f"attribute table covers {len(attrs)} entities; "
                          f"missing ids e.g. {missing[:5]}")
    if not attr_schema:
        log.warning("empty attribute schema: graph has only entity nodes and self-loops")

    pairs = sorted({
        (name, attrs.value(e, name))
        for e in range(num_entities) for name in attr_schema
        if attrs.value(e, name) != UNKNOWN
    })
    node_of = {p: num_entities + i for i, p in enumerate(pairs)}

    edges: set[tuple[int, int]] = set()
    for e in range(num_entities):
        for name in attr_schema:
            val = attrs.value(e, name)
            if val == UNKNOWN:
                continue
            edges.add(_norm(e, node_of[(name, val)]))
    num_nodes = num_entities + len(pairs)
    edges.update((i, i) for i in range(num_nodes))
    return HeterogeneousGraph(num_entities, len(pairs), edges,
                              {nid: p for p, nid in node_of.items()})


def neighborhood(graph: HeterogeneousGraph, node: int, d: int) -> list[int]:
    """Nodes at shortest-path distance exactly ``d`` (self-loops ignored),
    sorted; the node itself is included in its order-1 set."""
    if d < 1:
        raise DomainError(f"order must be >= 1, got {d}")
    graph.node_kind(node)  # raises IndexError on bad ids
    adj = graph.adjacency()
    frontier = {node}
    visited = {node}
    for _ in range(d):
        frontier = {n for f in frontier for n in adj[f].tolist()} - visited
        visited |= frontier
    out = set(frontier)
    if d == 1:
        out.add(node)
    return sorted(out)


class NeighborhoodIndex:
    """Exact-distance neighbor sets for every node, orders 1..max_order.

    Stored per order as CSR arrays (ptr, idx) with sorted neighbor lists;
    built once per graph and read-only afterwards.
    """

    def __init__(self, graph: HeterogeneousGraph, max_order: int):
        if max_order < 1:
            raise DomainError(f"max_order must be >= 1, got {max_order}")
        self.num_nodes = graph.num_nodes
        self.max_order = max_order
        self._ptr: list[np.ndarray] = []
        self._idx: list[np.ndarray] = []
        self._build(graph)

    def _build(self, graph: HeterogeneousGraph) -> None:
        adj = graph.adjacency()
        n = self.num_nodes
        per_order: list[list[np.ndarray]] = [[] for _ in range(self.max_order)]
        empty = np.empty(0, dtype=np.int64)
        for i in range(n):
            visited = np.array([i], dtype=np.int64)
            frontier = adj[i]
            for d in range(self.max_order):
                if d == 0:
                    # order-1 set contains the node itself via its self-loop
                    per_order[0].append(np.union1d(frontier, [i]))
                else:
                    per_order[d].append(frontier)
                visited = np.union1d(visited, frontier)
                if frontier.size and d + 1 < self.max_order:
                    nxt = np.unique(np.concatenate([adj[f] for f in frontier]))
                    frontier = np.setdiff1d(nxt, visited, assume_unique=True)
                else:
                    frontier = empty
        for d in range(self.max_order):
            counts = np.array([len(a) for a in per_order[d]], dtype=np.int64)
            ptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(counts, out=ptr[1:])
            idx = (np.concatenate(per_order[d]) if ptr[-1] else
                   np.empty(0, dtype=np.int64))
            self._ptr.append(ptr)
            self._idx.append(idx)

    def neighbors(self, node: int, d: int) -> np.ndarray:
        """Sorted neighbor ids of ``node`` at exact distance ``d``."""
        if not (1 <= d <= self.max_order):
            raise DomainError(f"order {d} outside [1, {self.max_order}]")
        if not (0 <= node < self.num_nodes):
            raise IndexError(f"node {node} out of range")
        ptr = self._ptr[d - 1]
        return self._idx[d - 1][ptr[node]:ptr[node + 1]]

    def pairs(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Flat (center, neighbor) id arrays for all order-d relations."""
        if not (1 <= d <= self.max_order):
            raise DomainError(f"order {d} outside [1, {self.max_order}]")
        ptr = self._ptr[d - 1]
        centers = np.repeat(np.arange(self.num_nodes, dtype=np.int64), np.diff(ptr))
        return centers, self._idx[d - 1]


def inject_edge_noise(graph: HeterogeneousGraph, ratio: float, seed: int
                      ) -> HeterogeneousGraph:
    """Replace floor(ratio * |non-self-loop edges|) edges with uniformly
    sampled entity-attribute pairs absent from the original edge set.
    Self-loops are never touched; the same seed reproduces the same graph."""
    if not (0.0 <= ratio < 1.0):
        raise DomainError(f"noise ratio must lie in [0,1), got {ratio}")
    candidates = graph.non_self_edges()
    n_replace = int(np.floor(ratio * len(candidates)))
    new_edges = set(graph.edges)
    if n_replace == 0:
        return HeterogeneousGraph(graph.num_entity_nodes, graph.num_attribute_nodes,
                                  new_edges, dict(graph.attr_label))
    pool = graph.num_entity_nodes * graph.num_attribute_nodes - len(candidates)
    if pool < n_replace:
        raise SaturationError(
            f"only {pool} absent entity-attribute pairs available, need {n_replace}")
    rng = np.random.default_rng(seed)
    drop_idx = rng.choice(len(candidates), size=n_replace, replace=False)
    for i in drop_idx:
        new_edges.discard(candidates[i])
    original = set(graph.edges)
    added = 0
    while added < n_replace:
        e = int(rng.integers(graph.num_entity_nodes))
        a = int(graph.num_entity_nodes + rng.integers(graph.num_attribute_nodes))
        edge = _norm(e, a)
        if edge in original or edge in new_edges:
            continue
        new_edges.add(edge)
        added += 1
    return HeterogeneousGraph(graph.num_entity_nodes, graph.num_attribute_nodes,
                              new_edges, dict(graph.attr_label))


def save_graph(graph: HeterogeneousGraph, path: str | Path) -> None:
    """Write the edge list ('u v' per line) plus a '<path>.nodes' sidecar
    holding the node-kind table and attribute labels."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in sorted(graph.edges):
            fh.write(f"{u} {v}\n")
    with open(path.with_suffix(path.suffix + ".nodes"), "w", encoding="utf-8") as fh:
        fh.write(f"{graph.num_entity_nodes}\t{graph.num_attribute_nodes}\n")
        for nid in sorted(graph.attr_label):
            name, val = graph.attr_label[nid]
            fh.write(f"{nid}\t{name}\t{val}\n")


def load_graph(path: str | Path) -> HeterogeneousGraph:
    path = Path(path)
    edges: set[tuple[int, int]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                u, v = (int(t) for t in line.split())
                edges.add(_norm(u, v))
    sidecar = path.with_suffix(path.suffix + ".nodes")
    attr_label: dict[int, tuple[str, str]] = {}
    with open(sidecar, "r", encoding="utf-8") as fh:
        header = fh.readline().split("\t")
        if len(header) != 2:
            raise ShapeError(f"{sidecar.name}: malformed header")
        n_entity, n_attr = int(header[0]), int(header[1])
        for line in fh:
            if line.strip():
                nid, name, val = line.rstrip("\n").split("\t")
                attr_label[int(nid)] = (name, val)
    return HeterogeneousGraph(n_entity, n_attr, edges, attr_label)
