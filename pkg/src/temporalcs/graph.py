"""Temporal graph data model and file ingestion.

A temporal graph is an ordered sequence of snapshots over one global node set.
Snapshots are built by bucketing timestamped edges into equal time spans
(optionally cumulative). Node ids in all input files are opaque strings and
are mapped to dense indices in order of first appearance.

All structures are immutable after load and safe for concurrent readers.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, IngestError, ParseError


@dataclass(frozen=True)
class Snapshot:
    """Edge set and node attributes of the graph at one timestamp.

    ``adjacency`` holds a sorted neighbor list per node; edges are undirected,
    deduplicated, and free of self-loops. ``attrs`` is the |V| x f feature
    matrix in effect at this timestamp.
    """

    t: int
    adjacency: tuple
    attrs: np.ndarray
    edge_times: dict = field(default_factory=dict, repr=False, compare=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_nodes(self) -> int:
        return len(self.adjacency)

    @property
    def num_edges(self) -> int:
        return sum(len(n) for n in self.adjacency) // 2

    def neighbors(self, u: int):
        return self.adjacency[u]

    def degrees(self) -> np.ndarray:
        return np.array([len(n) for n in self.adjacency], dtype=np.float64)

    def norm_adjacency(self) -> np.ndarray:
        """Dense aggregation matrix with entry 1/sqrt(p_u p_v) per edge (u,v),
        where p is degree plus one. Cached; treat as read-only."""
        cached = self._cache.get("norm_adj")
        if cached is None:
            n = self.num_nodes
            p = self.degrees() + 1.0
            cached = np.zeros((n, n), dtype=np.float64)
            for u, neigh in enumerate(self.adjacency):
                for v in neigh:
                    cached[u, v] = 1.0 / np.sqrt(p[u] * p[v])
            self._cache["norm_adj"] = cached
        return cached


@dataclass(frozen=True)
class TemporalGraph:
    """A node set shared across an ordered sequence of snapshots."""

    num_nodes: int
    snapshots: tuple
    node_ids: dict            # external id -> dense index
    attr_dim: int
    index_ids: tuple = ()     # dense index -> external id
    has_node_attrs: bool = False  # False: attrs are derived degree features
    node_times: dict = field(default_factory=dict)  # index -> first-seen timestamp

    def __post_init__(self):
        if self.num_nodes == 0:
            raise ArgumentError("empty graph")
        for i, snap in enumerate(self.snapshots, start=1):
            if snap.t != i:
                raise ArgumentError(f"snapshot timestamps must be 1..T, got {snap.t} at position {i}")
            if snap.attrs.shape != (self.num_nodes, self.attr_dim):
                raise ArgumentError(
                    f"snapshot {i} attrs shape {snap.attrs.shape} does not match "
                    f"({self.num_nodes}, {self.attr_dim})"
                )

    @property
    def num_snapshots(self) -> int:
        return len(self.snapshots)

    def snapshot(self, t: int) -> Snapshot:
        if not 1 <= t <= len(self.snapshots):
            raise ArgumentError(f"snapshot index {t} outside 1..{len(self.snapshots)}")
        return self.snapshots[t - 1]

    def resolve(self, external_id: str) -> int:
        idx = self.node_ids.get(str(external_id))
        if idx is None:
            raise ArgumentError(f"unknown node id {external_id!r}")
        return idx

    def external_id(self, index: int) -> str:
        return self.index_ids[index]

    def truncated(self, num_snapshots: int) -> "TemporalGraph":
        """Prefix of the first ``num_snapshots`` snapshots."""
        if not 1 <= num_snapshots <= self.num_snapshots:
            raise ArgumentError(f"cannot truncate to {num_snapshots} snapshots")
        return TemporalGraph(
            num_nodes=self.num_nodes,
            snapshots=self.snapshots[:num_snapshots],
            node_ids=self.node_ids,
            attr_dim=self.attr_dim,
            index_ids=self.index_ids,
            has_node_attrs=self.has_node_attrs,
            node_times=self.node_times,
        )


@dataclass(frozen=True)
class CommunitySet:
    """Ground-truth communities; optionally an evolving per-snapshot version."""

    communities: tuple        # tuple of frozensets of node indices
    per_snapshot: dict | None = None

    def __post_init__(self):
        for i, c in enumerate(self.communities):
            if not c:
                raise ArgumentError(f"community {i} is empty")

    def at(self, t: int):
        if self.per_snapshot and t in self.per_snapshot:
            return self.per_snapshot[t]
        return self.communities


@dataclass(frozen=True)
class QueryVector:
    """A non-empty set of query nodes and its one-hot encoding."""

    nodes: frozenset
    onehot: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.onehot.shape[0]


def encode_query(nodes, n: int) -> QueryVector:
    """One-hot encode a set of query node indices over ``n`` nodes."""
    nodes = frozenset(int(u) for u in nodes)
    if not nodes:
        raise ArgumentError("query set is empty")
    for u in nodes:
        if not 0 <= u < n:
            raise ArgumentError(f"query node {u} outside 0..{n - 1}")
    onehot = np.zeros(n, dtype=np.float64)
    onehot[list(nodes)] = 1.0
    return QueryVector(nodes=nodes, onehot=onehot)


def degree_plus_one(g: TemporalGraph, t: int, u: int) -> int:
    """Neighbor count of ``u`` at snapshot ``t``, plus one."""
    snap = g.snapshot(t)
    if not 0 <= u < g.num_nodes:
        raise ArgumentError(f"node index {u} outside 0..{g.num_nodes - 1}")
    return len(snap.adjacency[u]) + 1


# -- construction -------------------------------------------------------------


def build_temporal_graph(num_nodes, edges_per_snapshot, node_ids=None, attrs=None):
    """Assemble a TemporalGraph from in-memory per-snapshot edge lists.

    ``edges_per_snapshot`` is a sequence of iterables of (u, v) index pairs.
    Self-loops and duplicates are dropped. Without ``attrs`` (a |V| x f matrix
    applied to every snapshot), each node gets the 1-dimensional feature
    degree / max-degree of its snapshot.
    """
    if num_nodes < 1:
        raise ArgumentError("empty graph")
    if node_ids is None:
        node_ids = {str(i): i for i in range(num_nodes)}
    index_ids = tuple(sorted(node_ids, key=node_ids.get))

    snapshots = []
    for t, edges in enumerate(edges_per_snapshot, start=1):
        neighbor_sets = [set() for _ in range(num_nodes)]
        for u, v in edges:
            if u == v:
                continue
            neighbor_sets[u].add(v)
            neighbor_sets[v].add(u)
        adjacency = tuple(tuple(sorted(s)) for s in neighbor_sets)
        if attrs is not None:
            snap_attrs = np.asarray(attrs, dtype=np.float64)
        else:
            deg = np.array([len(s) for s in neighbor_sets], dtype=np.float64)
            snap_attrs = (deg / max(deg.max(), 1.0)).reshape(-1, 1)
        snapshots.append(Snapshot(t=t, adjacency=adjacency, attrs=snap_attrs))

    attr_dim = snapshots[0].attrs.shape[1] if snapshots else 1
    return TemporalGraph(
        num_nodes=num_nodes,
        snapshots=tuple(snapshots),
        node_ids=dict(node_ids),
        attr_dim=attr_dim,
        index_ids=index_ids,
        has_node_attrs=attrs is not None,
    )


def load_temporal_graph(edge_path, attr_path=None, num_snapshots=1, cumulative=False):
    """Load a temporal graph from a timestamped edge list.

    Each non-comment line is ``src dst timestamp``. Timestamps are split into
    ``num_snapshots`` buckets of equal time span; with ``cumulative`` snapshot
    t is the union of buckets 1..t. Nodes keep a single global index space.
    """
    if num_snapshots < 1:
        raise ArgumentError(f"num_snapshots must be >= 1, got {num_snapshots}")

    node_ids: dict = {}
    raw_edges = []  # (u, v, timestamp)
    with open(edge_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 3:
                raise ParseError(f"expected 'src dst timestamp', got {line.strip()!r}", line_no)
            src, dst, raw_ts = parts
            try:
                ts = float(raw_ts)
            except ValueError:
                raise ParseError(f"bad timestamp {raw_ts!r}", line_no) from None
            u = node_ids.setdefault(src, len(node_ids))
            v = node_ids.setdefault(dst, len(node_ids))
            raw_edges.append((u, v, ts))

    if not node_ids:
        raise ArgumentError("empty graph")

    t_min = min(e[2] for e in raw_edges)
    t_max = max(e[2] for e in raw_edges)
    span = t_max - t_min
    buckets = [[] for _ in range(num_snapshots)]
    for u, v, ts in raw_edges:
        if span == 0:
            b = 0
        else:
            b = min(int((ts - t_min) * num_snapshots / span), num_snapshots - 1)
        buckets[b].append((u, v, ts))

    num_nodes = len(node_ids)
    attrs = _load_attrs(attr_path, node_ids) if attr_path else None

    edges_per_snapshot = []
    for t in range(num_snapshots):
        scope = range(0, t + 1) if cumulative else (t,)
        edges_per_snapshot.append([(u, v) for b in scope for (u, v, _) in buckets[b]])

    g = build_temporal_graph(num_nodes, edges_per_snapshot, node_ids=node_ids, attrs=attrs)
    # retain raw edge/node timestamps for inspection; the model does not use them
    for t, snap in enumerate(g.snapshots):
        for u, v, ts in buckets[t]:
            snap.edge_times.setdefault((min(u, v), max(u, v)), ts)
    for u, v, ts in raw_edges:
        for node in (u, v):
            if node not in g.node_times or ts < g.node_times[node]:
                g.node_times[node] = ts
    return g


def _load_attrs(attr_path, node_ids) -> np.ndarray:
    rows = {}
    attr_dim = None
    with open(attr_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split(",")
            if len(parts) < 2:
                raise ParseError("expected 'node,f1,...,fk'", line_no)
            name = parts[0].strip()
            if name not in node_ids:
                raise IngestError(f"unknown node id {name!r} in attribute file", line_no)
            try:
                values = [float(p) for p in parts[1:]]
            except ValueError:
                raise ParseError(f"bad attribute value in {text!r}", line_no) from None
            if attr_dim is None:
                attr_dim = len(values)
            elif len(values) != attr_dim:
                raise ParseError(f"expected {attr_dim} attributes, got {len(values)}", line_no)
            rows[node_ids[name]] = values

    attrs = np.zeros((len(node_ids), attr_dim or 1), dtype=np.float64)
    missing = len(node_ids) - len(rows)
    if missing:
        warnings.warn(f"{missing} nodes have no attributes; their rows default to zero")
    for idx, values in rows.items():
        attrs[idx] = values
    return attrs


def save_edge_list(g: TemporalGraph, path) -> None:
    """Write the graph back out in the edge-list format, one snapshot per
    integer timestamp, so that reloading with the same snapshot count
    round-trips the structure."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# src dst timestamp\n")
        for snap in g.snapshots:
            for u, neigh in enumerate(snap.adjacency):
                for v in neigh:
                    if u < v:
                        fh.write(f"{g.index_ids[u]} {g.index_ids[v]} {snap.t}\n")


def load_communities(path, g: TemporalGraph) -> CommunitySet:
    """Read one whitespace-separated community of external node ids per line."""
    communities = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                if not line.strip():
                    warnings.warn(f"line {line_no}: empty community line skipped")
                continue
            members = set()
            for name in text.split():
                idx = g.node_ids.get(name)
                if idx is None:
                    raise IngestError(f"unknown node id {name!r}", line_no)
                members.add(idx)
            communities.append(frozenset(members))
    return CommunitySet(communities=tuple(communities))


def save_communities(cs: CommunitySet, g: TemporalGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for comm in cs.communities:
            fh.write(" ".join(g.index_ids[u] for u in sorted(comm)) + "\n")


# -- neighborhood extraction ---------------------------------------------------


def khop_nodes(snap: Snapshot, seeds, k: int):
    """All nodes within ``k`` hops of ``seeds`` at one snapshot (seeds included)."""
    seen = set(seeds)
    frontier = deque((u, 0) for u in seeds)
    while frontier:
        u, depth = frontier.popleft()
        if depth == k:
            continue
        for v in snap.adjacency[u]:
            if v not in seen:
                seen.add(v)
                frontier.append((v, depth + 1))
    return seen


def khop_candidate(g: TemporalGraph, t: int, q: QueryVector, k: int):
    """Subgraph induced on the k-hop neighborhood of the query at snapshot t.

    Returns ``(sub, mapping)`` where ``sub`` is a single-snapshot TemporalGraph
    over the candidate nodes and ``mapping`` is the old -> new index map.
    """
    if k < 1:
        raise ArgumentError(f"hop count must be >= 1, got {k}")
    snap = g.snapshot(t)
    for u in q.nodes:
        if not 0 <= u < g.num_nodes:
            raise ArgumentError(f"query node {u} outside 0..{g.num_nodes - 1}")
    kept = sorted(khop_nodes(snap, q.nodes, k))
    mapping = {old: new for new, old in enumerate(kept)}
    edges = [
        (mapping[u], mapping[v])
        for u in kept
        for v in snap.adjacency[u]
        if u < v and v in mapping
    ]
    node_ids = {g.index_ids[old]: new for old, new in mapping.items()}
    attrs = snap.attrs[kept] if g.has_node_attrs else None
    sub = build_temporal_graph(len(kept), [edges], node_ids=node_ids, attrs=attrs)
    return sub, mapping


def candidate_subgraph(g: TemporalGraph, q: QueryVector, k: int):
    """Subgraph induced on the union over snapshots of the query's k-hop
    neighborhoods; keeps all snapshots. Used to bound work on large graphs."""
    if k < 1:
        raise ArgumentError(f"hop count must be >= 1, got {k}")
    union = set()
    for snap in g.snapshots:
        union |= khop_nodes(snap, q.nodes, k)
    kept = sorted(union)
    mapping = {old: new for new, old in enumerate(kept)}
    edges_per_snapshot = []
    for snap in g.snapshots:
        edges_per_snapshot.append(
            [
                (mapping[u], mapping[v])
                for u in kept
                for v in snap.adjacency[u]
                if u < v and v in mapping
            ]
        )
    node_ids = {g.index_ids[old]: new for old, new in mapping.items()}
    attrs = g.snapshots[-1].attrs[kept] if g.has_node_attrs else None
    sub = build_temporal_graph(len(kept), edges_per_snapshot, node_ids=node_ids, attrs=attrs)
    return sub, mapping
