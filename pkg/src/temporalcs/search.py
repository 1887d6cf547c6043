"""Online query answering: threshold-BFS over model membership probabilities.

The query nodes seed both the result and the BFS frontier unconditionally;
expansion adds any unvisited neighbor whose probability clears the threshold.
A visited set guarantees termination (pure fix; the result is unchanged), so
the traversal is O(|V| + |E|) after the forward pass.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .evaluation import f1_score
from .graph import QueryVector, TemporalGraph


@dataclass(frozen=True)
class CommunityResult:
    """Extracted community: probabilities, members, and the query answered."""

    psi: np.ndarray
    members: frozenset
    query: QueryVector
    threshold: float
    t: int = 0

    def to_record(self, g: TemporalGraph | None = None) -> dict:
        """JSON-ready record; external ids when the graph is given."""
        name = (lambda u: g.external_id(u)) if g is not None else (lambda u: str(u))
        return {
            "t": self.t,
            "eta": self.threshold,
            "query": sorted(name(u) for u in self.query.nodes),
            "members": sorted(name(u) for u in self.members),
            "psi": {name(u): float(self.psi[u]) for u in sorted(self.members)},
        }


def threshold_bfs(adjacency, query_nodes, psi: np.ndarray, eta: float) -> frozenset:
    """Members reachable from the query through probability >= eta nodes.

    Query nodes are included (and expanded through) regardless of their own
    probability.
    """
    members = set(query_nodes)
    frontier = deque(query_nodes)
    while frontier:
        u = frontier.popleft()
        for v in adjacency[u]:
            if v not in members and psi[v] >= eta:
                members.add(v)
                frontier.append(v)
    return frozenset(members)


def identify_community(g: TemporalGraph, t: int, query: QueryVector, model,
                       eta: float = 0.5, history_t: int | None = None) -> CommunityResult:
    """Answer one community query at snapshot ``t`` with a trained model.

    ``history_t`` positions the model's history timeline when it is not the
    snapshot index (interactive sessions count interactions).
    """
    if not 0.0 <= eta <= 1.0:
        raise ArgumentError(f"threshold must be in [0, 1], got {eta}")
    psi = model.predict(g, t, query, history_t=history_t)
    members = threshold_bfs(g.snapshot(t).adjacency, query.nodes, psi, eta)
    return CommunityResult(psi=psi, members=members, query=query, threshold=eta, t=t)


def sweep_threshold(g: TemporalGraph, t: int, query: QueryVector, model, grid,
                    truth=None):
    """One (eta, community size, optional F1) row per grid value, reusing a
    single forward pass."""
    grid = list(grid)
    if not grid:
        raise ArgumentError("threshold grid is empty")
    for eta in grid:
        if not 0.0 <= eta <= 1.0:
            raise ArgumentError(f"threshold must be in [0, 1], got {eta}")
    psi = model.predict(g, t, query)
    adjacency = g.snapshot(t).adjacency
    rows = []
    for eta in grid:
        members = threshold_bfs(adjacency, query.nodes, psi, eta)
        f1 = f1_score(members, truth)[2] if truth is not None else None
        rows.append((eta, len(members), f1))
    return rows


def write_results(results, path, g: TemporalGraph | None = None) -> None:
    """Line-delimited serialization of community results."""
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result.to_record(g), sort_keys=True) + "\n")
