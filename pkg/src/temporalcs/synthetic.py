"""Planted-partition temporal graphs: known communities, dense inside and
sparse across, with edges redrawn independently at every snapshot so that a
single snapshot is a noisy view of the underlying structure."""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError
from .graph import CommunitySet, TemporalGraph, build_temporal_graph


def planted_partition_graph(num_communities: int = 2, community_size: int = 20,
                            num_snapshots: int = 3, p_intra: float = 0.3,
                            p_inter: float = 0.02, seed: int = 0):
    """Generate a temporal graph with ``num_communities`` planted blocks.

    Returns ``(graph, communities)``. Edge draws are independent per snapshot
    and per pair: probability ``p_intra`` inside a block, ``p_inter`` across.
    """
    if num_communities < 1 or community_size < 1 or num_snapshots < 1:
        raise ArgumentError("communities, size, and snapshots must be >= 1")
    if not (0 <= p_inter <= 1 and 0 <= p_intra <= 1):
        raise ArgumentError("edge probabilities must be in [0, 1]")
    rng = np.random.default_rng(seed)
    n = num_communities * community_size
    block = np.arange(n) // community_size

    edges_per_snapshot = []
    for _ in range(num_snapshots):
        edges = []
        for u in range(n):
            for v in range(u + 1, n):
                p = p_intra if block[u] == block[v] else p_inter
                if rng.random() < p:
                    edges.append((u, v))
        edges_per_snapshot.append(edges)

    g = build_temporal_graph(n, edges_per_snapshot)
    communities = CommunitySet(
        communities=tuple(
            frozenset(range(c * community_size, (c + 1) * community_size))
            for c in range(num_communities)
        )
    )
    return g, communities
