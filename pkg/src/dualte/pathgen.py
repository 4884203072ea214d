"""Candidate path computation (Yen's K shortest loopless paths) and
path-order shuffling for robustness experiments.

Edge weight is unit (hop count). Ties between equal-hop paths are broken
lexicographically on the edge-index sequence, which makes path generation
fully deterministic and independent of dict/hash ordering.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .core import PathSet, StructuralError, Topology, build_incidence


@dataclass(frozen=True)
class PathGenConfig:
    k: int = 4
    weight: str = "hop"

    def __post_init__(self):
        if self.k < 1:
            raise StructuralError("path budget k must be >= 1")
        if self.weight != "hop":
            raise StructuralError(f"unsupported edge weight metric '{self.weight}'")


def _adjacency(topology: Topology) -> list[list[tuple[int, int]]]:
    """Per-node outgoing (edge_index, dst) lists, sorted by edge index."""
    adj: list[list[tuple[int, int]]] = [[] for _ in topology.nodes]
    for idx, (u, v) in enumerate(topology.edges):
        adj[u].append((idx, v))
    for lst in adj:
        lst.sort()
    return adj


def _shortest_path(adj, s, t, banned_nodes=frozenset(), banned_edges=frozenset()):
    """Minimum-hop path s->t, lexicographically smallest edge sequence.

    The heap is keyed by (hops, edge_sequence); appending an edge preserves
    this order between equal-length prefixes, so the first pop per node is
    final. Returns a tuple of edge indices or None.
    """
    if s == t:
        return ()
    heap = [(0, (), s)]
    done = set()
    while heap:
        hops, seq, node = heapq.heappop(heap)
        if node == t:
            return seq
        if node in done:
            continue
        done.add(node)
        for eidx, nxt in adj[node]:
            if eidx in banned_edges or nxt in banned_nodes or nxt in done:
                continue
            heapq.heappush(heap, (hops + 1, seq + (eidx,), nxt))
    return None


def yen_k_shortest(topology: Topology, s: int, t: int, k: int) -> list[tuple[int, ...]]:
    """Up to k loopless s->t paths, ordered by (hop count, edge sequence).

    Returns fewer than k paths iff fewer simple paths exist; an unreachable
    destination yields an empty list.
    """
    n = topology.n_nodes
    if not (0 <= s < n and 0 <= t < n):
        raise StructuralError(f"source/target ({s},{t}) out of range for {n} nodes")
    if s == t:
        raise StructuralError("source and target must differ")
    if k < 1:
        raise StructuralError("k must be >= 1")

    adj = _adjacency(topology)
    first = _shortest_path(adj, s, t)
    if first is None:
        return []

    accepted = [first]
    candidates: list[tuple[int, tuple[int, ...]]] = []
    seen = {first}

    while len(accepted) < k:
        prev = accepted[-1]
        # Node at position i along prev (node sequence derived from edges).
        spur_node = s
        for i in range(len(prev)):
            root = prev[:i]
            banned_edges = {
                path[i] for path in accepted if path[:i] == root and len(path) > i
            }
            banned_nodes = set()
            at = s
            for e in root:
                banned_nodes.add(at)
                at = topology.edges[e][1]
            spur = _shortest_path(adj, spur_node, t, banned_nodes, banned_edges)
            if spur is not None:
                cand = root + spur
                if cand not in seen:
                    seen.add(cand)
                    heapq.heappush(candidates, (len(cand), cand))
            spur_node = topology.edges[prev[i]][1]
        if not candidates:
            break
        _, best = heapq.heappop(candidates)
        accepted.append(best)

    accepted.sort(key=lambda p: (len(p), p))
    return accepted


def build_pathset(topology: Topology, k: int = 4) -> PathSet:
    """Yen paths for every ordered pair, in lexicographic (s, t) order.

    Pairs with no path are flagged disconnected and excluded from the
    routable pair list.
    """
    pairs = []
    paths = []
    disconnected = []
    n = topology.n_nodes
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            found = yen_k_shortest(topology, s, t, k)
            if found:
                pairs.append((s, t))
                paths.append(tuple(found))
            else:
                disconnected.append((s, t))
    ps = PathSet(tuple(pairs), tuple(paths), k, disconnected=tuple(disconnected))
    return build_incidence(topology, ps)


def shuffle_paths(pathset: PathSet, seed: int) -> PathSet:
    """Permute path order within each pair with a seeded PRNG.

    The incidence matrix is permuted consistently, so any ratio assignment
    re-indexed through the same permutation routes identical flow.
    """
    rng = np.random.default_rng(seed)
    new_paths = []
    row_perm = []
    offset = 0
    for per_pair in pathset.paths:
        perm = rng.permutation(len(per_pair))
        new_paths.append(tuple(per_pair[j] for j in perm))
        row_perm.extend(offset + j for j in perm)
        offset += len(per_pair)
    incidence = None
    if pathset.incidence is not None:
        incidence = pathset.incidence[np.array(row_perm, dtype=np.int64)]
    return PathSet(
        pathset.pairs, tuple(new_paths), pathset.k, incidence, pathset.disconnected
    )
