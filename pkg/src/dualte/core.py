"""Canonical domain types and reference flow/MLU semantics.

Everything here is immutable after construction and computed in float64.
The edge list order of a Topology is the canonical edge indexing used by
every other module; likewise PathSet fixes the canonical pair and path
ordering that incidence rows, ratio vectors and checkpoints align to.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


class DualTeError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(DualTeError):
    """Malformed topology, path set, demand matrix or split configuration."""


class ConfigError(DualTeError):
    """Invalid configuration value or file."""


class InfeasibleError(DualTeError):
    """A routing instance that cannot be satisfied (demand with no path)."""


class NumericalError(DualTeError):
    """Non-finite values or a solver that failed to converge."""


SIMPLEX_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Topology:
    """Directed capacitated graph.

    ``failed`` marks edges whose capacity has been zeroed by a failure
    scenario; only those edges may carry capacity 0.
    """

    nodes: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    capacities: np.ndarray
    failed: frozenset[int] = frozenset()

    def __post_init__(self):
        nodes = tuple(str(n) for n in self.nodes)
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        caps = _readonly(np.asarray(self.capacities, dtype=np.float64))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "failed", frozenset(int(e) for e in self.failed))
        n = len(nodes)
        if caps.shape != (len(edges),):
            raise StructuralError(
                f"capacity vector length {caps.shape} does not match {len(edges)} edges"
            )
        seen = set()
        for i, (u, v) in enumerate(edges):
            if not (0 <= u < n and 0 <= v < n):
                raise StructuralError(f"edge {i} ({u},{v}) references unknown node")
            if u == v:
                raise StructuralError(f"edge {i} is a self-loop at node {u}")
            if (u, v) in seen:
                raise StructuralError(f"duplicate directed edge ({u},{v})")
            seen.add((u, v))
        for i, c in enumerate(caps):
            if i in self.failed:
                if c != 0.0:
                    raise StructuralError(f"failed edge {i} must have capacity 0")
            elif not c > 0.0:
                raise StructuralError(f"edge {i} has non-positive capacity {c}")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def with_failures(self, failed_edges) -> "Topology":
        """Return a copy with the given edges failed (capacity zeroed)."""
        failed = self.failed | {int(e) for e in failed_edges}
        caps = np.array(self.capacities)
        for e in failed:
            if not 0 <= e < self.n_edges:
                raise StructuralError(f"failed edge index {e} out of range")
            caps[e] = 0.0
        return Topology(self.nodes, self.edges, caps, frozenset(failed))

    def incident_capacity(self) -> np.ndarray:
        """Per-node total capacity of incident (in+out) edges."""
        w = np.zeros(self.n_nodes)
        for (u, v), c in zip(self.edges, self.capacities):
            w[u] += c
            w[v] += c
        return w

    def digest(self) -> str:
        return sha256_text(topology_to_json(self))


def undirected_topology(nodes, links, capacities) -> Topology:
    """Expand an undirected link list into antiparallel directed edges.

    Each link (u, v, c) becomes directed edges u->v and v->u, both with
    capacity c. Directed edge order: both directions of link 0, then link 1...
    """
    edges = []
    caps = []
    for (u, v), c in zip(links, capacities):
        edges.append((u, v))
        edges.append((v, u))
        caps.extend([c, c])
    return Topology(tuple(nodes), tuple(edges), np.asarray(caps, dtype=np.float64))


@dataclass(frozen=True)
class DemandMatrix:
    """|V| x |V| nonnegative demand with a structurally zero diagonal."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise StructuralError(f"demand matrix must be square, got {v.shape}")
        if np.any(v < 0):
            s, t = np.argwhere(v < 0)[0]
            raise StructuralError(f"negative demand at ({s},{t})")
        if np.any(np.diagonal(v) != 0):
            raise StructuralError("demand diagonal must be zero")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    def total(self) -> float:
        return float(self.values.sum())

    def scaled(self, alpha: float) -> "DemandMatrix":
        return DemandMatrix(self.values * float(alpha))


@dataclass(frozen=True)
class PathSet:
    """Candidate paths per source-destination pair plus the incidence matrix.

    ``pairs`` lists the connected ordered pairs (the set of routable pairs)
    in canonical order; ``paths[i]`` are the candidate paths of ``pairs[i]``,
    each a tuple of edge indices. ``incidence`` is the (|paths|, |E|) binary
    path-to-edge matrix in CSR layout, rows in global path order (pairs in
    order, paths within a pair in stored order). Pairs with no path are
    recorded in ``disconnected`` and excluded from ``pairs``.
    """

    pairs: tuple[tuple[int, int], ...]
    paths: tuple[tuple[tuple[int, ...], ...], ...]
    k: int
    incidence: sparse.csr_array | None = None
    disconnected: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "pairs", tuple((int(s), int(t)) for s, t in self.pairs)
        )
        object.__setattr__(
            self,
            "paths",
            tuple(
                tuple(tuple(int(e) for e in p) for p in per_pair)
                for per_pair in self.paths
            ),
        )
        object.__setattr__(
            self, "disconnected", tuple((int(s), int(t)) for s, t in self.disconnected)
        )
        if len(self.pairs) != len(self.paths):
            raise StructuralError("pairs and paths lists differ in length")
        if self.k < 1:
            raise StructuralError("path budget k must be >= 1")
        for (s, t), per_pair in zip(self.pairs, self.paths):
            if s == t:
                raise StructuralError(f"pair ({s},{t}) is a self-pair")
            if len(per_pair) == 0:
                raise StructuralError(f"pair ({s},{t}) listed with zero paths")

    @property
    def n_paths(self) -> int:
        return sum(len(p) for p in self.paths)

    @property
    def path_counts(self) -> np.ndarray:
        return np.array([len(p) for p in self.paths], dtype=np.int64)

    def pair_of_path(self) -> np.ndarray:
        """Global path index -> pair index."""
        return np.repeat(np.arange(len(self.pairs)), self.path_counts)

    def flat_paths(self):
        for per_pair in self.paths:
            yield from per_pair

    def demand_per_path(self, demands: DemandMatrix) -> np.ndarray:
        """Demand of the pair each path serves, in global path order."""
        per_pair = np.array([demands.values[s, t] for s, t in self.pairs])
        return np.repeat(per_pair, self.path_counts)


def build_incidence(topology: Topology, pathset: PathSet) -> PathSet:
    """Populate the path-to-edge incidence matrix, validating every path.

    Each path must be a simple directed walk from its pair's source to its
    destination over existing edges.
    """
    n_edges = topology.n_edges
    indptr = [0]
    indices = []
    for pair_idx, ((s, t), per_pair) in enumerate(zip(pathset.pairs, pathset.paths)):
        for path_idx, path in enumerate(per_pair):
            label = f"pair ({s},{t}) path {path_idx} {list(path)}"
            if len(path) == 0:
                raise StructuralError(f"empty path: {label}")
            visited = set()
            at = s
            for e in path:
                if not 0 <= e < n_edges:
                    raise StructuralError(f"invalid edge index {e} in {label}")
                u, v = topology.edges[e]
                if u != at:
                    raise StructuralError(f"edge {e} does not continue walk in {label}")
                if u in visited:
                    raise StructuralError(f"node {u} revisited in {label}")
                visited.add(u)
                at = v
            if at != t:
                raise StructuralError(f"walk ends at node {at}, not {t}: {label}")
            if at in visited:
                raise StructuralError(f"node {at} revisited in {label}")
            indices.extend(sorted(path))
            indptr.append(len(indices))
    xi = sparse.csr_array(
        (
            np.ones(len(indices), dtype=np.float64),
            np.array(indices, dtype=np.int32),
            np.array(indptr, dtype=np.int32),
        ),
        shape=(len(indptr) - 1, n_edges),
    )
    return PathSet(
        pathset.pairs, pathset.paths, pathset.k, xi, pathset.disconnected
    )


@dataclass(frozen=True)
class SplitConfig:
    """Per-path split ratios in global path order."""

    ratios: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.ratios, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "ratios", _readonly(r))

    def validate(self, pathset: PathSet, tol: float = SIMPLEX_TOL):
        if self.ratios.shape[0] != pathset.n_paths:
            raise StructuralError(
                f"{self.ratios.shape[0]} ratios for {pathset.n_paths} paths"
            )
        if np.any(self.ratios < -tol):
            raise StructuralError("negative split ratio")
        off = 0
        for (s, t), per_pair in zip(pathset.pairs, pathset.paths):
            total = self.ratios[off : off + len(per_pair)].sum()
            if abs(total - 1.0) > tol:
                raise StructuralError(f"pair ({s},{t}) ratios sum to {total}")
            off += len(per_pair)


def uniform_split(pathset: PathSet) -> SplitConfig:
    counts = pathset.path_counts
    return SplitConfig(np.repeat(1.0 / counts, counts))


@dataclass(frozen=True)
class FlowState:
    """Per-edge flow, utilization and the induced MLU.

    Utilization of a zero-capacity (failed) edge is 0 when it carries no
    flow and +inf otherwise, so violations are visible.
    """

    edge_flows: np.ndarray
    utilizations: np.ndarray
    mlu: float


def edge_flows(
    pathset: PathSet,
    demands: DemandMatrix,
    split: SplitConfig,
    topology: Topology,
) -> FlowState:
    """Accumulate per-path loads onto edges: F = xi^T (demand-per-path * R)."""
    if pathset.incidence is None:
        raise StructuralError("pathset has no incidence matrix; run build_incidence")
    xi = pathset.incidence
    if split.ratios.shape[0] != xi.shape[0]:
        raise StructuralError(
            f"{split.ratios.shape[0]} ratios for {xi.shape[0]} incidence rows"
        )
    loads = pathset.demand_per_path(demands) * split.ratios
    flows = xi.T @ loads
    caps = topology.capacities
    with np.errstate(divide="ignore", invalid="ignore"):
        util = np.where(
            caps > 0,
            flows / np.where(caps > 0, caps, 1.0),
            np.where(flows > SIMPLEX_TOL, np.inf, 0.0),
        )
    mlu = float(util.max()) if util.size else 0.0
    return FlowState(_readonly(flows), _readonly(util), mlu)


def mlu_of(
    split: SplitConfig,
    demands: DemandMatrix,
    pathset: PathSet,
    topology: Topology,
) -> float:
    return edge_flows(pathset, demands, split, topology).mlu


# ---------------------------------------------------------------------------
# File formats: topology JSON, pathset JSON, demand CSV.

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def topology_to_json(topology: Topology) -> str:
    return canonical_json(
        {
            "nodes": list(topology.nodes),
            "edges": [list(e) for e in topology.edges],
            "capacities": [float(c) for c in topology.capacities],
        }
    )


def topology_from_json(text: str) -> Topology:
    obj = json.loads(text)
    for key in ("nodes", "edges", "capacities"):
        if key not in obj:
            raise ConfigError(f"topology file missing key '{key}'")
    caps = np.asarray(obj["capacities"], dtype=np.float64)
    failed = frozenset(np.flatnonzero(caps == 0.0).tolist())
    return Topology(tuple(obj["nodes"]), tuple(map(tuple, obj["edges"])), caps, failed)


def pathset_to_json(pathset: PathSet) -> str:
    obj = {
        "k": pathset.k,
        "pairs": [list(p) for p in pathset.pairs],
        "paths": [[list(p) for p in per_pair] for per_pair in pathset.paths],
    }
    if pathset.disconnected:
        obj["disconnected"] = [list(p) for p in pathset.disconnected]
    return canonical_json(obj)


def pathset_from_json(text: str, topology: Topology | None = None) -> PathSet:
    """Load a pathset; if a topology is given the incidence matrix is built."""
    obj = json.loads(text)
    for key in ("k", "pairs", "paths"):
        if key not in obj:
            raise ConfigError(f"pathset file missing key '{key}'")
    ps = PathSet(
        tuple(map(tuple, obj["pairs"])),
        tuple(tuple(map(tuple, per_pair)) for per_pair in obj["paths"]),
        int(obj["k"]),
        disconnected=tuple(map(tuple, obj.get("disconnected", ()))),
    )
    if topology is not None:
        ps = build_incidence(topology, ps)
    return ps


def _fmt(x: float) -> str:
    return repr(float(x))


def demands_to_csv(snapshots) -> str:
    """One row per snapshot, |V|^2 columns in row-major order."""
    lines = []
    for dm in snapshots:
        lines.append(",".join(_fmt(x) for x in dm.values.reshape(-1)))
    return "\n".join(lines) + "\n"


def demands_from_csv(text: str) -> list[DemandMatrix]:
    out = []
    for line_no, line in enumerate(text.strip().splitlines(), start=1):
        if not line.strip():
            continue
        row = np.array([float(x) for x in line.split(",")])
        n = math.isqrt(row.size)
        if n * n != row.size:
            raise ConfigError(
                f"demand CSV line {line_no} has {row.size} columns, not a square count"
            )
        out.append(DemandMatrix(row.reshape(n, n)))
    return out
