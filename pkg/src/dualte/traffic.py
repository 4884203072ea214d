"""Demand synthesis, temporal prediction and traffic-matrix partitioning.

Synthetic demand follows the gravity model with node mass equal to total
incident capacity, perturbed per snapshot by independent lognormal noise.
Predictors (moving average, per-entry linear regression) feed the
uncertainty-mode training loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DemandMatrix, PathSet, StructuralError, Topology

DEFAULT_WINDOW = 12
TRAIN_FRACTION = 0.75


@dataclass(frozen=True)
class TrafficTrace:
    """Ordered demand snapshots, one per time step."""

    snapshots: tuple[DemandMatrix, ...]
    interval: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        sizes = {dm.n_nodes for dm in self.snapshots}
        if len(sizes) > 1:
            raise StructuralError(f"snapshots disagree on node count: {sorted(sizes)}")

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, i: int) -> DemandMatrix:
        return self.snapshots[i]


def gravity_tm(
    topology: Topology,
    total_demand: float,
    seed: int,
    sigma: float = 0.5,
) -> DemandMatrix:
    """Gravity-model demand: D_st proportional to w_s * w_t for s != t.

    Node mass w is the total capacity incident to the node, perturbed by a
    lognormal factor exp(sigma * Z). Entries are normalized so the matrix
    sums to total_demand exactly.
    """
    if total_demand < 0:
        raise StructuralError("total demand must be nonnegative")
    w = topology.incident_capacity()
    for node, mass in enumerate(w):
        if mass <= 0:
            raise StructuralError(
                f"node {topology.nodes[node]} is isolated (zero incident capacity)"
            )
    rng = np.random.default_rng(seed)
    if sigma > 0:
        w = w * rng.lognormal(mean=0.0, sigma=sigma, size=w.shape)
    prod = np.outer(w, w)
    np.fill_diagonal(prod, 0.0)
    denom = prod.sum()
    if total_demand == 0:
        return DemandMatrix(np.zeros_like(prod))
    return DemandMatrix(prod * (total_demand / denom))


def gravity_trace(
    topology: Topology,
    n_snapshots: int,
    total_demand: float,
    seed: int,
    sigma: float = 0.5,
) -> TrafficTrace:
    """A trace of independent gravity snapshots (noise redrawn per step)."""
    return TrafficTrace(
        tuple(
            gravity_tm(topology, total_demand, seed + i, sigma)
            for i in range(n_snapshots)
        )
    )


def _check_history(trace: TrafficTrace, t: int, window: int, minimum: int):
    if window < minimum:
        raise StructuralError(f"window must be >= {minimum}, got {window}")
    if t > len(trace):
        raise StructuralError(f"index {t} beyond trace of length {len(trace)}")
    if t < window:
        raise StructuralError(
            f"insufficient history: index {t} with window {window}"
        )


def mov_avg_predict(
    trace: TrafficTrace, t: int, window: int = DEFAULT_WINDOW
) -> DemandMatrix:
    """Entrywise mean of the window snapshots preceding t."""
    _check_history(trace, t, window, 1)
    stack = np.stack([trace[i].values for i in range(t - window, t)])
    return DemandMatrix(stack.mean(axis=0))


def lin_reg_predict(
    trace: TrafficTrace, t: int, window: int = DEFAULT_WINDOW
) -> DemandMatrix:
    """Per-entry least-squares line over the window, extrapolated one step.

    Negative extrapolations are clamped to zero.
    """
    _check_history(trace, t, window, 2)
    stack = np.stack([trace[i].values for i in range(t - window, t)])
    x = np.arange(window, dtype=np.float64)
    xbar = x.mean()
    denom = ((x - xbar) ** 2).sum()
    ybar = stack.mean(axis=0)
    slope = np.tensordot(x - xbar, stack, axes=(0, 0)) / denom
    pred = ybar + slope * (window - xbar)
    pred = np.maximum(pred, 0.0)
    np.fill_diagonal(pred, 0.0)
    return DemandMatrix(pred)


@dataclass(frozen=True)
class PartitionSpec:
    """Partition of the routable pairs into s groups of near-equal size."""

    s: int
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "groups", tuple(tuple(int(i) for i in g) for g in self.groups)
        )
        if self.s != len(self.groups):
            raise StructuralError(f"s={self.s} but {len(self.groups)} groups given")
        if any(len(g) == 0 for g in self.groups):
            raise StructuralError("empty partition group")
        flat = sorted(i for g in self.groups for i in g)
        if flat != list(range(len(flat))):
            raise StructuralError("groups must cover every pair index exactly once")
        sizes = [len(g) for g in self.groups]
        if max(sizes) - min(sizes) > 1:
            raise StructuralError(f"group sizes {sizes} differ by more than 1")

    @classmethod
    def round_robin(cls, n_pairs: int, s: int) -> "PartitionSpec":
        if s < 1 or s > n_pairs:
            raise StructuralError(f"cannot split {n_pairs} pairs into {s} groups")
        groups = tuple(
            tuple(range(g, n_pairs, s)) for g in range(s)
        )
        return cls(s, groups)


def partition_tm(
    demands: DemandMatrix, pathset: PathSet, spec: PartitionSpec
) -> list[tuple[DemandMatrix, PathSet]]:
    """Split the instance into per-group (sub-demand, sub-pathset) views.

    The topology (incidence columns) is untouched: each sub incidence matrix
    keeps all |E| columns and only the group's path rows. Sub-demands zero
    every entry outside the group's pairs, so per-group edge flows sum to
    the unpartitioned flows for any fixed ratios.
    """
    if max(i for g in spec.groups for i in g) >= len(pathset.pairs):
        raise StructuralError("partition references pair index beyond pathset")
    counts = pathset.path_counts
    offsets = np.concatenate([[0], np.cumsum(counts)])
    out = []
    for group in spec.groups:
        dm = np.zeros_like(demands.values)
        for i in group:
            s, t = pathset.pairs[i]
            dm[s, t] = demands.values[s, t]
        rows = np.concatenate(
            [np.arange(offsets[i], offsets[i + 1]) for i in group]
        )
        incidence = None
        if pathset.incidence is not None:
            incidence = pathset.incidence[rows]
        sub = PathSet(
            tuple(pathset.pairs[i] for i in group),
            tuple(pathset.paths[i] for i in group),
            pathset.k,
            incidence,
            pathset.disconnected,
        )
        out.append((DemandMatrix(dm), sub))
    return out


def chronological_split(trace: TrafficTrace, train_fraction: float = TRAIN_FRACTION):
    """(train, test) index ranges of a chronological split."""
    cut = int(len(trace) * train_fraction)
    return range(0, cut), range(cut, len(trace))
