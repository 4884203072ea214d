"""Exact minimum-MLU LP solver with primal split ratios and edge duals.

The LP is Eq.-style path routing: minimize m subject to per-edge capacity
constraints sum_p d_p r_p <= m c(e), per-pair simplex equalities, r >= 0.
Solved by a dense revised simplex on the standard form with slacks. The
per-pair equality constraints are kept explicit so the optimal basis duals
map one-to-one onto edge prices (lambda) and pair prices.

No phase 1 is needed: routing everything on each pair's first usable path
with m set to the induced MLU is a feasible vertex, used as crash basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    DemandMatrix,
    InfeasibleError,
    NumericalError,
    PathSet,
    SplitConfig,
    Topology,
)

FEAS_TOL = 1e-7
GAP_TOL = 1e-6
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 64


@dataclass(frozen=True)
class LpSolution:
    """Optimal MLU, split ratios and edge dual prices.

    At optimal status the duals are nonnegative and satisfy
    sum_e lambda_e c(e) = 1 (the dual normalization); for the degenerate
    all-zero-demand instance they are the uniform feasible dual point.
    """

    mlu_opt: float
    split_opt: SplitConfig | None
    duals: np.ndarray | None
    status: str
    pair_duals: np.ndarray | None = None
    iterations: int = 0
    message: str = ""

    def to_json_obj(self) -> dict:
        return {
            "mlu": float(self.mlu_opt) if self.status == "optimal" else None,
            "ratios": [float(x) for x in self.split_opt.ratios]
            if self.split_opt is not None
            else None,
            "duals": [float(x) for x in self.duals]
            if self.duals is not None
            else None,
            "status": self.status,
            "message": self.message,
        }


class _Simplex:
    """Revised simplex with explicit basis inverse and Bland fallback."""

    def __init__(self, A, b, c, basis, allowed):
        self.A = A
        self.b = b
        self.c = c
        self.basis = np.array(basis, dtype=np.int64)
        self.allowed = allowed
        self.n_rows = A.shape[0]
        self.b_inv = np.linalg.inv(A[:, self.basis])
        self.iterations = 0
        self.bland = False
        self._stall = 0
        self._last_obj = np.inf

    def _refactor(self):
        self.b_inv = np.linalg.inv(self.A[:, self.basis])

    def solve(self, max_iter):
        in_basis = np.zeros(self.A.shape[1], dtype=bool)
        in_basis[self.basis] = True
        while True:
            if self.iterations > max_iter:
                raise NumericalError(
                    f"simplex exceeded {max_iter} iterations without converging"
                )
            x_b = self.b_inv @ self.b
            y = self.c[self.basis] @ self.b_inv
            rc = self.c - y @ self.A
            rc[~self.allowed] = np.inf
            rc[in_basis] = np.inf
            eligible = np.flatnonzero(rc < -PIVOT_TOL)
            if eligible.size == 0:
                return "optimal", np.maximum(x_b, 0.0), y
            if self.bland:
                enter = int(eligible[0])
            else:
                enter = int(eligible[np.argmin(rc[eligible])])
            d = self.b_inv @ self.A[:, enter]
            pos = np.flatnonzero(d > PIVOT_TOL)
            if pos.size == 0:
                return "unbounded-guard", np.maximum(x_b, 0.0), y
            ratios = np.maximum(x_b[pos], 0.0) / d[pos]
            best = ratios.min()
            ties = pos[np.flatnonzero(ratios <= best + PIVOT_TOL)]
            # Smallest leaving variable index among ties (anti-cycling).
            leave = int(ties[np.argmin(self.basis[ties])])

            obj = float(self.c[self.basis] @ x_b)
            if obj >= self._last_obj - PIVOT_TOL:
                self._stall += 1
                if self._stall > 2 * self.n_rows:
                    self.bland = True
            else:
                self._stall = 0
            self._last_obj = obj

            in_basis[self.basis[leave]] = False
            in_basis[enter] = True
            self.basis[leave] = enter
            pivot_row = self.b_inv[leave] / d[leave]
            self.b_inv -= np.outer(d, pivot_row)
            self.b_inv[leave] = pivot_row
            self.iterations += 1
            if self.iterations % REFACTOR_EVERY == 0:
                self._refactor()


def _usable_paths(topology: Topology, pathset: PathSet) -> np.ndarray:
    """Boolean per path: does it avoid every zero-capacity edge?"""
    caps = topology.capacities
    alive = np.ones(pathset.n_paths, dtype=bool)
    idx = 0
    for per_pair in pathset.paths:
        for path in per_pair:
            if any(caps[e] == 0.0 for e in path):
                alive[idx] = False
            idx += 1
    return alive


def _uniform_dual(caps: np.ndarray) -> np.ndarray:
    """A feasible dual point (sum lambda c = 1) for zero-demand instances."""
    lam = np.zeros_like(caps)
    live = caps > 0
    lam[live] = 1.0 / (live.sum() * caps[live])
    return lam


def solve_mlu_lp(
    topology: Topology, pathset: PathSet, demands: DemandMatrix
) -> LpSolution:
    """Solve the minimum-MLU routing LP exactly.

    Paths crossing failed (zero capacity) edges are forced to zero ratio.
    A pair whose demand is positive but has no usable path makes the
    instance infeasible; a zero-demand pair with no usable path is dropped
    from the equality rows (it cannot route and carries nothing).
    """
    if pathset.incidence is None:
        raise InfeasibleError("pathset has no incidence matrix")
    n_edges = topology.n_edges
    caps = topology.capacities

    # Demand on pairs outside the routable set is unservable.
    routable = set(pathset.pairs)
    positive = np.argwhere(demands.values > 0)
    for s, t in positive:
        if (int(s), int(t)) not in routable:
            return LpSolution(
                float("nan"), None, None, "infeasible",
                message=f"pair ({s},{t}) has positive demand and no path",
            )

    alive = _usable_paths(topology, pathset)
    counts = pathset.path_counts
    offsets = np.concatenate([[0], np.cumsum(counts)])
    active_pairs = []
    for i, (s, t) in enumerate(pathset.pairs):
        pair_alive = alive[offsets[i] : offsets[i + 1]]
        if not pair_alive.any():
            if demands.values[s, t] > 0:
                return LpSolution(
                    float("nan"), None, None, "infeasible",
                    message=f"pair ({s},{t}) has positive demand and no usable path",
                )
            continue
        active_pairs.append(i)

    n_paths = pathset.n_paths
    n_pairs = len(active_pairs)
    n_rows = n_edges + n_pairs
    n_cols = n_paths + 1 + n_edges
    m_col = n_paths

    d_per_path = pathset.demand_per_path(demands)
    xi_dense = pathset.incidence.toarray()

    A = np.zeros((n_rows, n_cols))
    A[:n_edges, :n_paths] = (xi_dense * d_per_path[:, None]).T
    A[:n_edges, m_col] = -caps
    A[:n_edges, m_col + 1 :] = np.eye(n_edges)
    for row, i in enumerate(active_pairs):
        A[n_edges + row, offsets[i] : offsets[i + 1]] = 1.0
    b = np.concatenate([np.zeros(n_edges), np.ones(n_pairs)])
    c = np.zeros(n_cols)
    c[m_col] = 1.0

    allowed = np.ones(n_cols, dtype=bool)
    allowed[:n_paths] = alive
    for i in range(len(pathset.pairs)):
        if i not in set(active_pairs):
            allowed[offsets[i] : offsets[i + 1]] = False

    # Crash basis: first usable path per active pair, m, and every edge
    # slack except one positive-capacity bottleneck edge.
    first_paths = []
    for i in active_pairs:
        j = offsets[i] + int(np.argmax(alive[offsets[i] : offsets[i + 1]]))
        first_paths.append(j)
    flows = xi_dense[first_paths].T @ d_per_path[first_paths]
    with np.errstate(divide="ignore", invalid="ignore"):
        util = np.where(caps > 0, flows / np.where(caps > 0, caps, 1.0), 0.0)
    bottleneck = int(np.argmax(util))
    if caps[bottleneck] <= 0:
        bottleneck = int(np.argmax(caps > 0))
    slack_rows = [e for e in range(n_edges) if e != bottleneck]
    basis = first_paths + [m_col] + [m_col + 1 + e for e in slack_rows]

    simplex = _Simplex(A, b, c, basis, allowed)
    status, x_b, y = simplex.solve(max_iter=20000 + 20 * n_cols)
    if status != "optimal":
        return LpSolution(
            float("nan"), None, None, status,
            iterations=simplex.iterations,
            message="ratio test found no blocking variable",
        )

    x = np.zeros(n_cols)
    x[simplex.basis] = x_b
    ratios = np.maximum(x[:n_paths], 0.0)
    mlu_opt = float(x[m_col])
    lam = -y[:n_edges]
    lam = np.where(np.abs(lam) < PIVOT_TOL, np.maximum(lam, 0.0), lam)
    pair_duals = np.zeros(len(pathset.pairs))
    for row, i in enumerate(active_pairs):
        pair_duals[i] = y[n_edges + row]
    if mlu_opt < PIVOT_TOL and abs(float(lam @ caps) - 1.0) > FEAS_TOL:
        # m never entered the basis (nothing to route): report the uniform
        # feasible dual point instead of the all-zero multipliers.
        lam = _uniform_dual(caps)
    return LpSolution(
        mlu_opt,
        SplitConfig(ratios),
        lam,
        "optimal",
        pair_duals=pair_duals,
        iterations=simplex.iterations,
    )


@dataclass(frozen=True)
class DualityReport:
    """Strong-duality diagnostics for an LP solution."""

    mlu_opt: float
    dual_objective: float
    gap: float
    gap_ok: bool
    sum_lambda_c: float
    normalized_duals: np.ndarray
    comp_slack_residual: float
    primal_capacity_residual: float
    primal_simplex_residual: float
    minimizers_unique: bool
    recovered_mlu: float | None
    ok: bool


class DualityVerificationError(DualTeError := NumericalError.__bases__[0]):
    pass


def _path_costs(pathset: PathSet, lam: np.ndarray) -> np.ndarray:
    return pathset.incidence @ lam


def min_cost_split(pathset: PathSet, lam: np.ndarray) -> tuple[SplitConfig, bool]:
    """One-hot split on each pair's cheapest path under edge prices lam.

    Also reports whether every pair's minimizer was unique (no exact tie
    within PIVOT_TOL).
    """
    costs = _path_costs(pathset, lam)
    counts = pathset.path_counts
    offsets = np.concatenate([[0], np.cumsum(counts)])
    ratios = np.zeros(pathset.n_paths)
    unique = True
    for i in range(len(pathset.pairs)):
        seg = costs[offsets[i] : offsets[i + 1]]
        j = int(np.argmin(seg))
        ratios[offsets[i] + j] = 1.0
        if np.sum(seg <= seg[j] + PIVOT_TOL) > 1:
            unique = False
    return SplitConfig(ratios), unique


def dual_objective(pathset: PathSet, demands: DemandMatrix, lam: np.ndarray) -> float:
    """Dual objective: sum over pairs of demand times cheapest path cost."""
    costs = _path_costs(pathset, lam)
    counts = pathset.path_counts
    offsets = np.concatenate([[0], np.cumsum(counts)])
    total = 0.0
    for i, (s, t) in enumerate(pathset.pairs):
        seg = costs[offsets[i] : offsets[i + 1]]
        total += demands.values[s, t] * float(seg.min())
    return total


def verify_duality(
    solution: LpSolution,
    topology: Topology,
    pathset: PathSet,
    demands: DemandMatrix,
) -> DualityReport:
    """Check strong duality, complementary slackness and dual recovery.

    Raises DualityVerificationError (carrying the report) when the duality
    gap exceeds tolerance or the recovered split beats feasibility.
    """
    from .core import edge_flows  # local: avoids import noise at module top

    if solution.status != "optimal":
        raise InfeasibleError(f"cannot verify a solution with status {solution.status}")
    lam = solution.duals
    caps = topology.capacities
    m_opt = solution.mlu_opt
    dobj = dual_objective(pathset, demands, lam)
    gap = abs(m_opt - dobj)
    gap_ok = gap <= GAP_TOL * max(1.0, m_opt)

    sum_lc = float(lam @ caps)
    norm = lam / sum_lc if abs(sum_lc) > PIVOT_TOL else lam.copy()

    state = edge_flows(pathset, demands, solution.split_opt, topology)
    comp = float(np.max(np.abs(lam * (state.edge_flows - m_opt * caps)), initial=0.0))
    cap_resid = float(np.max(state.edge_flows - m_opt * caps, initial=0.0))
    simplex_resid = 0.0
    off = 0
    for per_pair in pathset.paths:
        seg = solution.split_opt.ratios[off : off + len(per_pair)]
        simplex_resid = max(simplex_resid, abs(float(seg.sum()) - 1.0))
        off += len(per_pair)

    recovered, unique = min_cost_split(pathset, lam)
    recovered_mlu = None
    recovery_ok = True
    if unique:
        recovered_mlu = edge_flows(pathset, demands, recovered, topology).mlu
        recovery_ok = recovered_mlu <= m_opt * (1 + GAP_TOL) + PIVOT_TOL

    ok = gap_ok and recovery_ok and cap_resid <= FEAS_TOL and simplex_resid <= FEAS_TOL
    report = DualityReport(
        m_opt, dobj, gap, gap_ok, sum_lc, norm, comp, cap_resid,
        simplex_resid, unique, recovered_mlu, ok,
    )
    if not ok:
        raise DualityVerificationError(
            f"duality verification failed: gap={gap:.3e} (ok={gap_ok}), "
            f"capacity residual={cap_resid:.3e}, simplex residual={simplex_resid:.3e}, "
            f"recovered MLU={recovered_mlu} vs m*={m_opt}"
        )
    return report
