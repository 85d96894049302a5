"""Atomic measures on grid cells, measures on discrete curves, transport.

Measures over curves are finite convex combinations of Dirac masses on
grid paths; their time marginals are atomic measures on cells.  All
transport problems (Wasserstein-1 with the periodic ground metric,
curve-space Wasserstein-1 with the uniform metric, transport against a
pinned-endpoint cost matrix) are solved exactly as linear programs at
desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import InfeasibleCostError, MFGTorusError, SizeCapError
from .torus import TorusGrid

# Sentinel for unreachable pinned-endpoint costs; an entry is treated as
# finite only when it stays below LARGE / 2.
LARGE = 1.0e9

# Desk-scale cap on atom counts per measure in exact transport.
DESK_SCALE_CAP = 4096

WEIGHT_TOL = 1e-12


def _canonical_atoms(keys, weights):
    """Sort atoms by key and merge duplicates (weights add)."""
    order = np.lexsort(tuple(keys[:, k] for k in reversed(range(keys.shape[1]))))
    keys = keys[order]
    weights = weights[order]
    new_group = np.ones(len(keys), dtype=bool)
    if len(keys) > 1:
        new_group[1:] = np.any(keys[1:] != keys[:-1], axis=1)
    group_id = np.cumsum(new_group) - 1
    merged_keys = keys[new_group]
    merged_w = np.zeros(group_id[-1] + 1 if len(keys) else 0)
    np.add.at(merged_w, group_id, weights)
    return merged_keys, merged_w


@dataclass(frozen=True)
class AtomicTorusMeasure:
    """Probability measure with atoms on grid cells (flat indices)."""

    cells: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cells", np.asarray(self.cells, dtype=int))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.cells.shape != self.weights.shape or self.cells.ndim != 1:
            raise ValueError("cells and weights must be matching 1-d arrays")
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(np.sum(self.weights)) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1, got {np.sum(self.weights)!r}")

    @staticmethod
    def from_atoms(cells, weights):
        keys, w = _canonical_atoms(np.asarray(cells, dtype=int)[:, None],
                                   np.asarray(weights, dtype=float))
        keep = w > 0.0
        return AtomicTorusMeasure(keys[keep, 0], w[keep])

    @staticmethod
    def uniform(n_cells):
        return AtomicTorusMeasure(np.arange(n_cells), np.full(n_cells, 1.0 / n_cells))

    @property
    def n_atoms(self):
        return len(self.cells)

    def dense(self, n_cells):
        w = np.zeros(n_cells)
        np.add.at(w, self.cells, self.weights)
        return w

    def positions(self, grid: TorusGrid):
        return grid.centers[self.cells]

    def integrate(self, cell_values):
        """Integral of a cell field against the measure."""
        return float(np.sum(np.asarray(cell_values, dtype=float)[self.cells] * self.weights))


@dataclass(frozen=True)
class DiscreteCurve:
    """Grid path: one cell index per time node, k = 0..n_t."""

    nodes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=int))
        if self.nodes.ndim != 1 or len(self.nodes) < 2:
            raise ValueError("a curve needs at least two time nodes")

    @property
    def n_steps(self):
        return len(self.nodes) - 1

    @property
    def start(self):
        return int(self.nodes[0])

    @property
    def end(self):
        return int(self.nodes[-1])

    def key(self):
        return tuple(int(v) for v in self.nodes)

    def positions(self, grid: TorusGrid):
        return grid.centers[self.nodes]

    def displacements(self, grid: TorusGrid):
        """Per-step minimal displacements, shape (n_t, dim)."""
        return grid.displacement_table[self.nodes[:-1], self.nodes[1:]]

    def velocities(self, grid: TorusGrid):
        return self.displacements(grid) / grid.dt

    def is_stencil_feasible(self, grid: TorusGrid, q_max):
        d = self.displacements(grid)
        speed = np.sqrt(np.sum(d * d, axis=1)) / grid.dt
        return bool(np.all(speed <= q_max * (1.0 + 1e-12)))


@dataclass(frozen=True)
class CurveMeasure:
    """Probability measure with atoms on discrete curves.

    Atoms are stored in lexicographic node order with duplicates merged,
    so equal measures have equal representations.
    """

    curves: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if len(self.curves) != len(self.weights):
            raise ValueError("curves and weights length mismatch")
        if len(self.curves) == 0:
            raise ValueError("curve measure needs at least one atom")
        lengths = {len(c.nodes) for c in self.curves}
        if len(lengths) != 1:
            raise ValueError("all curves must share the same number of time nodes")
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(np.sum(self.weights)) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1, got {np.sum(self.weights)!r}")

    @staticmethod
    def from_atoms(curves, weights):
        nodes = np.stack([c.nodes for c in curves])
        keys, w = _canonical_atoms(nodes, np.asarray(weights, dtype=float))
        keep = w > 0.0
        return CurveMeasure(tuple(DiscreteCurve(k) for k in keys[keep]), w[keep])

    @property
    def n_atoms(self):
        return len(self.curves)

    @property
    def n_steps(self):
        return self.curves[0].n_steps

    def node_matrix(self):
        return np.stack([c.nodes for c in self.curves])

    def slice_measure(self, k):
        """Pushforward at time node k: an atomic measure on cells."""
        cells = np.array([c.nodes[k] for c in self.curves])
        return AtomicTorusMeasure.from_atoms(cells, self.weights)

    def start_measure(self):
        return self.slice_measure(0)

    def end_measure(self):
        return self.slice_measure(self.n_steps)

    def evaluation_curve(self, n_cells):
        return EvaluationCurveTable.from_curve_measure(self, n_cells)


def mix_curve_measures(xi_a: CurveMeasure, xi_b: CurveMeasure, alpha,
                       drop_tol=WEIGHT_TOL):
    """(1 - alpha) xi_a + alpha xi_b with dedup and tiny-weight cleanup.

    Atoms falling below drop_tol are removed and the survivors of each
    start cell rescaled to that cell's pre-drop mass.  Cleaning up per
    start group keeps the start marginal of the mixture intact, which is
    the fiber constraint the fixed-point iteration lives on; a global
    renormalization would leak the dropped mass across start cells.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    curves = list(xi_a.curves) + list(xi_b.curves)
    weights = np.concatenate([(1.0 - alpha) * xi_a.weights, alpha * xi_b.weights])
    merged = CurveMeasure.from_atoms(curves, weights / np.sum(weights))
    keep = merged.weights >= drop_tol
    if not np.all(keep):
        starts = np.array([c.start for c in merged.curves])
        w = merged.weights.copy()
        for cell in np.unique(starts[~keep]):
            sel = starts == cell
            survivors = sel & keep
            if not np.any(survivors):
                # never drop a whole start group: keep its heaviest atom
                heaviest = np.argmax(np.where(sel, w, -1.0))
                keep[heaviest] = True
                survivors = sel & keep
            w[survivors] *= np.sum(w[sel]) / np.sum(w[survivors])
        merged = CurveMeasure(tuple(c for c, k in zip(merged.curves, keep) if k),
                              w[keep])
    return merged


def group_by_start(xi: CurveMeasure):
    """Split a curve measure by starting cell.

    Returns a list of (start_cell, mass, conditional CurveMeasure); mixing
    the conditionals back with their masses recovers xi.
    """
    starts = np.array([c.start for c in xi.curves])
    out = []
    for cell in np.unique(starts):
        sel = starts == cell
        mass = float(np.sum(xi.weights[sel]))
        cond = CurveMeasure(tuple(c for c, s in zip(xi.curves, sel) if s),
                            xi.weights[sel] / mass)
        out.append((int(cell), mass, cond))
    return out


@dataclass(frozen=True)
class EvaluationCurveTable:
    """Dense time-indexed cell weights: row k is the measure at t_k.

    Rows are probability vectors; the backward solver reads departure
    rows 0..n_t-1 and the final datum uses row n_t.
    """

    weights: np.ndarray  # (n_t + 1, n_cells)

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        sums = np.sum(self.weights, axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("every time slice must carry unit mass")

    @property
    def n_steps(self):
        return self.weights.shape[0] - 1

    @property
    def n_cells(self):
        return self.weights.shape[1]

    def slice_measure(self, k):
        w = self.weights[k]
        sel = w > 0.0
        return AtomicTorusMeasure(np.nonzero(sel)[0], w[sel])

    @staticmethod
    def from_curve_measure(xi: CurveMeasure, n_cells):
        table = np.zeros((xi.n_steps + 1, n_cells))
        nodes = xi.node_matrix()
        for k in range(xi.n_steps + 1):
            np.add.at(table[k], nodes[:, k], xi.weights)
        return EvaluationCurveTable(table)

    @staticmethod
    def stationary(mu: AtomicTorusMeasure, n_steps, n_cells):
        row = mu.dense(n_cells)
        return EvaluationCurveTable(np.tile(row, (n_steps + 1, 1)))


# ---------------------------------------------------------------------------
# exact transport


@dataclass(frozen=True)
class TransportPlan:
    """Optimal coupling between two atomic measures."""

    source_cells: np.ndarray
    target_cells: np.ndarray
    matrix: np.ndarray       # (n_source, n_target), nonnegative
    value: float

    def marginal_errors(self, w_source, w_target):
        row = np.max(np.abs(self.matrix.sum(axis=1) - w_source))
        col = np.max(np.abs(self.matrix.sum(axis=0) - w_target))
        return float(row), float(col)


def _solve_transport(w_a, w_b, cost):
    """Exact LP for the transport problem; returns (value, plan matrix)."""
    n_a, n_b = cost.shape
    row_marg = sparse.kron(sparse.eye(n_a), np.ones((1, n_b)))
    col_marg = sparse.kron(np.ones((1, n_a)), sparse.eye(n_b))
    # one marginal row is redundant; dropping it keeps the system full rank
    a_eq = sparse.vstack([row_marg, col_marg]).tocsr()[:-1]
    b_eq = np.concatenate([w_a, w_b])[:-1]
    res = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0.0, None),
        method="highs-ds",
        options={
            # 1e-10 is the tightest tolerance HiGHS accepts
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if not res.success:
        raise MFGTorusError(f"transport LP failed: {res.message}")
    plan = res.x.reshape(n_a, n_b)
    return float(res.fun), plan


def _check_cap(*measures):
    for m in measures:
        if m.n_atoms > DESK_SCALE_CAP:
            raise SizeCapError(
                f"{m.n_atoms} atoms exceed the desk-scale cap {DESK_SCALE_CAP}")


def wasserstein1(mu: AtomicTorusMeasure, nu: AtomicTorusMeasure, grid: TorusGrid):
    """Exact Wasserstein-1 distance with the periodic ground metric."""
    _check_cap(mu, nu)
    cost = grid.distance_table[np.ix_(mu.cells, nu.cells)]
    value, _ = _solve_transport(mu.weights, nu.weights, cost)
    return value


def curve_distance_matrix(xi: CurveMeasure, eta: CurveMeasure, grid: TorusGrid):
    """Pairwise uniform-in-time distances between curve atoms."""
    a = xi.node_matrix()
    b = eta.node_matrix()
    out = np.zeros((a.shape[0], b.shape[0]))
    for k in range(a.shape[1]):
        np.maximum(out, grid.distance_table[np.ix_(a[:, k], b[:, k])], out=out)
    return out


def wasserstein1_curves(xi: CurveMeasure, eta: CurveMeasure, grid: TorusGrid):
    """Exact Wasserstein-1 on curve space (uniform metric on paths)."""
    _check_cap(xi, eta)
    if xi.n_steps != eta.n_steps:
        raise ValueError("curve measures live on different time grids")
    cost = curve_distance_matrix(xi, eta, grid)
    value, _ = _solve_transport(xi.weights, eta.weights, cost)
    return value


def transport_cost(mu: AtomicTorusMeasure, nu: AtomicTorusMeasure, cost_entries):
    """Minimal transport cost between endpoint marginals.

    ``cost_entries`` is a dense (n_cells, n_cells) table, typically the
    pinned-endpoint cost matrix; entries at or above LARGE / 2 mean the
    pair is unreachable and make the problem infeasible.
    """
    _check_cap(mu, nu)
    cost = np.asarray(cost_entries, dtype=float)[np.ix_(mu.cells, nu.cells)]
    if np.any(cost >= LARGE / 2.0):
        raise InfeasibleCostError("cost matrix is not finite on the support product")
    value, plan = _solve_transport(mu.weights, nu.weights, cost)
    return value, TransportPlan(
        source_cells=mu.cells.copy(),
        target_cells=nu.cells.copy(),
        matrix=plan,
        value=value,
    )
