"""Optimal curves, actions, occupation histograms, endpoint cost matrices.

A curve is optimal for a final datum g when its action plus g at the end
equals the value at its start; such curves are read off the successor
table of a backward solve.  The endpoint cost S(x, y) is the minimal
action over paths pinned at both ends, computed by one batched backward
sweep with final datum 0 at y and LARGE elsewhere.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import EmptyStencilError, UnreachableError
from .hj import ValueField, kinetic_cost_matrix
from .measures import LARGE, CurveMeasure, DiscreteCurve, EvaluationCurveTable
from .models import ModelTables


def extract_optimal_curve(vf: ValueField, start_cell):
    """Follow successor pointers from a start cell at time 0."""
    n_t = vf.grid.n_t
    nodes = np.empty(n_t + 1, dtype=int)
    nodes[0] = int(start_cell)
    for k in range(n_t):
        nodes[k + 1] = vf.successor[nodes[k], k]
    return DiscreteCurve(nodes)


def potential_rows(tables: ModelTables, eval_curve: EvaluationCurveTable):
    """f + c_F (kappa * mu_k) on cells for every departure slice k < n_t."""
    return np.stack([tables.potential_table(eval_curve.weights[k])
                     for k in range(tables.grid.n_t)])


def action_of(curve: DiscreteCurve, tables: ModelTables,
              eval_curve: EvaluationCurveTable, pot_rows=None):
    """Rectangle-rule action: sum_k dt * L(zeta_k, t_k, velocity_k)."""
    grid = tables.grid
    if curve.n_steps != grid.n_t:
        raise ValueError("curve does not match the grid's time steps")
    if pot_rows is None:
        pot_rows = potential_rows(tables, eval_curve)
    disp = curve.displacements(grid)
    speed = np.sqrt(np.sum(disp * disp, axis=1)) / grid.dt
    kin = grid.dt * speed**tables.model.r / tables.model.r
    total = 0.0
    for k in range(grid.n_t):
        total += float(kin[k] - grid.dt * pot_rows[k, curve.nodes[k]])
    return total


def actions_of_measure(xi: CurveMeasure, tables: ModelTables,
                       eval_curve: EvaluationCurveTable, pot_rows=None):
    """Actions of every atom of a curve measure, vectorized."""
    grid = tables.grid
    if xi.n_steps != grid.n_t:
        raise ValueError("measure does not match the grid's time steps")
    if pot_rows is None:
        pot_rows = potential_rows(tables, eval_curve)
    nodes = xi.node_matrix()
    disp = grid.displacement_table[nodes[:, :-1], nodes[:, 1:]]
    speed = np.sqrt(np.sum(disp * disp, axis=2)) / grid.dt
    kin = grid.dt * speed**tables.model.r / tables.model.r
    pot = pot_rows[np.arange(grid.n_t)[None, :], nodes[:, :-1]]
    return np.sum(kin - grid.dt * pot, axis=1)


@dataclass(frozen=True)
class OccupationHistogram:
    """Space-time occupation of a curve: mass 1/n_t at (nodes[k], k), k < n_t."""

    table: np.ndarray  # (n_cells, n_t)

    @property
    def total_mass(self):
        return float(np.sum(self.table))

    def time_marginal(self):
        return np.sum(self.table, axis=0)


def occupation_histogram(curve: DiscreteCurve, n_cells):
    n_t = curve.n_steps
    table = np.zeros((n_cells, n_t))
    table[curve.nodes[:-1], np.arange(n_t)] = 1.0 / n_t
    return OccupationHistogram(table)


# ---------------------------------------------------------------------------
# pinned-endpoint cost matrix


@dataclass(frozen=True)
class CostMatrix:
    """Endpoint costs S[x, y] for the fixed time window [0, T].

    Entries at or above LARGE / 2 mean no stencil-feasible path connects
    the pair within n_t steps.
    """

    entries: np.ndarray  # (n_cells, n_cells)
    q_max: float

    def finite_mask(self):
        return self.entries < LARGE / 2.0

    def all_finite(self):
        return bool(np.all(self.finite_mask()))


def _minplus_inplace(kin, v, out, threads):
    """out[i, y] = min_j kin[i, j] + v[j, y], chunked over columns."""
    n, m = v.shape
    chunk = max(1, int(2**22 // max(1, n * n)))
    slices = [slice(s, min(s + chunk, m)) for s in range(0, m, chunk)]

    def work(sl):
        out[:, sl] = np.min(kin[:, :, None] + v[None, :, sl], axis=1)

    if threads > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, slices))
    else:
        for sl in slices:
            work(sl)


def cost_matrix(tables: ModelTables, eval_curve: EvaluationCurveTable, q_max,
                threads=1, require_reachable=True):
    """All-pairs pinned-endpoint costs by one batched backward sweep.

    Column y is the value at time 0 of the solve with final datum 0 at y
    and LARGE elsewhere; columns are independent, so they evolve together
    as a matrix min-plus recursion.
    """
    grid = tables.grid
    if q_max * grid.dt < grid.dx:
        raise EmptyStencilError(
            f"q_max * dt = {q_max * grid.dt:g} < dx = {grid.dx:g}: no cell move fits")
    n, n_t = grid.n_cells, grid.n_t
    kin = kinetic_cost_matrix(tables, q_max)
    v = np.full((n, n), LARGE)
    np.fill_diagonal(v, 0.0)
    buf = np.empty_like(v)
    for k in range(n_t - 1, -1, -1):
        pot = tables.potential_table(eval_curve.weights[k])
        _minplus_inplace(kin, v, buf, threads)
        v, buf = buf, v
        v -= grid.dt * pot[:, None]
    out = CostMatrix(entries=v, q_max=float(q_max))
    if require_reachable and not out.all_finite():
        bad = int(np.sum(~out.finite_mask()))
        raise UnreachableError(
            f"{bad} endpoint pairs unreachable within {n_t} steps at q_max={q_max:g}")
    return out


def pinned_window_cost(tables: ModelTables, eval_curve, q_max, k_from, k_to,
                       start_cell, end_cell):
    """Minimal action between (start, k_from) and (end, k_to).

    Small backward solve on the time window; LARGE when unreachable.
    Used to audit subpath optimality of extracted curves.
    """
    grid = tables.grid
    if not 0 <= k_from < k_to <= grid.n_t:
        raise ValueError("need 0 <= k_from < k_to <= n_t")
    kin = kinetic_cost_matrix(tables, q_max)
    v = np.full(grid.n_cells, LARGE)
    v[int(end_cell)] = 0.0
    for k in range(k_to - 1, k_from - 1, -1):
        pot = tables.potential_table(eval_curve.weights[k])
        v = np.min(kin + v[None, :], axis=1) - grid.dt * pot
    return float(v[int(start_cell)])


# ---------------------------------------------------------------------------
# optimality certificate


@dataclass(frozen=True)
class CertificateReport:
    """Duality-gap audit of a curve measure against a value field.

    gap = integral of the action minus (<xi(0), v(., 0)> - <xi(T), g>);
    it is nonnegative up to roundoff and vanishes exactly on measures
    supported on optimal curves.
    """

    action_integral: float
    initial_term: float
    final_term: float
    gap: float
    per_atom_gaps: np.ndarray

    def is_optimal(self, tol=1e-9):
        return bool(self.gap <= tol)


def optimality_certificate(xi: CurveMeasure, vf: ValueField):
    """Per-atom and aggregate optimality gaps of xi under vf's data."""
    if xi.n_steps != vf.grid.n_t:
        raise ValueError("measure and value field use different time grids")
    actions = actions_of_measure(xi, vf.tables, vf.eval_curve)
    starts = np.array([c.start for c in xi.curves])
    ends = np.array([c.end for c in xi.curves])
    per_atom = actions + vf.final_datum[ends] - vf.values[starts, 0]
    initial = float(np.sum(xi.weights * vf.values[starts, 0]))
    final = float(np.sum(xi.weights * vf.final_datum[ends]))
    action_integral = float(np.sum(xi.weights * actions))
    return CertificateReport(
        action_integral=action_integral,
        initial_term=initial,
        final_term=final,
        gap=action_integral - (initial - final),
        per_atom_gaps=per_atom,
    )
