"""Backward dynamic programming for the value function.

The value field realizes the variational formula

    v(x, t_k) = min over grid paths from (x, t_k) of
                sum_m dt * L(zeta_m, t_m, (zeta_{m+1} - zeta_m) / dt) + g(zeta_T)

by one backward sweep over time slices.  Moves are cell-to-cell with the
minimal periodic displacement, capped at speed q_max; the running cost is
evaluated at the departure point and slice (rectangle rule).  Ties in the
one-step minimization resolve to the smallest flat cell index, which makes
values, successors and every extracted curve deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyStencilError, NonFiniteValueError
from .measures import EvaluationCurveTable
from .models import ConstantsTable, ModelTables, default_velocity_cap
from .torus import TorusGrid


def kinetic_cost_matrix(tables: ModelTables, q_max):
    """One-step kinetic costs dt * |delta/dt|^r / r, +inf outside the cap.

    Entry [i, j] is the kinetic part of moving from cell i to cell j in
    one time step along the minimal displacement.
    """
    grid = tables.grid
    speed = grid.distance_table / grid.dt
    inside = speed <= q_max
    kin = np.full_like(speed, np.inf)
    with np.errstate(over="raise"):
        try:
            kin[inside] = grid.dt * speed[inside]**tables.model.r / tables.model.r
        except FloatingPointError as exc:
            raise NonFiniteValueError(
                "kinetic cost overflowed inside the stencil") from exc
    return kin


@dataclass(frozen=True)
class ValueField:
    """Backward solve output: values, successor table, and its inputs."""

    grid: TorusGrid
    tables: ModelTables
    eval_curve: EvaluationCurveTable
    final_datum: np.ndarray      # (n_cells,)
    q_max: float
    values: np.ndarray           # (n_cells, n_t + 1)
    successor: np.ndarray        # (n_cells, n_t) int

    @property
    def model(self):
        return self.tables.model

    def value_at(self, cell, k):
        return float(self.values[cell, k])

    def step_cost_table(self, k):
        """dt * L(x_i, t_k, (x_j - x_i)/dt) for all cell pairs at slice k."""
        kin = kinetic_cost_matrix(self.tables, self.q_max)
        pot = self.tables.potential_table(self.eval_curve.weights[k])
        return kin - self.grid.dt * pot[:, None]


def solve_backward(tables: ModelTables, eval_curve: EvaluationCurveTable,
                   final_datum, q_max=None):
    """Backward sweep for the value field.

    ``eval_curve`` supplies the measure argument of L at departure slices
    0..n_t-1; ``final_datum`` is a dense table over cells.  When q_max is
    omitted it is derived from the a priori action bound of the data.
    """
    grid = tables.grid
    n, n_t = grid.n_cells, grid.n_t
    final_datum = np.asarray(final_datum, dtype=float)
    if final_datum.shape != (n,):
        raise ValueError(f"final datum must have shape ({n},)")
    if not np.all(np.isfinite(final_datum)):
        raise NonFiniteValueError("final datum contains non-finite values")
    if eval_curve.n_steps != n_t or eval_curve.n_cells != n:
        raise ValueError("evaluation curve does not match the grid")

    pot = np.stack([tables.potential_table(eval_curve.weights[k]) for k in range(n_t)])
    if not np.all(np.isfinite(pot)):
        raise NonFiniteValueError("model potential is not finite on the grid")

    if q_max is None:
        constants = ConstantsTable.from_tables(tables, eval_curve.weights[:n_t], final_datum)
        q_max = default_velocity_cap(grid, constants, tables.model.r)
    if q_max * grid.dt < grid.dx:
        raise EmptyStencilError(
            f"q_max * dt = {q_max * grid.dt:g} < dx = {grid.dx:g}: no cell move fits")

    kin = kinetic_cost_matrix(tables, q_max)
    values = np.empty((n, n_t + 1))
    successor = np.empty((n, n_t), dtype=int)
    values[:, n_t] = final_datum
    rows = np.arange(n)
    for k in range(n_t - 1, -1, -1):
        cand = kin + values[:, k + 1][None, :]
        j = np.argmin(cand, axis=1)
        successor[:, k] = j
        values[:, k] = cand[rows, j] - grid.dt * pot[k]
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("backward sweep produced non-finite values")
    return ValueField(
        grid=grid,
        tables=tables,
        eval_curve=eval_curve,
        final_datum=final_datum,
        q_max=float(q_max),
        values=values,
        successor=successor,
    )


@dataclass(frozen=True)
class StabilityReport:
    datum_gap: float
    value_gap: float

    @property
    def nonexpansive(self):
        return self.value_gap <= self.datum_gap + 1e-12


def stability_check(tables: ModelTables, eval_curve, g_a, g_b, q_max=None):
    """Solve with two final data and compare sup gaps.

    The one-step minimum is non-expansive in the final datum, so the value
    gap never exceeds the datum gap (up to roundoff).
    """
    if q_max is None:
        # share one cap so both solves use the same stencil
        g_all = np.concatenate([np.asarray(g_a, float), np.asarray(g_b, float)])
        constants = ConstantsTable.from_tables(
            tables, eval_curve.weights[: tables.grid.n_t], g_all)
        q_max = default_velocity_cap(tables.grid, constants, tables.model.r)
    va = solve_backward(tables, eval_curve, g_a, q_max)
    vb = solve_backward(tables, eval_curve, g_b, q_max)
    return StabilityReport(
        datum_gap=float(np.max(np.abs(np.asarray(g_a, float) - np.asarray(g_b, float)))),
        value_gap=float(np.max(np.abs(va.values - vb.values))),
    )


def dpp_check(vf: ValueField, curve_nodes):
    """Max residual of the one-step programming identity along a curve.

    For an extracted optimal curve the residual is roundoff; a positive
    residual on some competitor step witnesses strict suboptimality.
    """
    nodes = np.asarray(curve_nodes, dtype=int)
    kin = kinetic_cost_matrix(vf.tables, vf.q_max)
    worst = 0.0
    for k in range(len(nodes) - 1):
        pot = vf.tables.potential_table(vf.eval_curve.weights[k])
        step = kin[nodes[k], nodes[k + 1]] - vf.grid.dt * pot[nodes[k]]
        res = vf.values[nodes[k], k] - (step + vf.values[nodes[k + 1], k + 1])
        worst = max(worst, abs(float(res)))
    return worst
