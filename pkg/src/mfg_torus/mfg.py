"""Fixed points of the best-response map on measures over curves.

One application of the map freezes the coupling along a candidate
measure, solves the value field backward for the induced final cost,
and pushes the initial distribution along extracted optimal curves.
Fixed points are sought by damped iteration

    xi  <-  (1 - alpha) xi + alpha T(xi),

with the residual measured as exact Wasserstein-1 on curve space between
an iterate and its image.  Non-convergence is reported as a status, not
an error: oscillation of the undamped map is data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field_ce import (abs_continuity_profile, continuity_residual,
                       default_test_family, field_along_measure,
                       velocity_lookup)
from .hj import solve_backward
from .measures import (AtomicTorusMeasure, CurveMeasure, DiscreteCurve,
                       mix_curve_measures, transport_cost, wasserstein1_curves)
from .models import ConstantsTable, ModelTables, default_velocity_cap
from .paths import cost_matrix, extract_optimal_curve, optimality_certificate

CONVERGED = "converged"
NO_CONVERGENCE = "no-convergence"


def stationary_seed(mu0: AtomicTorusMeasure, n_t):
    """Measure on constant curves sitting at the atoms of mu0."""
    curves = [DiscreteCurve(np.full(n_t + 1, c, dtype=int)) for c in mu0.cells]
    return CurveMeasure.from_atoms(curves, mu0.weights)


def starts_match(xi: CurveMeasure, mu0: AtomicTorusMeasure, tol=1e-12):
    """xi(0) equals mu0 atom-for-atom (canonical atoms, weights within tol)."""
    start = xi.start_measure()
    ref = AtomicTorusMeasure.from_atoms(mu0.cells, mu0.weights)
    return (start.cells.shape == ref.cells.shape
            and bool(np.all(start.cells == ref.cells))
            and bool(np.max(np.abs(start.weights - ref.weights)) <= tol))


def derive_velocity_cap(tables: ModelTables, xi: CurveMeasure):
    """Velocity cap from the a priori bounds of the coupling frozen at xi."""
    grid = tables.grid
    eval_curve = xi.evaluation_curve(grid.n_cells)
    g = tables.final_datum_table(eval_curve.weights[grid.n_t])
    constants = ConstantsTable.from_tables(tables, eval_curve.weights[:grid.n_t], g)
    return default_velocity_cap(grid, constants, tables.model.r)


@dataclass(frozen=True)
class BestResponse:
    """T(xi): the optimal measure, the value field behind it, its certificate."""

    measure: CurveMeasure
    value_field: object
    certificate: object


def apply_T(tables: ModelTables, xi: CurveMeasure, mu0: AtomicTorusMeasure,
            q_max=None):
    """One application of the best-response map at frozen coupling xi.

    Returns the measure carrying mu0's weights along the optimal curves
    extracted from the backward solve; its certificate gap is zero up to
    roundoff by construction.
    """
    grid = tables.grid
    if not starts_match(xi, mu0):
        raise ValueError("xi(0) must equal mu0 atom-for-atom")
    eval_curve = xi.evaluation_curve(grid.n_cells)
    g = tables.final_datum_table(eval_curve.weights[grid.n_t])
    vf = solve_backward(tables, eval_curve, g, q_max)
    mu = AtomicTorusMeasure.from_atoms(mu0.cells, mu0.weights)
    curves = [extract_optimal_curve(vf, c) for c in mu.cells]
    out = CurveMeasure.from_atoms(curves, mu.weights)
    cert = optimality_certificate(out, vf)
    return BestResponse(measure=out, value_field=vf, certificate=cert)


@dataclass(frozen=True)
class FixedPointState:
    """Snapshot after one damped step."""

    iterate: int
    xi: CurveMeasure
    residual: float                 # W1 on curves between xi and T(xi)
    certificate_gap_image: float    # gap of T(xi) under its own solve, ~0
    certificate_gap_self: float     # gap of xi under the solve it induces
    alpha: float


@dataclass(frozen=True)
class FixedPointRun:
    states: list
    final: CurveMeasure
    status: str
    alpha: float
    tol: float
    q_max: float

    @property
    def residual(self):
        return self.states[-1].residual if self.states else None

    @property
    def iterations(self):
        return len(self.states)


def iterate_fixed_point(tables: ModelTables, mu0: AtomicTorusMeasure, alpha,
                        tol, max_iter, seed_xi=None, q_max=None):
    """Damped iteration of the best-response map from a seed measure.

    The velocity cap is derived once from the seed's coupling and shared
    by every solve of the run, so all iterates live on one stencil.
    Stops at the first iterate whose residual falls below tol; exhausting
    max_iter yields status "no-convergence" with the history intact.
    """
    grid = tables.grid
    if seed_xi is None:
        seed_xi = stationary_seed(mu0, grid.n_t)
    if not starts_match(seed_xi, mu0):
        raise ValueError("seed measure must start at mu0")
    if q_max is None:
        q_max = derive_velocity_cap(tables, seed_xi)
    xi = seed_xi
    states = []
    status = NO_CONVERGENCE
    if max_iter > 0:
        response = apply_T(tables, xi, mu0, q_max)
        for it in range(1, max_iter + 1):
            xi = mix_curve_measures(xi, response.measure, alpha)
            response = apply_T(tables, xi, mu0, q_max)
            residual = wasserstein1_curves(xi, response.measure, grid)
            gap_self = optimality_certificate(xi, response.value_field).gap
            states.append(FixedPointState(
                iterate=it,
                xi=xi,
                residual=float(residual),
                certificate_gap_image=float(response.certificate.gap),
                certificate_gap_self=float(gap_self),
                alpha=float(alpha),
            ))
            if residual <= tol:
                status = CONVERGED
                break
    return FixedPointRun(
        states=states,
        final=xi,
        status=status,
        alpha=float(alpha),
        tol=float(tol),
        q_max=float(q_max),
    )


@dataclass(frozen=True)
class EquilibriumReport:
    """Certified numbers for one candidate equilibrium measure."""

    status: str
    iterations: int
    alpha: float
    tol: float
    q_max: float
    residual: float
    certificate_gap: float
    action_integral: float
    transport_value: float
    dual_difference: float
    chain_slack_action_transport: float   # action - transport, >= -1e-9
    chain_slack_transport_dual: float     # transport - dual,  >= -1e-9
    continuity_residuals: dict
    continuity_max_abs: float
    collision_gap: float
    abs_continuity_norm: float            # None when r <= 1 + eps0
    atom_count: int
    value_min: float
    value_max: float
    residual_history: list
    gap_history: list

    def to_dict(self):
        return {
            "status": self.status,
            "iterations": self.iterations,
            "alpha": self.alpha,
            "tol": self.tol,
            "q_max": self.q_max,
            "residual": self.residual,
            "certificate_gap": self.certificate_gap,
            "action_integral": self.action_integral,
            "transport_value": self.transport_value,
            "dual_difference": self.dual_difference,
            "chain_slack_action_transport": self.chain_slack_action_transport,
            "chain_slack_transport_dual": self.chain_slack_transport_dual,
            "continuity_residuals": dict(self.continuity_residuals),
            "continuity_max_abs": self.continuity_max_abs,
            "collision_gap": self.collision_gap,
            "abs_continuity_norm": self.abs_continuity_norm,
            "atom_count": self.atom_count,
            "value_min": self.value_min,
            "value_max": self.value_max,
            "residual_history": list(self.residual_history),
            "gap_history": list(self.gap_history),
        }


def equilibrium_value_field(tables: ModelTables, xi: CurveMeasure, q_max):
    """Value field at the coupling frozen to the measure's evaluation curve."""
    grid = tables.grid
    eval_curve = xi.evaluation_curve(grid.n_cells)
    g = tables.final_datum_table(eval_curve.weights[grid.n_t])
    return solve_backward(tables, eval_curve, g, q_max)


def certificate_numbers(tables: ModelTables, xi: CurveMeasure, q_max, threads=1):
    """Every certificate quantity derivable from a measure alone.

    This is the part of an equilibrium report that re-verification can
    recompute from exported artifacts, without the iteration history.
    """
    grid = tables.grid
    eval_curve = xi.evaluation_curve(grid.n_cells)
    vf = equilibrium_value_field(tables, xi, q_max)
    cert = optimality_certificate(xi, vf)

    endpoint_costs = cost_matrix(tables, eval_curve, q_max,
                                 threads=threads, require_reachable=False)
    transport_value, _ = transport_cost(xi.start_measure(), xi.end_measure(),
                                        endpoint_costs.entries)
    dual = cert.initial_term - cert.final_term

    samples = field_along_measure(xi, vf, strict=False)
    _, collision_gap = velocity_lookup(samples)
    residuals = continuity_residual(xi, samples, default_test_family(grid.dim), grid)
    max_abs = float(np.max(np.abs(np.array(list(residuals.values())))))

    model = tables.model
    abs_norm = None
    if model.r > 1.0 + model.eps0:
        abs_norm = abs_continuity_profile(xi, grid, model.eps0).norm

    return {
        "certificate_gap": float(cert.gap),
        "action_integral": float(cert.action_integral),
        "transport_value": float(transport_value),
        "dual_difference": float(dual),
        "chain_slack_action_transport": float(cert.action_integral - transport_value),
        "chain_slack_transport_dual": float(transport_value - dual),
        "continuity_residuals": {k: float(v) for k, v in residuals.items()},
        "continuity_max_abs": max_abs,
        "collision_gap": float(collision_gap),
        "abs_continuity_norm": abs_norm,
        "atom_count": xi.n_atoms,
        "value_min": float(np.min(vf.values)),
        "value_max": float(np.max(vf.values)),
    }


def certify_equilibrium(run: FixedPointRun, tables: ModelTables, threads=1):
    """Recompute every certificate for the final measure of a run.

    Solves the value field at the frozen equilibrium coupling, audits the
    optimality gap, the action / endpoint-transport / duality chain, the
    weak continuity residuals over the default test family, and (when the
    kinetic growth allows) the integral speed norm of the evaluation curve.
    """
    numbers = certificate_numbers(tables, run.final, run.q_max, threads=threads)
    return EquilibriumReport(
        status=run.status,
        iterations=run.iterations,
        alpha=run.alpha,
        tol=run.tol,
        q_max=run.q_max,
        residual=run.residual,
        residual_history=[s.residual for s in run.states],
        gap_history=[s.certificate_gap_self for s in run.states],
        **numbers,
    )
