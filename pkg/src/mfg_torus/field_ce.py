"""Velocity field on optimal supports and continuity-equation checks.

Measures supported on optimal curves carry a well-defined velocity at
every occupied space-time cell: the per-step displacement over dt.  These
samples realize the generalized field driving the continuity equation.
Three audits live here:

* directional difference quotients of the value field against -L, the
  defining inequality of the field (max over a set of time offsets is the
  discrete stand-in for the limsup quotient);
* comparison with the Hamiltonian gradient at -Dv away from kinks of v;
* the weak-form continuity residual against a family of smooth test
  functions, plus the integral speed profile controlling absolute
  continuity of the evaluation curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoverageGapError, NotOptimalSupportError
from .hj import ValueField
from .measures import CurveMeasure, wasserstein1
from .paths import actions_of_measure
from .torus import TorusGrid, wrap_points

CURVE_VELOCITY = "curve-velocity"
HP_OF_GRADIENT = "hp-of-gradient"

# default pass tolerance for directional tests, in units of dx + dt
DIRECTIONAL_TOL_FACTOR = 10.0

# default kink threshold for one-sided gradient disagreement, in units of dx
KINK_FACTOR = 10.0


@dataclass(frozen=True)
class FieldSample:
    """One velocity sample of the field at an occupied (cell, time) pair."""

    cell: int
    time_index: int
    velocity: np.ndarray
    source: str


def field_along_measure(xi: CurveMeasure, vf: ValueField, atol=1e-9, strict=True):
    """Velocity samples of a measure supported on optimal curves.

    Each atom contributes one sample per departure slice k < n_t with the
    curve's own velocity.  With ``strict`` the per-atom optimality identity
    action + g(end) = v(start, 0) is enforced within ``atol``.
    """
    grid = vf.grid
    actions = actions_of_measure(xi, vf.tables, vf.eval_curve)
    starts = np.array([c.start for c in xi.curves])
    ends = np.array([c.end for c in xi.curves])
    gaps = actions + vf.final_datum[ends] - vf.values[starts, 0]
    if strict and np.any(np.abs(gaps) > atol):
        worst = float(np.max(np.abs(gaps)))
        raise NotOptimalSupportError(
            f"measure is not supported on optimal curves (worst gap {worst:g})")
    samples = []
    for curve in xi.curves:
        vel = curve.velocities(grid)
        for k in range(grid.n_t):
            samples.append(FieldSample(
                cell=int(curve.nodes[k]),
                time_index=k,
                velocity=vel[k],
                source=CURVE_VELOCITY,
            ))
    return samples


def velocity_lookup(samples):
    """Map (cell, k) -> velocity, keeping the first sample on collisions.

    Also reports the largest velocity disagreement among samples sharing
    a space-time cell (single-valuedness surrogate: on optimal supports
    collisions agree up to the velocity quantum).
    """
    lookup = {}
    collision_gap = 0.0
    for s in samples:
        key = (s.cell, s.time_index)
        if key in lookup:
            gap = float(np.sqrt(np.sum((lookup[key] - s.velocity) ** 2)))
            collision_gap = max(collision_gap, gap)
        else:
            lookup[key] = s.velocity
    return lookup, collision_gap


# ---------------------------------------------------------------------------
# directional derivatives


@dataclass(frozen=True)
class DirectionalDerivativeReport:
    cell: int
    time_index: int
    direction: np.ndarray
    quotients: np.ndarray     # one per usable offset
    offsets: np.ndarray       # signed multiples of dt actually used
    g_estimate: float         # max quotient, the limsup surrogate
    lagrangian_value: float
    tolerance: float

    @property
    def passes(self):
        return bool(abs(self.g_estimate + self.lagrangian_value) <= self.tolerance)

    @property
    def one_sided_ok(self):
        """Every quotient sits above -L - tol (lower-bound direction)."""
        return bool(np.all(self.quotients >= -self.lagrangian_value - self.tolerance))


def directional_derivative_test(vf: ValueField, cell, k, q, h_steps=(1, 2, 4),
                                tol_dd=None):
    """Difference quotients of v along the space-time direction (q, 1).

    Quotients (v(x + h q, t_k + h) - v(x, t_k)) / h are taken at signed
    multiples h of dt that stay inside the horizon; space is evaluated by
    periodic multilinear interpolation.  The max quotient estimates the
    upper directional derivative G; the sample passes when it matches
    -L(x, t_k, q) within tolerance.
    """
    grid = vf.grid
    if not 0 < k < grid.n_t:
        raise ValueError("directional probes need an interior time index")
    if tol_dd is None:
        tol_dd = DIRECTIONAL_TOL_FACTOR * (grid.dx + grid.dt)
    q = np.asarray(q, dtype=float).reshape(grid.dim)
    x = grid.centers[int(cell)]
    base = vf.values[int(cell), k]
    offsets = []
    quotients = []
    for m in h_steps:
        for sign in (1, -1):
            step = sign * int(m)
            if not 0 <= k + step <= grid.n_t:
                continue
            h = step * grid.dt
            point = wrap_points(x + h * q)
            val = grid.interpolate(vf.values[:, k + step], point)
            offsets.append(h)
            quotients.append((val - base) / h)
    mu_k = vf.eval_curve.slice_measure(k)
    l_val = float(vf.model.lagrangian(x[None, :], mu_k, q[None, :], grid)[0])
    return DirectionalDerivativeReport(
        cell=int(cell),
        time_index=int(k),
        direction=q,
        quotients=np.asarray(quotients),
        offsets=np.asarray(offsets),
        g_estimate=float(np.max(quotients)),
        lagrangian_value=l_val,
        tolerance=float(tol_dd),
    )


# ---------------------------------------------------------------------------
# comparison with the Hamiltonian gradient


@dataclass(frozen=True)
class HPSampleRecord:
    cell: int
    time_index: int
    curve_velocity: np.ndarray
    hp_velocity: np.ndarray
    gap: float
    kink: bool


@dataclass(frozen=True)
class HPComparisonReport:
    records: list
    median_gap: float        # over non-kink samples
    max_gap: float           # over non-kink samples
    kink_fraction: float

    def non_kink_gaps(self):
        return np.array([r.gap for r in self.records if not r.kink])


def compare_with_hp(vf: ValueField, samples, kink_threshold=None):
    """Curve velocities against H_p(x, t, -Dv) with central-difference Dv.

    Cells where one-sided space differences of v disagree by more than
    ``kink_threshold`` (default 10 dx) are flagged as kinks and excluded
    from the summary statistics: there Dv is not trustworthy.
    """
    grid = vf.grid
    if kink_threshold is None:
        kink_threshold = KINK_FACTOR * grid.dx
    grad_by_k = {}
    kink_by_k = {}
    records = []
    for s in samples:
        k = s.time_index
        if k not in grad_by_k:
            slice_vals = vf.values[:, k]
            grad_by_k[k] = grid.central_gradient(slice_vals)
            kink = np.zeros(grid.n_cells, dtype=bool)
            for axis in range(grid.dim):
                fwd, bwd = grid.one_sided_differences(slice_vals, axis)
                kink |= np.abs(fwd - bwd) > kink_threshold
            kink_by_k[k] = kink
        dv = grad_by_k[k][s.cell]
        hp = vf.model.hamiltonian_gradient((-dv)[None, :])[0]
        gap = float(np.sqrt(np.sum((s.velocity - hp) ** 2)))
        records.append(HPSampleRecord(
            cell=s.cell,
            time_index=k,
            curve_velocity=s.velocity,
            hp_velocity=hp,
            gap=gap,
            kink=bool(kink_by_k[k][s.cell]),
        ))
    good = np.array([r.gap for r in records if not r.kink])
    return HPComparisonReport(
        records=records,
        median_gap=float(np.median(good)) if len(good) else float("nan"),
        max_gap=float(np.max(good)) if len(good) else float("nan"),
        kink_fraction=float(np.mean([r.kink for r in records])) if records else 0.0,
    )


# ---------------------------------------------------------------------------
# test functions and the weak continuity residual


@dataclass(frozen=True)
class TestFunction:
    """Smooth test function phi(x, t) with closed-form derivatives."""

    name: str
    space_kind: str   # "one" | "sin" | "cos"
    space_axis: int
    time_kind: str    # "one" | "t" | "t_sq_half"

    def _space(self, x):
        x = np.atleast_2d(x)
        if self.space_kind == "one":
            return np.ones(x.shape[0])
        arg = 2.0 * np.pi * x[:, self.space_axis]
        return np.sin(arg) if self.space_kind == "sin" else np.cos(arg)

    def _space_grad(self, x):
        x = np.atleast_2d(x)
        out = np.zeros_like(x)
        if self.space_kind == "one":
            return out
        arg = 2.0 * np.pi * x[:, self.space_axis]
        d = np.cos(arg) if self.space_kind == "sin" else -np.sin(arg)
        out[:, self.space_axis] = 2.0 * np.pi * d
        return out

    def _time(self, t):
        if self.time_kind == "one":
            return 1.0
        if self.time_kind == "t":
            return t
        return 0.5 * t * t

    def _time_derivative(self, t):
        if self.time_kind == "one":
            return 0.0
        if self.time_kind == "t":
            return 1.0
        return t

    def value(self, x, t):
        return self._space(x) * self._time(t)

    def time_derivative(self, x, t):
        return self._space(x) * self._time_derivative(t)

    def gradient(self, x, t):
        return self._space_grad(x) * self._time(t)


def default_test_family(dim):
    """Tensor products of {1, sin, cos per axis} with {1, t, t^2/2}."""
    space = [("one", 0)]
    for axis in range(dim):
        space.append(("sin", axis))
        space.append(("cos", axis))
    time = ["one", "t", "t_sq_half"]
    family = []
    for sk, ax in space:
        for tk in time:
            sname = "1" if sk == "one" else f"{sk}(2pi x{ax})"
            tname = {"one": "1", "t": "t", "t_sq_half": "t^2/2"}[tk]
            family.append(TestFunction(
                name=f"{sname}*{tname}", space_kind=sk, space_axis=ax, time_kind=tk))
    return family


def continuity_residual(xi: CurveMeasure, samples, test_functions, grid: TorusGrid):
    """Weak-form residual of the continuity equation per test function.

    residual(phi) = sum_k dt <xi(t_k), phi_t + Dphi . W>  -  (<xi(T), phi(., T)> - <xi(0), phi(., 0)>)

    Velocities come from the sample set; every occupied (cell, k) with
    k < n_t must be covered or the check refuses to run.
    """
    lookup, _ = velocity_lookup(samples)
    nodes = xi.node_matrix()
    n_t = xi.n_steps
    vel = np.zeros((xi.n_atoms, n_t, grid.dim))
    for a in range(xi.n_atoms):
        for k in range(n_t):
            key = (int(nodes[a, k]), k)
            if key not in lookup:
                raise CoverageGapError(f"no velocity sample at cell {key[0]}, slice {k}")
            vel[a, k] = lookup[key]
    weights = xi.weights
    out = {}
    for phi in test_functions:
        lhs = 0.0
        for k in range(n_t):
            x = grid.centers[nodes[:, k]]
            t = grid.times[k]
            integrand = phi.time_derivative(x, t) + np.sum(phi.gradient(x, t) * vel[:, k], axis=1)
            lhs += grid.dt * float(np.sum(weights * integrand))
        x_end = grid.centers[nodes[:, n_t]]
        x_start = grid.centers[nodes[:, 0]]
        rhs = float(np.sum(weights * phi.value(x_end, grid.times[n_t]))) \
            - float(np.sum(weights * phi.value(x_start, 0.0)))
        out[phi.name] = lhs - rhs
    return out


# ---------------------------------------------------------------------------
# absolute continuity of the evaluation curve


@dataclass(frozen=True)
class AbsContinuityProfile:
    """Discrete integral speed of t -> xi(t) in Wasserstein-1."""

    speeds: np.ndarray    # (n_t,) consecutive-slice W1 over dt
    exponent: float       # conjugate exponent of 1 + eps0
    norm: float           # (sum_k dt speeds_k^exponent)^(1/exponent)


def abs_continuity_profile(xi: CurveMeasure, grid: TorusGrid, eps0):
    """Speed profile and its L^{(1+eps0)*} norm in time."""
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    exponent = (1.0 + eps0) / eps0
    slices = [xi.slice_measure(k) for k in range(xi.n_steps + 1)]
    speeds = np.array([
        wasserstein1(slices[k], slices[k + 1], grid) / grid.dt
        for k in range(xi.n_steps)
    ])
    norm = float(np.sum(grid.dt * speeds**exponent) ** (1.0 / exponent))
    return AbsContinuityProfile(speeds=speeds, exponent=exponent, norm=norm)
