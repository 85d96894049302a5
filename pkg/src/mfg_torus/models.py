"""Hamiltonian-Lagrangian model family and numeric Fenchel transforms.

The running cost is

    L(x, mu, q) = |q|^r / r - f(x) - c_F * (kappa * mu)(x)

with conjugate Hamiltonian

    H(x, mu, p) = |p|^{r*} / r* + f(x) + c_F * (kappa * mu)(x),

where 1/r + 1/r* = 1, the data f, kappa are trigonometric polynomials and
the convolution against an atomic measure is a finite sum.  The final
cost is g(x, mu) = g_base(x) + c_g * (kappa_g * mu)(x).

The module also hosts the grid Fenchel machinery: numeric conjugates on
symmetric velocity grids with detection of unbounded directions, the
ball-restricted biconjugate, and the convergence sweep for the cutoff
Lagrangian  L_beta = min(L, beta |q| + beta0).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .torus import TorusGrid


# ---------------------------------------------------------------------------
# trigonometric polynomials


@dataclass(frozen=True)
class TrigPoly:
    """Real trigonometric polynomial  sum_j amp_j cos(2 pi k_j . x + phase_j).

    ``terms`` is a tuple of (amp, k, phase) with integer frequency vectors
    k; a zero frequency encodes a constant.  Exactly periodic, so values
    never depend on the representative of x.
    """

    dim: int
    terms: tuple = ()

    def value(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for amp, k, phase in self.terms:
            out += amp * np.cos(2.0 * np.pi * (pts @ np.asarray(k, dtype=float)) + phase)
        return out

    def gradient(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((pts.shape[0], self.dim))
        for amp, k, phase in self.terms:
            kv = np.asarray(k, dtype=float)
            s = np.sin(2.0 * np.pi * (pts @ kv) + phase)
            out -= (2.0 * np.pi * amp) * s[:, None] * kv[None, :]
        return out

    def time_derivative_zero(self):
        return 0.0

    @staticmethod
    def constant(dim, c):
        if c == 0.0:
            return TrigPoly(dim, ())
        return TrigPoly(dim, ((float(c), (0,) * dim, 0.0),))

    @staticmethod
    def from_config(dim, entries):
        terms = []
        for e in entries:
            k = tuple(int(v) for v in e["k"])
            if len(k) != dim:
                raise ValueError(f"frequency vector {k} does not match dim {dim}")
            terms.append((float(e["amp"]), k, float(e.get("phase", 0.0))))
        return TrigPoly(dim, tuple(terms))

    def to_config(self):
        return [{"amp": a, "k": list(k), "phase": p} for a, k, p in self.terms]


# ---------------------------------------------------------------------------
# model specification


def _atom_arrays(mu, grid):
    """Positions and weights of an atomic measure-like argument.

    Accepts None (no coupling term), a (positions, weights) pair, an object
    with .cells/.weights resolved through ``grid``, or a dense weight
    vector over grid cells.
    """
    if mu is None:
        return None, None
    if isinstance(mu, tuple):
        pos, w = mu
        return np.atleast_2d(np.asarray(pos, dtype=float)), np.asarray(w, dtype=float)
    if hasattr(mu, "cells"):
        return grid.centers[np.asarray(mu.cells, dtype=int)], np.asarray(mu.weights, dtype=float)
    w = np.asarray(mu, dtype=float)
    if grid is None or w.shape != (grid.n_cells,):
        raise ValueError("dense measure vector requires a matching grid")
    return grid.centers, w


@dataclass(frozen=True)
class ModelSpec:
    """Model data: kinetic exponent, potentials, couplings, final cost."""

    dim: int
    r: float = 2.0
    eps0: float = 0.5
    f: TrigPoly = None
    kappa: TrigPoly = None
    c_F: float = 0.0
    g_base: TrigPoly = None
    kappa_g: TrigPoly = None
    c_g: float = 0.0

    def __post_init__(self):
        if self.r <= 1.0:
            raise ValueError(f"kinetic exponent must exceed 1, got {self.r}")
        if self.eps0 <= 0.0:
            raise ValueError(f"eps0 must be positive, got {self.eps0}")
        for name in ("f", "kappa", "g_base", "kappa_g"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, TrigPoly(self.dim, ()))

    @property
    def r_star(self):
        return self.r / (self.r - 1.0)

    # pointwise evaluations -------------------------------------------------

    def kinetic(self, q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        s = np.sqrt(np.sum(q * q, axis=-1))
        return s**self.r / self.r

    def kinetic_conjugate(self, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        s = np.sqrt(np.sum(p * p, axis=-1))
        return s**self.r_star / self.r_star

    def coupling(self, x, mu, grid=None):
        """(kappa * mu)(x) as a finite sum over atoms."""
        pos, w = _atom_arrays(mu, grid)
        if pos is None:
            return np.zeros(np.atleast_2d(np.asarray(x, dtype=float)).shape[0])
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = np.zeros(x.shape[0])
        for j in range(pos.shape[0]):
            if w[j] == 0.0:
                continue
            vals += w[j] * self.kappa.value(x - pos[j][None, :])
        return vals

    def final_coupling(self, x, mu, grid=None):
        pos, w = _atom_arrays(mu, grid)
        if pos is None:
            return np.zeros(np.atleast_2d(np.asarray(x, dtype=float)).shape[0])
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = np.zeros(x.shape[0])
        for j in range(pos.shape[0]):
            if w[j] == 0.0:
                continue
            vals += w[j] * self.kappa_g.value(x - pos[j][None, :])
        return vals

    def lagrangian(self, x, mu, q, grid=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pot = self.f.value(x)
        if self.c_F != 0.0:
            pot = pot + self.c_F * self.coupling(x, mu, grid)
        return self.kinetic(q) - pot

    def hamiltonian(self, x, mu, p, grid=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pot = self.f.value(x)
        if self.c_F != 0.0:
            pot = pot + self.c_F * self.coupling(x, mu, grid)
        return self.kinetic_conjugate(p) + pot

    def hamiltonian_gradient(self, p):
        """d/dp of the kinetic conjugate: |p|^{r*-2} p (0 at p = 0)."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        s = np.sqrt(np.sum(p * p, axis=-1))
        out = np.zeros_like(p)
        nz = s > 0.0
        out[nz] = (s[nz] ** (self.r_star - 2.0))[:, None] * p[nz]
        return out

    def final_datum(self, x, mu, grid=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        g = self.g_base.value(x)
        if self.c_g != 0.0:
            g = g + self.c_g * self.final_coupling(x, mu, grid)
        return g

    # serialization ----------------------------------------------------------

    def to_config(self):
        return {
            "dim": self.dim,
            "r": self.r,
            "eps0": self.eps0,
            "f": self.f.to_config(),
            "kappa": self.kappa.to_config(),
            "c_F": self.c_F,
            "g_base": self.g_base.to_config(),
            "kappa_g": self.kappa_g.to_config(),
            "c_g": self.c_g,
        }

    @staticmethod
    def from_config(cfg):
        dim = int(cfg["dim"])
        return ModelSpec(
            dim=dim,
            r=float(cfg.get("r", 2.0)),
            eps0=float(cfg.get("eps0", 0.5)),
            f=TrigPoly.from_config(dim, cfg.get("f", [])),
            kappa=TrigPoly.from_config(dim, cfg.get("kappa", [])),
            c_F=float(cfg.get("c_F", 0.0)),
            g_base=TrigPoly.from_config(dim, cfg.get("g_base", [])),
            kappa_g=TrigPoly.from_config(dim, cfg.get("kappa_g", [])),
            c_g=float(cfg.get("c_g", 0.0)),
        )


class ModelTables:
    """Grid tables for one (model, grid) pair.

    Kernel matrices turn coupling sums into matrix-vector products against
    dense cell-weight vectors, which is what the backward solver consumes.
    """

    def __init__(self, model: ModelSpec, grid: TorusGrid):
        if model.dim != grid.dim:
            raise ValueError("model and grid dimension mismatch")
        self.model = model
        self.grid = grid

    @cached_property
    def f_table(self):
        return self.model.f.value(self.grid.centers)

    @cached_property
    def g_base_table(self):
        return self.model.g_base.value(self.grid.centers)

    @cached_property
    def kappa_matrix(self):
        return self.model.kappa.value(
            self.grid.displacement_table.reshape(-1, self.grid.dim)
        ).reshape(self.grid.n_cells, self.grid.n_cells)

    @cached_property
    def kappa_g_matrix(self):
        return self.model.kappa_g.value(
            self.grid.displacement_table.reshape(-1, self.grid.dim)
        ).reshape(self.grid.n_cells, self.grid.n_cells)

    def coupling_table(self, cell_weights):
        """c_F * (kappa * mu) on cell centers for a dense weight vector."""
        if self.model.c_F == 0.0:
            return np.zeros(self.grid.n_cells)
        return self.model.c_F * (self.kappa_matrix @ np.asarray(cell_weights, dtype=float))

    def potential_table(self, cell_weights):
        """f + c_F (kappa * mu) on cells; L(x, mu, 0) is its negative."""
        return self.f_table + self.coupling_table(cell_weights)

    def final_datum_table(self, cell_weights_T):
        g = self.g_base_table
        if self.model.c_g != 0.0:
            g = g + self.model.c_g * (self.kappa_g_matrix @ np.asarray(cell_weights_T, dtype=float))
        return g


@dataclass(frozen=True)
class ConstantsTable:
    """A priori constants for one solve: bounds on L at rest and on g."""

    M0: float      # max |L(x, t, 0)| over cells and departure slices
    m_L: float     # min L(x, t, q) (attained at q = 0)
    g_min: float
    g_max: float

    @property
    def osc_g(self):
        return self.g_max - self.g_min

    @staticmethod
    def from_tables(tables: ModelTables, slice_weights, final_datum_table):
        """slice_weights: (n_t, n_cells) weights at departure slices."""
        rest = np.stack([-tables.potential_table(w) for w in np.atleast_2d(slice_weights)])
        g = np.asarray(final_datum_table, dtype=float)
        return ConstantsTable(
            M0=float(np.max(np.abs(rest))),
            m_L=float(np.min(rest)),
            g_min=float(np.min(g)),
            g_max=float(np.max(g)),
        )


def default_velocity_cap(grid: TorusGrid, constants: ConstantsTable, r: float):
    """Velocity cap from the a priori action bound.

    Optimal one-step kinetic spends satisfy |q|^r/r * dt <= osc(g) + M0 T;
    solving for |q| and doubling gives the cap.  A floor of 1.5 dx/dt keeps
    single-cell moves feasible for degenerate data (flat g, zero model).
    """
    budget = constants.osc_g + constants.M0 * grid.horizon
    q = (r * max(budget, 0.0) / grid.dt) ** (1.0 / r)
    return max(2.0 * q, 1.5 * grid.dx / grid.dt)


# ---------------------------------------------------------------------------
# numeric Fenchel transforms


@dataclass(frozen=True)
class QGrid:
    """Symmetric velocity grid of given radius and spacing.

    Points on the outer shell (sup-norm equal to the realized radius) are
    flagged as boundary; conjugates attained there signal truncation.
    """

    points: np.ndarray        # (m, dim)
    boundary: np.ndarray      # (m,) bool
    radius: float
    spacing: float

    @staticmethod
    def symmetric(radius, spacing, dim):
        n = int(round(radius / spacing))
        if n < 1:
            raise ValueError("q-grid radius must cover at least one spacing")
        axis = np.arange(-n, n + 1) * spacing
        if dim == 1:
            pts = axis[:, None]
        else:
            a, b = np.meshgrid(axis, axis, indexing="ij")
            pts = np.stack([a.ravel(), b.ravel()], axis=1)
        shell = np.max(np.abs(pts), axis=1) >= (n - 0.5) * spacing
        return QGrid(points=pts, boundary=shell, radius=n * spacing, spacing=spacing)


@dataclass(frozen=True)
class ConjugateResult:
    value: float
    argmax: int
    on_boundary: bool


def numeric_conjugate(l_values, q_grid: QGrid, p):
    """max_q  p . q - l(q)  over the velocity grid (first argmax on ties)."""
    l_values = np.asarray(l_values, dtype=float)
    p = np.asarray(p, dtype=float).reshape(-1)
    scores = q_grid.points @ p - l_values
    idx = int(np.argmax(scores))
    return ConjugateResult(
        value=float(scores[idx]),
        argmax=idx,
        on_boundary=bool(q_grid.boundary[idx]),
    )


@dataclass(frozen=True)
class UnboundedProbe:
    value_inner: float
    value_outer: float
    boundary_inner: bool
    boundary_outer: bool
    unbounded: bool


def conjugate_unbounded_probe(l_func, p, radius, spacing, beta0, dim):
    """Probe a conjugate at radii Q and 2Q for an unbounded direction.

    The flag fires when the max sits on the outer shell at both radii and
    the value gained by doubling the radius exceeds beta0: the hallmark of
    a slope that never flattens, i.e. l*(p) = +inf in the limit.
    """
    inner = QGrid.symmetric(radius, spacing, dim)
    outer = QGrid.symmetric(2.0 * radius, spacing, dim)
    res_in = numeric_conjugate(l_func(inner.points), inner, p)
    res_out = numeric_conjugate(l_func(outer.points), outer, p)
    grew = res_out.value - res_in.value > beta0
    return UnboundedProbe(
        value_inner=res_in.value,
        value_outer=res_out.value,
        boundary_inner=res_in.on_boundary,
        boundary_outer=res_out.on_boundary,
        unbounded=bool(res_in.on_boundary and res_out.on_boundary and grew),
    )


def numeric_biconjugate(l_values, q_grid: QGrid, p_radius=None):
    """Double Legendre transform on the grid.

    The slope search runs over lattice points of the same spacing inside
    the closed ball of radius ``p_radius`` (Euclidean norm).  When no
    radius is given it is taken just above the largest discrete slope of
    the data, which reproduces the convex hull of the sampled points.
    Output is pointwise <= the input, exactly equal where the input is
    already convex and the touching slopes are on the lattice.
    """
    l_values = np.asarray(l_values, dtype=float)
    dim = q_grid.points.shape[1]
    if p_radius is None:
        span = np.max(l_values) - np.min(l_values)
        p_radius = span / q_grid.spacing + q_grid.spacing
    n = int(np.floor(p_radius / q_grid.spacing + 1e-12))
    axis = np.arange(-n, n + 1) * q_grid.spacing
    if dim == 1:
        p_pts = axis[:, None]
    else:
        a, b = np.meshgrid(axis, axis, indexing="ij")
        p_pts = np.stack([a.ravel(), b.ravel()], axis=1)
    keep = np.sqrt(np.sum(p_pts * p_pts, axis=1)) <= p_radius + 1e-12
    p_pts = p_pts[keep]
    # l*(p) = max_q p.q - l(q), then l**(q) = max_p p.q - l*(p)
    inner = p_pts @ q_grid.points.T          # (n_p, n_q)
    conj = np.max(inner - l_values[None, :], axis=1)
    return np.max(inner - conj[:, None], axis=0)


@dataclass(frozen=True)
class PerturbedLagrangian:
    """Cutoff running cost  L_beta = min(L, beta |q| + beta0).

    beta0 must exceed max_x L(x, mu, 0) so the cutoff never bites at rest;
    then L_beta increases to L as beta grows and the ball-restricted
    biconjugate recovers L on any fixed window.
    """

    model: ModelSpec
    beta: float
    beta0: float

    def value(self, x, mu, q, grid=None):
        base = self.model.lagrangian(x, mu, q, grid)
        q = np.atleast_2d(np.asarray(q, dtype=float))
        cone = self.beta * np.sqrt(np.sum(q * q, axis=-1)) + self.beta0
        return np.minimum(base, cone)


def default_cutoff_offset(tables: ModelTables, cell_weights):
    """beta0 = (grid max of L(x, mu, 0)) + 1."""
    rest = -tables.potential_table(cell_weights)
    return float(np.max(rest)) + 1.0


def betino_convergence_sweep(model: ModelSpec, x, mu, q_grid: QGrid, betas,
                             beta0, grid=None):
    """Max gap  L - (L_beta)**  over the probe window, per beta.

    Gaps are nonincreasing in beta and vanish once beta dominates every
    slope of L on the window (the cutoff then sits above all supporting
    lines of the convex kinetic part).
    """
    l_true = model.lagrangian(x, mu, q_grid.points, grid)
    gaps = []
    for beta in betas:
        cut = PerturbedLagrangian(model, float(beta), beta0)
        l_cut = cut.value(x, mu, q_grid.points, grid)
        l_rec = numeric_biconjugate(l_cut, q_grid, p_radius=float(beta))
        gaps.append(float(np.max(l_true - l_rec)))
    return np.asarray(gaps)
