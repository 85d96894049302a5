"""Space-time grids on the flat torus.

The state space is the unit torus in dimension 1 or 2, discretized into
``n_x`` cells per axis with centers at ``(i + 0.5) * dx``.  Time is the
interval ``[0, T]`` split into ``n_t`` uniform steps.  All spatial
quantities are stored on flat cell indices; multi-indices are ordered
lexicographically (axis 0 is the slow axis).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


def wrap_points(x):
    """Map points to the fundamental domain [0, 1)^dim."""
    w = np.asarray(x, dtype=float) % 1.0
    # x % 1.0 can round to exactly 1.0 for tiny negative x
    return np.where(w >= 1.0, 0.0, w)


def periodic_displacement(x, y):
    """Minimal representative of y - x, componentwise in (-0.5, 0.5].

    At the antipodal tie |d| = 0.5 the positive representative is chosen.
    Works on single points or batches (broadcasting over leading axes).
    """
    d = (np.asarray(y, dtype=float) - np.asarray(x, dtype=float)) % 1.0
    return np.where(d > 0.5, d - 1.0, d)


def periodic_distance(x, y):
    """Euclidean distance on the torus (norm of the minimal displacement)."""
    d = periodic_displacement(x, y)
    return np.sqrt(np.sum(d * d, axis=-1))


@dataclass(frozen=True)
class TorusGrid:
    """Uniform space-time grid on the torus.

    Parameters
    ----------
    dim : spatial dimension, 1 or 2.
    n_x : cells per axis; cell centers sit at (i + 0.5) * dx, dx = 1 / n_x.
    n_t : time steps; t_k = k * dt with dt = T / n_t.
    horizon : final time T > 0.
    """

    dim: int
    n_x: int
    n_t: int
    horizon: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n_x < 2:
            raise ValueError(f"n_x must be at least 2, got {self.n_x}")
        if self.n_t < 1:
            raise ValueError(f"n_t must be at least 1, got {self.n_t}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    @property
    def dx(self):
        return 1.0 / self.n_x

    @property
    def dt(self):
        return self.horizon / self.n_t

    @property
    def n_cells(self):
        return self.n_x**self.dim

    @property
    def shape(self):
        return (self.n_x,) * self.dim

    @cached_property
    def times(self):
        return np.arange(self.n_t + 1) * self.dt

    @cached_property
    def centers(self):
        """Cell centers, shape (n_cells, dim), lexicographic flat order."""
        axis = (np.arange(self.n_x) + 0.5) * self.dx
        if self.dim == 1:
            return axis[:, None].copy()
        a, b = np.meshgrid(axis, axis, indexing="ij")
        return np.stack([a.ravel(), b.ravel()], axis=1)

    def flat_index(self, multi):
        multi = np.asarray(multi, dtype=int) % self.n_x
        if self.dim == 1:
            return multi[..., 0]
        return multi[..., 0] * self.n_x + multi[..., 1]

    def multi_index(self, flat):
        flat = np.asarray(flat, dtype=int)
        if self.dim == 1:
            return flat[..., None]
        return np.stack([flat // self.n_x, flat % self.n_x], axis=-1)

    @cached_property
    def displacement_table(self):
        """Pairwise minimal displacements between cell centers.

        Shape (n_cells, n_cells, dim); entry [i, j] is the displacement
        from center i to center j.
        """
        c = self.centers
        return periodic_displacement(c[:, None, :], c[None, :, :])

    @cached_property
    def distance_table(self):
        d = self.displacement_table
        return np.sqrt(np.sum(d * d, axis=-1))

    def interpolate(self, values, points):
        """Multilinear periodic interpolation of a cell field.

        ``values`` has shape (n_cells,); ``points`` is a single point or an
        array (..., dim).  Exact on fields affine between neighboring cell
        centers.
        """
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_cells,):
            raise ValueError(f"expected {self.n_cells} cell values, got shape {values.shape}")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        u = pts / self.dx - 0.5
        base = np.floor(u).astype(int)
        frac = u - base
        if self.dim == 1:
            i0 = base[:, 0] % self.n_x
            i1 = (base[:, 0] + 1) % self.n_x
            th = frac[:, 0]
            out = (1.0 - th) * values[i0] + th * values[i1]
        else:
            i0 = base % self.n_x
            i1 = (base + 1) % self.n_x
            f = values.reshape(self.shape)
            tx, ty = frac[:, 0], frac[:, 1]
            v00 = f[i0[:, 0], i0[:, 1]]
            v01 = f[i0[:, 0], i1[:, 1]]
            v10 = f[i1[:, 0], i0[:, 1]]
            v11 = f[i1[:, 0], i1[:, 1]]
            out = ((1 - tx) * (1 - ty) * v00 + (1 - tx) * ty * v01
                   + tx * (1 - ty) * v10 + tx * ty * v11)
        if np.isscalar(points) or np.asarray(points).ndim <= 1:
            return float(out[0])
        return out

    def central_gradient(self, values):
        """Periodic central differences of a cell field, shape (n_cells, dim)."""
        values = np.asarray(values, dtype=float)
        f = values.reshape(self.shape)
        grads = []
        for axis in range(self.dim):
            g = (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * self.dx)
            grads.append(g.ravel())
        return np.stack(grads, axis=1)

    def one_sided_differences(self, values, axis):
        """Forward and backward difference quotients along one axis.

        Returns (forward, backward), each shape (n_cells,).  Used by the
        kink filter when comparing gradients against field samples.
        """
        values = np.asarray(values, dtype=float)
        f = values.reshape(self.shape)
        fwd = (np.roll(f, -1, axis=axis) - f) / self.dx
        bwd = (f - np.roll(f, 1, axis=axis)) / self.dx
        return fwd.ravel(), bwd.ravel()
