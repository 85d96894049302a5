"""Figure rendering for report outputs.

All figures go through the Agg backend and are written as PNG with the
Software metadata key suppressed, so repeated runs of the same config give
byte-identical images.  Figures are a convenience layer on top of the
delimited exports; nothing downstream reads them back.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np

_SAVE = {"dpi": 110, "metadata": {"Software": None}}


def _finish(fig, path):
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def value_field_figure(vf, path):
    """Space-time heatmap in dim 1; initial-slice heatmap in dim 2."""
    grid = vf.grid
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if grid.dim == 1:
        im = ax.imshow(
            vf.values,
            aspect="auto",
            origin="lower",
            extent=(0.0, grid.horizon, 0.0, 1.0),
            cmap="viridis",
        )
        ax.set_xlabel("t")
        ax.set_ylabel("x")
        ax.set_title("value field v(x, t)")
    else:
        im = ax.imshow(
            vf.values[:, 0].reshape(grid.n_x, grid.n_x).T,
            origin="lower",
            extent=(0.0, 1.0, 0.0, 1.0),
            cmap="viridis",
        )
        ax.set_xlabel("x_0")
        ax.set_ylabel("x_1")
        ax.set_title("value field v(x, 0)")
    fig.colorbar(im, ax=ax)
    _finish(fig, path)


def curves_figure(xi, grid, path, max_curves=64):
    """Optimal trajectories; positions lifted off the torus for readability."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    order = np.argsort(xi.weights)[::-1][:max_curves]
    w_max = float(np.max(xi.weights))
    for idx in order:
        curve = xi.curves[idx]
        start = grid.centers[curve.nodes[0]]
        lifted = start[None, :] + np.vstack(
            [np.zeros(grid.dim), np.cumsum(curve.displacements(grid), axis=0)])
        alpha = 0.25 + 0.75 * float(xi.weights[idx]) / w_max
        if grid.dim == 1:
            ax.plot(grid.times, lifted[:, 0], color="tab:blue", alpha=alpha, lw=1.0)
        else:
            ax.plot(lifted[:, 0], lifted[:, 1], color="tab:blue", alpha=alpha, lw=1.0)
    if grid.dim == 1:
        ax.set_xlabel("t")
        ax.set_ylabel("x (lifted)")
    else:
        ax.set_xlabel("x_0 (lifted)")
        ax.set_ylabel("x_1 (lifted)")
    ax.set_title(f"optimal curves ({min(len(order), max_curves)} heaviest atoms)")
    _finish(fig, path)


def residual_history_figure(residuals, gaps, path):
    """Fixed-point residuals and certificate gaps per iterate."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    its = np.arange(1, len(residuals) + 1)
    ax.semilogy(its, np.maximum(residuals, 1e-16), "o-", label="residual")
    if gaps:
        ax.semilogy(its, np.maximum(np.abs(gaps), 1e-16), "s--", label="|certificate gap|")
    ax.set_xlabel("iterate")
    ax.set_ylabel("value")
    ax.set_title("fixed-point iteration")
    ax.legend()
    _finish(fig, path)


def cost_matrix_figure(entries, path, large=5.0e8):
    """Heatmap of pinned-endpoint costs; unreachable pairs masked."""
    entries = np.asarray(entries, dtype=float)
    masked = np.where(entries >= large, np.nan, entries)
    fig, ax = plt.subplots(figsize=(5.0, 4.4))
    im = ax.imshow(masked, origin="lower", cmap="magma", aspect="auto")
    ax.set_xlabel("end cell")
    ax.set_ylabel("start cell")
    ax.set_title("minimal action between cells")
    fig.colorbar(im, ax=ax)
    _finish(fig, path)


def continuity_figure(residuals, path):
    """Bar chart of weak-form residuals per test function."""
    names = list(residuals)
    values = [abs(residuals[n]) for n in names]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.5 * len(names)), 4.0))
    ax.bar(range(len(names)), values, color="tab:orange")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("|residual|")
    ax.set_title("continuity-equation residuals")
    fig.tight_layout()
    _finish(fig, path)


def fenchel_figure(betas, gaps, path):
    """Biconjugate gap against the cutoff slope."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(betas, gaps, "o-")
    ax.set_xlabel("cutoff slope")
    ax.set_ylabel("max |L - (L_beta)**|")
    ax.set_title("cutoff convergence sweep")
    _finish(fig, path)
