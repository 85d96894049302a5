"""Shared fixtures: benchmark models and solved fields reused across tests."""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mfg_torus import (
    AtomicTorusMeasure,
    CurveMeasure,
    EvaluationCurveTable,
    ModelSpec,
    TorusGrid,
    TrigPoly,
    extract_optimal_curve,
    solve_backward,
)
from mfg_torus.models import ModelTables

settings.register_profile(
    "package",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    max_examples=50,
)
settings.load_profile("package")

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "configs"
DATA_DIR = Path(__file__).resolve().parent / "data"


def quadratic_benchmark_model():
    """r = 2, no running cost or coupling, final datum cos(2 pi x)."""
    return ModelSpec(
        dim=1, r=2.0, eps0=0.5,
        f=None, kappa=None, c_F=0.0,
        g_base=TrigPoly(1, ((1.0, (1,), 0.0),)),
    )


def coupled_test_model(dim=1, c_f=0.05, c_g=0.05):
    if dim == 1:
        return ModelSpec(
            dim=1, r=2.0, eps0=0.5,
            f=TrigPoly(1, ((0.3, (1,), 1.0),)),
            kappa=TrigPoly(1, ((1.0, (1,), 0.0),)),
            c_F=c_f,
            g_base=TrigPoly(1, ((1.0, (1,), 0.0),)),
            kappa_g=TrigPoly(1, ((1.0, (1,), 0.0),)),
            c_g=c_g,
        )
    return ModelSpec(
        dim=2, r=2.0, eps0=0.5,
        f=TrigPoly(2, ((0.2, (1, 0), 0.0), (0.15, (0, 1), 0.7))),
        kappa=TrigPoly(2, ((1.0, (1, 1), 0.0),)),
        c_F=c_f,
        g_base=TrigPoly(2, ((0.6, (1, 0), 0.0), (0.4, (0, 1), 1.2))),
        kappa_g=TrigPoly(2, ((1.0, (1, 0), 0.0),)),
        c_g=c_g,
    )


@lru_cache(maxsize=8)
def solved_benchmark(n):
    """Uniform-start solve of the quadratic benchmark at resolution n."""
    grid = TorusGrid(dim=1, n_x=n, n_t=n, horizon=1.0)
    tables = ModelTables(quadratic_benchmark_model(), grid)
    mu0 = AtomicTorusMeasure.uniform(grid.n_cells)
    eval_curve = EvaluationCurveTable.stationary(mu0, grid.n_t, grid.n_cells)
    g = tables.final_datum_table(eval_curve.weights[-1])
    vf = solve_backward(tables, eval_curve, g)
    curves = [extract_optimal_curve(vf, c) for c in mu0.cells]
    xi = CurveMeasure.from_atoms(curves, mu0.weights)
    return tables, eval_curve, vf, xi


@pytest.fixture(scope="session")
def benchmark_64():
    return solved_benchmark(64)


@pytest.fixture(scope="session")
def benchmark_32():
    return solved_benchmark(32)


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
