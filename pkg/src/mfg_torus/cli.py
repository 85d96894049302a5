"""Command-line driver: configuration in, bit-stable artifacts out.

Every subcommand reads one JSON config, writes its results under one
output directory, and echoes the fully materialized config next to them.
Identical configs produce byte-identical artifacts: iteration orders and
tie-breaks are fixed throughout the library, floats are emitted with 17
significant digits, and no artifact contains a timestamp.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .errors import MFGTorusError
from .field_ce import (compare_with_hp, continuity_residual,
                       default_test_family, field_along_measure,
                       velocity_lookup)
from .hj import solve_backward
from .io import (read_json, read_measure_jsonl, read_value_field_csv,
                 write_cost_matrix_csv, write_curve_csv, write_eval_curve_csv,
                 write_json, write_measure_jsonl, write_value_field_csv)
from .measures import CurveMeasure, EvaluationCurveTable
from .mfg import (certificate_numbers, certify_equilibrium,
                  derive_velocity_cap, equilibrium_value_field,
                  iterate_fixed_point, stationary_seed)
from .models import (ModelTables, QGrid, PerturbedLagrangian,
                     betino_convergence_sweep, conjugate_unbounded_probe,
                     default_cutoff_offset)
from .paths import cost_matrix, extract_optimal_curve, optimality_certificate

VERIFY_TOL = 1e-9


# ---------------------------------------------------------------------------
# shared setup


def _tables(cfg: RunConfig) -> ModelTables:
    return ModelTables(cfg.model, cfg.grid)


def _stationary_curve(cfg: RunConfig) -> EvaluationCurveTable:
    return EvaluationCurveTable.stationary(cfg.mu0, cfg.grid.n_t, cfg.grid.n_cells)


def _velocity_cap(cfg: RunConfig, tables: ModelTables) -> float:
    if cfg.q_max is not None:
        return cfg.q_max
    return derive_velocity_cap(tables, stationary_seed(cfg.mu0, cfg.grid.n_t))


def _metadata(cfg: RunConfig, command, q_max, args) -> dict:
    grid = cfg.grid
    return {
        "command": command,
        "package_version": __version__,
        "dx": grid.dx,
        "dt": grid.dt,
        "n_cells": grid.n_cells,
        "q_max": float(q_max),
        "threads": args.threads,
        "resolution_scale": args.resolution_scale,
    }


def _emit_common(cfg: RunConfig, out_dir, metadata):
    os.makedirs(out_dir, exist_ok=True)
    write_json(cfg.echo(), os.path.join(out_dir, "config.echo.json"))
    write_json(metadata, os.path.join(out_dir, "metadata.json"))


def _png(cfg: RunConfig) -> bool:
    return "png" in cfg.formats


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve_hj(cfg: RunConfig, out_dir, args) -> int:
    tables = _tables(cfg)
    eval_curve = _stationary_curve(cfg)
    g = tables.final_datum_table(eval_curve.weights[cfg.grid.n_t])
    q_max = _velocity_cap(cfg, tables)
    vf = solve_backward(tables, eval_curve, g, q_max)

    _emit_common(cfg, out_dir, _metadata(cfg, "solve-hj", q_max, args))
    write_value_field_csv(vf, os.path.join(out_dir, "value_field.csv"))
    if _png(cfg):
        from .figures import value_field_figure
        value_field_figure(vf, os.path.join(out_dir, "value_field.png"))
    print(f"solve-hj: {cfg.grid.n_cells} cells x {cfg.grid.n_t} steps, "
          f"v in [{np.min(vf.values):.6g}, {np.max(vf.values):.6g}] -> {out_dir}")
    return 0


def cmd_optimal_curves(cfg: RunConfig, out_dir, args) -> int:
    tables = _tables(cfg)
    eval_curve = _stationary_curve(cfg)
    g = tables.final_datum_table(eval_curve.weights[cfg.grid.n_t])
    q_max = _velocity_cap(cfg, tables)
    vf = solve_backward(tables, eval_curve, g, q_max)
    curves = [extract_optimal_curve(vf, c) for c in cfg.mu0.cells]
    xi = CurveMeasure.from_atoms(curves, cfg.mu0.weights)
    cert = optimality_certificate(xi, vf)

    _emit_common(cfg, out_dir, _metadata(cfg, "optimal-curves", q_max, args))
    write_measure_jsonl(xi, os.path.join(out_dir, "curves.jsonl"))
    for curve in xi.curves:
        write_curve_csv(curve, cfg.grid,
                        os.path.join(out_dir, f"curve_{curve.start:05d}.csv"))
    write_json({"certificate_gap": float(cert.gap),
                "action_integral": float(cert.action_integral)},
               os.path.join(out_dir, "certificate.json"))
    if _png(cfg):
        from .figures import curves_figure
        curves_figure(xi, cfg.grid, os.path.join(out_dir, "curves.png"))
    print(f"optimal-curves: {xi.n_atoms} atoms, certificate gap "
          f"{cert.gap:.3e} -> {out_dir}")
    return 0


def cmd_cost_matrix(cfg: RunConfig, out_dir, args) -> int:
    tables = _tables(cfg)
    eval_curve = _stationary_curve(cfg)
    q_max = _velocity_cap(cfg, tables)
    cm = cost_matrix(tables, eval_curve, q_max,
                     threads=args.threads, require_reachable=False)

    meta = _metadata(cfg, "cost-matrix", q_max, args)
    meta["unreachable_pairs"] = int(np.sum(~cm.finite_mask()))
    _emit_common(cfg, out_dir, meta)
    write_cost_matrix_csv(cm.entries, os.path.join(out_dir, "cost_matrix.csv"))
    if _png(cfg):
        from .figures import cost_matrix_figure
        cost_matrix_figure(cm.entries, os.path.join(out_dir, "cost_matrix.png"))
    print(f"cost-matrix: {cm.entries.shape[0]}x{cm.entries.shape[1]}, "
          f"{meta['unreachable_pairs']} unreachable pairs -> {out_dir}")
    return 0


def cmd_mfg(cfg: RunConfig, out_dir, args) -> int:
    tables = _tables(cfg)
    run = iterate_fixed_point(tables, cfg.mu0, cfg.alpha, cfg.tol,
                              cfg.max_iter, q_max=cfg.q_max)
    report = certify_equilibrium(run, tables, threads=args.threads)
    vf = equilibrium_value_field(tables, run.final, run.q_max)

    _emit_common(cfg, out_dir, _metadata(cfg, "mfg", run.q_max, args))
    history_lines = []
    for state in run.states:
        history_lines.append(
            '{"iterate": %d, "residual": %s, "certificate_gap": %s}'
            % (state.iterate, ("%.17g" % state.residual),
               ("%.17g" % state.certificate_gap_self)))
    with open(os.path.join(out_dir, "history.jsonl"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(history_lines) + "\n" if history_lines else "")
    write_json(report.to_dict(), os.path.join(out_dir, "report.json"))
    write_measure_jsonl(run.final, os.path.join(out_dir, "equilibrium.jsonl"))
    write_eval_curve_csv(run.final.evaluation_curve(cfg.grid.n_cells), cfg.grid,
                         os.path.join(out_dir, "eval_curve.csv"))
    write_value_field_csv(vf, os.path.join(out_dir, "value_field.csv"))
    if _png(cfg):
        from .figures import (continuity_figure, curves_figure,
                              residual_history_figure, value_field_figure)
        value_field_figure(vf, os.path.join(out_dir, "value_field.png"))
        curves_figure(run.final, cfg.grid, os.path.join(out_dir, "curves.png"))
        residual_history_figure(report.residual_history, report.gap_history,
                                os.path.join(out_dir, "residual_history.png"))
        continuity_figure(report.continuity_residuals,
                          os.path.join(out_dir, "continuity.png"))
    residual_text = "n/a" if report.residual is None else f"{report.residual:.3e}"
    print(f"mfg: status {report.status} after {report.iterations} iterates, "
          f"residual {residual_text}, certificate gap "
          f"{report.certificate_gap:.3e} -> {out_dir}")
    return 0


def _close(a, b, tol=VERIFY_TOL):
    if a is None or b is None:
        return a is None and b is None
    return abs(float(a) - float(b)) <= tol


def cmd_verify(cfg: RunConfig, out_dir, args) -> int:
    report_dir = args.report
    grid = cfg.grid
    try:
        stored = read_json(os.path.join(report_dir, "report.json"))
        xi = read_measure_jsonl(os.path.join(report_dir, "equilibrium.jsonl"))
        values, successor = read_value_field_csv(
            os.path.join(report_dir, "value_field.csv"))
    except (OSError, ValueError, KeyError, MFGTorusError) as exc:
        print(f"verify: cannot load artifacts from {report_dir}: {exc}",
              file=sys.stderr)
        return 1

    if not isinstance(xi, CurveMeasure):
        print("verify: equilibrium export does not contain curve atoms",
              file=sys.stderr)
        return 1
    if xi.n_steps != grid.n_t or values.shape != (grid.n_cells, grid.n_t + 1) \
            or int(np.max(xi.node_matrix())) >= grid.n_cells:
        print(f"verify: dimension mismatch: config grid has {grid.n_cells} "
              f"cells x {grid.n_t} steps, artifacts have "
              f"{values.shape[0]} cells x {xi.n_steps} steps", file=sys.stderr)
        return 1

    tables = _tables(cfg)
    q_max = float(stored["q_max"])
    recomputed = certificate_numbers(tables, xi, q_max, threads=args.threads)
    vf = equilibrium_value_field(tables, xi, q_max)
    value_gap = float(np.max(np.abs(vf.values - values)))

    mismatches = []
    if value_gap > VERIFY_TOL:
        mismatches.append(f"value_field (max gap {value_gap:.3e})")
    for key, fresh in recomputed.items():
        if key == "continuity_residuals":
            for name, val in fresh.items():
                if not _close(val, stored.get(key, {}).get(name)):
                    mismatches.append(f"{key}.{name}")
            continue
        if key == "atom_count":
            if int(stored.get(key, -1)) != int(fresh):
                mismatches.append(key)
            continue
        if not _close(fresh, stored.get(key)):
            mismatches.append(key)

    os.makedirs(out_dir, exist_ok=True)
    write_json({
        "report_dir": report_dir,
        "recomputed": recomputed,
        "value_field_max_gap": value_gap,
        "mismatches": mismatches,
        "tolerance": VERIFY_TOL,
    }, os.path.join(out_dir, "verify.json"))

    if mismatches:
        print("verify: MISMATCH in " + ", ".join(sorted(mismatches)),
              file=sys.stderr)
        return 1
    print(f"verify: PASS ({len(recomputed)} certificate fields within "
          f"{VERIFY_TOL:g}) -> {out_dir}")
    return 0


def cmd_fenchel_sweep(cfg: RunConfig, out_dir, args) -> int:
    tables = _tables(cfg)
    grid = cfg.grid
    model = cfg.model
    mu = cfg.mu0
    x = grid.centers[0]
    beta0 = default_cutoff_offset(tables, mu.dense(grid.n_cells))

    flag_rows = []
    for beta in (0.5, 1.0, 2.0):
        cut = PerturbedLagrangian(model, beta, beta0)
        for mult in (0.25, 0.9, 1.5, 3.0):
            p = np.zeros(grid.dim)
            p[0] = mult * beta
            probe = conjugate_unbounded_probe(
                lambda pts: cut.value(x, mu, pts, grid),
                p, radius=8.0, spacing=0.125, beta0=beta0, dim=grid.dim)
            flag_rows.append({
                "beta": beta,
                "p_norm": mult * beta,
                "expected": mult > 1.0,
                "fired": bool(probe.unbounded),
                "value_inner": probe.value_inner,
                "value_outer": probe.value_outer,
            })

    window = QGrid.symmetric(radius=2.0, spacing=0.0625, dim=grid.dim)
    betas = [0.25, 0.5, 1.0, 2.0, 4.0]
    gaps = betino_convergence_sweep(model, x, mu, window, betas, beta0, grid)

    meta = _metadata(cfg, "fenchel-sweep", _velocity_cap(cfg, tables), args)
    meta["beta0"] = beta0
    _emit_common(cfg, out_dir, meta)
    write_json({
        "beta0": beta0,
        "window_radius": window.radius,
        "window_spacing": window.spacing,
        "betas": betas,
        "max_gaps": gaps,
        "nonincreasing": bool(np.all(np.diff(gaps) <= 1e-12)),
        "final_gap": float(gaps[-1]),
        "unbounded_flags": flag_rows,
    }, os.path.join(out_dir, "fenchel.json"))
    if _png(cfg):
        from .figures import fenchel_figure
        fenchel_figure(betas, gaps, os.path.join(out_dir, "fenchel.png"))
    misfired = sum(1 for r in flag_rows if r["fired"] != r["expected"])
    print(f"fenchel-sweep: final gap {gaps[-1]:.3e}, "
          f"{misfired} misfired flags -> {out_dir}")
    return 0


def cmd_continuity_check(cfg: RunConfig, out_dir, args) -> int:
    tables = _tables(cfg)
    grid = cfg.grid
    eval_curve = _stationary_curve(cfg)
    g = tables.final_datum_table(eval_curve.weights[grid.n_t])
    q_max = _velocity_cap(cfg, tables)
    vf = solve_backward(tables, eval_curve, g, q_max)
    curves = [extract_optimal_curve(vf, c) for c in cfg.mu0.cells]
    xi = CurveMeasure.from_atoms(curves, cfg.mu0.weights)

    samples = field_along_measure(xi, vf)
    _, collision_gap = velocity_lookup(samples)
    residuals = continuity_residual(xi, samples, default_test_family(grid.dim), grid)
    hp = compare_with_hp(vf, samples)

    _emit_common(cfg, out_dir, _metadata(cfg, "continuity-check", q_max, args))
    write_json({
        "residuals": residuals,
        "max_abs_residual": float(max(abs(v) for v in residuals.values())),
        "collision_gap": float(collision_gap),
        "kink_fraction": hp.kink_fraction,
        "median_velocity_gap": hp.median_gap,
        "max_velocity_gap": hp.max_gap,
        "sample_count": len(samples),
        "sample_gaps": [
            {"cell": r.cell, "k": r.time_index, "gap": r.gap, "kink": r.kink}
            for r in hp.records
        ],
    }, os.path.join(out_dir, "continuity.json"))
    if _png(cfg):
        from .figures import continuity_figure
        continuity_figure(residuals, os.path.join(out_dir, "continuity.png"))
    print(f"continuity-check: max |residual| "
          f"{max(abs(v) for v in residuals.values()):.3e}, median velocity gap "
          f"{hp.median_gap:.3e} -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument handling


_COMMANDS = {
    "solve-hj": cmd_solve_hj,
    "optimal-curves": cmd_optimal_curves,
    "cost-matrix": cmd_cost_matrix,
    "mfg": cmd_mfg,
    "verify": cmd_verify,
    "fenchel-sweep": cmd_fenchel_sweep,
    "continuity-check": cmd_continuity_check,
}


def _default_threads():
    env = os.environ.get("MFG_TORUS_THREADS")
    if env is None:
        return 1
    try:
        value = int(env)
    except ValueError:
        raise ConfigError(f"MFG_TORUS_THREADS must be an integer, got {env!r}")
    if value < 1:
        raise ConfigError("MFG_TORUS_THREADS must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfg-torus",
        description="Mean field games on the flat torus: solvers, "
                    "certificates, and re-verification.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a run config JSON")
        p.add_argument("--out", default=None,
                       help="output directory (default: the config's output block)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap (default: MFG_TORUS_THREADS or 1)")
        p.add_argument("--resolution-scale", type=int, default=1,
                       help="multiply n_x and n_t for refinement studies")
        if name == "verify":
            p.add_argument("--report", required=True,
                           help="directory holding a previous mfg run's artifacts")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is None:
            args.threads = _default_threads()
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.resolution_scale < 1:
            raise ConfigError("--resolution-scale must be at least 1")
        cfg = load_config(args.config, resolution_scale=args.resolution_scale)
        out_dir = args.out if args.out is not None else cfg.out_dir
        return _COMMANDS[args.command](cfg, out_dir, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MFGTorusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
