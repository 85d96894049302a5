"""Config validation, defaults, echoing, and the command-line driver."""

import filecmp
import json
import os

import numpy as np
import pytest

from mfg_torus import ConfigError
from mfg_torus.cli import main
from mfg_torus.config import load_config, parse_config
from mfg_torus.io import (dumps_json, read_json, read_measure_jsonl,
                          read_value_field_csv, write_json)


def minimal_grid(n_x=8, n_t=4, dim=1):
    return {"dim": dim, "n_x": n_x, "n_t": n_t, "T": 1.0}


def small_mfg_config(out_dir, formats=("csv", "json", "png")):
    """A weakly coupled instance that converges in a handful of iterates."""
    return {
        "grid": minimal_grid(),
        "model": {
            "r": 2.0,
            "eps0": 0.5,
            "f": [{"amp": 0.3, "k": [1], "phase": 1.0}],
            "kappa": [{"amp": 1.0, "k": [1], "phase": 0.0}],
            "c_F": 0.05,
            "g_base": [{"amp": 1.0, "k": [1], "phase": 0.0}],
        },
        "mu0": {"uniform": True},
        "solver": {"alpha": 0.5, "tol": 1e-3, "max_iter": 50, "seed": 0},
        "output": {"directory": str(out_dir), "formats": list(formats)},
    }


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


# ---------------------------------------------------------------------------
# schema validation and defaults


def test_minimal_config_materializes_defaults():
    cfg = parse_config({"grid": minimal_grid()})
    assert cfg.grid.n_cells == 8 and cfg.grid.n_t == 4
    assert cfg.q_max is None
    assert cfg.model.r == 2.0 and cfg.model.eps0 == 0.5
    assert cfg.model.c_F == 0.0 and cfg.model.c_g == 0.0
    assert cfg.alpha == 0.5 and cfg.tol == 1e-3
    assert cfg.max_iter == 50 and cfg.seed == 0
    assert cfg.out_dir == "out"
    assert cfg.formats == ("csv", "json", "png")
    assert cfg.mu0.n_atoms == 8  # uniform by default


def test_unknown_keys_rejected_everywhere():
    with pytest.raises(ConfigError, match="config: "):
        parse_config({"grid": minimal_grid(), "grids": {}})
    with pytest.raises(ConfigError, match="config.grid"):
        parse_config({"grid": {**minimal_grid(), "nx": 3}})
    with pytest.raises(ConfigError, match="config.solver"):
        parse_config({"grid": minimal_grid(), "solver": {"alfa": 0.5}})


def test_missing_and_invalid_grid_fields():
    with pytest.raises(ConfigError, match="config.grid"):
        parse_config({"grid": {"dim": 1, "n_t": 4, "T": 1.0}})
    with pytest.raises(ConfigError, match="config.grid.n_x"):
        parse_config({"grid": {**minimal_grid(), "n_x": 1}})
    with pytest.raises(ConfigError, match="config.grid.T"):
        parse_config({"grid": {**minimal_grid(), "T": 0.0}})
    with pytest.raises(ConfigError, match="config.grid.dim"):
        parse_config({"grid": {**minimal_grid(), "dim": 3}})


def test_invalid_model_and_solver_values():
    with pytest.raises(ConfigError, match="config.model.r"):
        parse_config({"grid": minimal_grid(), "model": {"r": 1.0}})
    with pytest.raises(ConfigError, match="config.solver.alpha"):
        parse_config({"grid": minimal_grid(), "solver": {"alpha": 0.0}})
    with pytest.raises(ConfigError, match="config.solver.alpha"):
        parse_config({"grid": minimal_grid(), "solver": {"alpha": 1.5}})
    with pytest.raises(ConfigError, match="config.output.formats"):
        parse_config({"grid": minimal_grid(), "output": {"formats": ["csv", "csv"]}})
    with pytest.raises(ConfigError, match="config.output.formats"):
        parse_config({"grid": minimal_grid(), "output": {"formats": ["svg"]}})


def test_frequency_vector_must_match_dim():
    with pytest.raises(ConfigError, match="config.model.g_base"):
        parse_config({"grid": minimal_grid(dim=1),
                      "model": {"g_base": [{"amp": 1.0, "k": [1, 1]}]}})
    cfg = parse_config({"grid": minimal_grid(dim=2),
                        "model": {"g_base": [{"amp": 1.0, "k": [1, 1]}]}})
    assert cfg.model.dim == 2


def test_mu0_atoms_renormalized_and_validated():
    cfg = parse_config({"grid": minimal_grid(),
                        "mu0": {"atoms": [{"cell": 2, "weight": 2.0},
                                          {"cell": 5, "weight": 6.0}]}})
    assert np.array_equal(cfg.mu0.cells, [2, 5])
    assert np.allclose(cfg.mu0.weights, [0.25, 0.75])
    with pytest.raises(ConfigError, match="outside"):
        parse_config({"grid": minimal_grid(),
                      "mu0": {"atoms": [{"cell": 8, "weight": 1.0}]}})
    with pytest.raises(ConfigError, match="not both"):
        parse_config({"grid": minimal_grid(),
                      "mu0": {"uniform": True,
                              "atoms": [{"cell": 0, "weight": 1.0}]}})


def test_echo_is_fully_materialized_and_stable():
    cfg = parse_config({"grid": minimal_grid(),
                        "model": {"g_base": [{"amp": 1.0, "k": [1]}]}})
    echo = cfg.echo()
    assert echo["grid"]["q_max"] is None
    assert echo["mu0"]["uniform"] is False
    assert len(echo["mu0"]["atoms"]) == 8
    assert echo["model"]["g_base"][0]["phase"] == 0.0
    assert "dim" not in echo["model"]
    assert dumps_json(echo) == dumps_json(parse_config(echo).echo())


def test_load_config_reports_parse_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"grid": {\n  "dim": 1,\n}}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(str(path))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))
    lst = tmp_path / "list.json"
    lst.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="top level"):
        load_config(str(lst))


def test_resolution_scale_multiplies_grid(tmp_path):
    path = write_config(tmp_path, {"grid": minimal_grid(8, 4)})
    cfg = load_config(path, resolution_scale=4)
    assert cfg.grid.n_x == 32 and cfg.grid.n_t == 16
    atom_cfg = write_config(tmp_path, {
        "grid": minimal_grid(),
        "mu0": {"atoms": [{"cell": 0, "weight": 1.0}]},
    }, name="atoms.json")
    assert load_config(atom_cfg, resolution_scale=1).mu0.n_atoms == 1
    with pytest.raises(ConfigError, match="uniform"):
        load_config(atom_cfg, resolution_scale=2)


# ---------------------------------------------------------------------------
# CLI driver


def test_cli_solve_hj_writes_expected_artifacts(tmp_path):
    out = tmp_path / "run"
    cfg = small_mfg_config(out)
    code = main(["solve-hj", "--config", write_config(tmp_path, cfg)])
    assert code == 0
    for name in ("config.echo.json", "metadata.json", "value_field.csv",
                 "value_field.png"):
        assert (out / name).is_file()
    meta = read_json(out / "metadata.json")
    assert meta["command"] == "solve-hj"
    assert meta["n_cells"] == 8 and meta["threads"] == 1
    values, successor = read_value_field_csv(out / "value_field.csv")
    assert values.shape == (8, 5) and successor.shape == (8, 4)


def test_cli_zero_data_solve_is_identically_zero(tmp_path):
    out = tmp_path / "zero"
    cfg = {"grid": minimal_grid(), "output": {"directory": str(out),
                                              "formats": ["csv"]}}
    assert main(["solve-hj", "--config", write_config(tmp_path, cfg)]) == 0
    values, _ = read_value_field_csv(out / "value_field.csv")
    assert np.all(values == 0.0)
    assert not (out / "value_field.png").exists()


def test_cli_optimal_curves_artifacts(tmp_path):
    out = tmp_path / "curves"
    cfg = small_mfg_config(out)
    cfg["mu0"] = {"atoms": [{"cell": 1, "weight": 0.5}, {"cell": 6, "weight": 0.5}]}
    assert main(["optimal-curves", "--config", write_config(tmp_path, cfg)]) == 0
    xi = read_measure_jsonl(out / "curves.jsonl")
    assert xi.n_atoms == 2
    assert (out / "curve_00001.csv").is_file()
    assert (out / "curve_00006.csv").is_file()
    cert = read_json(out / "certificate.json")
    assert abs(cert["certificate_gap"]) <= 1e-10


def test_cli_cost_matrix_artifacts(tmp_path):
    out = tmp_path / "cm"
    cfg = small_mfg_config(out)
    assert main(["cost-matrix", "--config", write_config(tmp_path, cfg)]) == 0
    meta = read_json(out / "metadata.json")
    assert meta["unreachable_pairs"] == 0
    from mfg_torus.io import read_cost_matrix_csv
    entries = read_cost_matrix_csv(out / "cost_matrix.csv")
    assert entries.shape == (8, 8)
    assert np.all(entries < 1e8)


def test_cli_mfg_artifacts_and_verify_round_trip(tmp_path):
    out = tmp_path / "mfg"
    cfg = small_mfg_config(out)
    path = write_config(tmp_path, cfg)
    assert main(["mfg", "--config", path]) == 0
    report = read_json(out / "report.json")
    assert report["status"] == "converged"
    assert report["residual"] <= 1e-3
    assert (out / "history.jsonl").is_file()
    assert (out / "equilibrium.jsonl").is_file()
    assert (out / "residual_history.png").is_file()

    vout = tmp_path / "verify"
    code = main(["verify", "--config", path, "--report", str(out),
                 "--out", str(vout)])
    assert code == 0
    verdict = read_json(vout / "verify.json")
    assert verdict["mismatches"] == []
    assert verdict["value_field_max_gap"] <= 1e-9


def test_cli_verify_flags_tampered_report(tmp_path):
    out = tmp_path / "mfg"
    cfg = small_mfg_config(out)
    path = write_config(tmp_path, cfg)
    assert main(["mfg", "--config", path]) == 0
    report = read_json(out / "report.json")
    report["action_integral"] += 1e-6
    write_json(report, out / "report.json")
    code = main(["verify", "--config", path, "--report", str(out),
                 "--out", str(tmp_path / "v")])
    assert code == 1


def test_cli_verify_rejects_dimension_mismatch(tmp_path, capsys):
    out = tmp_path / "mfg"
    cfg = small_mfg_config(out)
    assert main(["mfg", "--config", write_config(tmp_path, cfg)]) == 0
    other = small_mfg_config(tmp_path / "other")
    other["grid"]["n_x"] = 16
    code = main(["verify", "--config", write_config(tmp_path, other, "o.json"),
                 "--report", str(out), "--out", str(tmp_path / "v")])
    assert code == 1
    assert "dimension mismatch" in capsys.readouterr().err


def test_cli_verify_missing_artifacts(tmp_path):
    cfg = small_mfg_config(tmp_path / "none")
    code = main(["verify", "--config", write_config(tmp_path, cfg),
                 "--report", str(tmp_path / "empty"),
                 "--out", str(tmp_path / "v")])
    assert code == 1


def test_cli_mfg_with_zero_iterations(tmp_path):
    out = tmp_path / "zero_iter"
    cfg = small_mfg_config(out)
    cfg["solver"]["max_iter"] = 0
    assert main(["mfg", "--config", write_config(tmp_path, cfg)]) == 0
    report = read_json(out / "report.json")
    assert report["status"] == "no-convergence"
    assert report["residual"] is None
    assert (out / "history.jsonl").read_text() == ""


def test_cli_byte_determinism(tmp_path):
    cfg_a = small_mfg_config(tmp_path / "a")
    cfg_b = small_mfg_config(tmp_path / "b")
    assert main(["mfg", "--config", write_config(tmp_path, cfg_a, "a.json")]) == 0
    assert main(["mfg", "--config", write_config(tmp_path, cfg_b, "b.json")]) == 0
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    for name in names:
        if name == "config.echo.json":
            continue  # echoes differ in the output directory itself
        match, mismatch, errors = filecmp.cmpfiles(
            tmp_path / "a", tmp_path / "b", [name], shallow=False)
        assert match == [name], f"{name} differs between identical runs"


def test_cli_out_flag_overrides_config(tmp_path):
    cfg = small_mfg_config(tmp_path / "ignored")
    out = tmp_path / "actual"
    assert main(["solve-hj", "--config", write_config(tmp_path, cfg),
                 "--out", str(out)]) == 0
    assert (out / "value_field.csv").is_file()
    assert not (tmp_path / "ignored").exists()


def test_cli_resolution_scale_flag(tmp_path):
    out = tmp_path / "scaled"
    cfg = small_mfg_config(out)
    assert main(["solve-hj", "--config", write_config(tmp_path, cfg),
                 "--resolution-scale", "2"]) == 0
    values, _ = read_value_field_csv(out / "value_field.csv")
    assert values.shape == (16, 9)
    assert read_json(out / "metadata.json")["resolution_scale"] == 2


def test_cli_threads_from_environment(tmp_path, monkeypatch):
    out = tmp_path / "threaded"
    cfg = small_mfg_config(out)
    path = write_config(tmp_path, cfg)
    monkeypatch.setenv("MFG_TORUS_THREADS", "3")
    assert main(["cost-matrix", "--config", path]) == 0
    assert read_json(out / "metadata.json")["threads"] == 3
    monkeypatch.setenv("MFG_TORUS_THREADS", "zebra")
    assert main(["cost-matrix", "--config", path]) == 2
    monkeypatch.setenv("MFG_TORUS_THREADS", "0")
    assert main(["cost-matrix", "--config", path]) == 2


def test_cli_config_errors_exit_two(tmp_path, capsys):
    assert main(["solve-hj", "--config", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["solve-hj", "--config", str(bad)]) == 2
    unknown = write_config(tmp_path, {"grid": minimal_grid(), "extra": 1},
                           "unknown.json")
    assert main(["solve-hj", "--config", unknown]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["solve-hj", "--config", unknown, "--threads", "0"]) == 2


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])


def test_cli_fenchel_sweep_flags_fire_exactly(tmp_path):
    out = tmp_path / "fenchel"
    cfg = {
        "grid": minimal_grid(8, 4),
        "model": {
            "f": [{"amp": 0.2, "k": [1], "phase": 0.5}],
            "kappa": [{"amp": 0.5, "k": [1], "phase": 0.0}],
            "c_F": 0.1,
            "g_base": [{"amp": 0.5, "k": [2], "phase": 0.0}],
        },
        "mu0": {"atoms": [{"cell": 2, "weight": 0.5}, {"cell": 5, "weight": 0.5}]},
        "output": {"directory": str(out), "formats": ["json", "png"]},
    }
    assert main(["fenchel-sweep", "--config", write_config(tmp_path, cfg)]) == 0
    sweep = read_json(out / "fenchel.json")
    assert len(sweep["unbounded_flags"]) == 12
    for row in sweep["unbounded_flags"]:
        assert row["fired"] == row["expected"], row
    assert sweep["nonincreasing"] is True
    assert sweep["final_gap"] <= 1e-12
    assert (out / "fenchel.png").is_file()


def test_cli_continuity_check_artifacts(tmp_path):
    out = tmp_path / "cont"
    cfg = small_mfg_config(out)
    assert main(["continuity-check", "--config", write_config(tmp_path, cfg)]) == 0
    payload = read_json(out / "continuity.json")
    assert abs(payload["residuals"]["1*1"]) <= 1e-12
    assert abs(payload["residuals"]["1*t"]) <= 1e-12
    grid_dx_over_dt = (1.0 / 8.0) / (1.0 / 4.0)
    assert payload["collision_gap"] <= 2.0 * grid_dx_over_dt + 1e-9
    assert payload["sample_count"] == 8 * 4
    assert len(payload["sample_gaps"]) == payload["sample_count"]
