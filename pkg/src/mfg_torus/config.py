"""Run configuration: schema validation, default materialization, echoing.

A run is described by one JSON file with four blocks (grid, model, mu0,
solver) plus an output block.  Validation is strict: unknown keys are
rejected anywhere in the tree, so a typo cannot silently fall back to a
default.  After validation every optional field is materialized, and the
materialized config is what gets echoed into the output directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import jsonschema

from .errors import ConfigError
from .measures import AtomicTorusMeasure
from .models import ModelSpec
from .torus import TorusGrid

_COEFF_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "amp": {"type": "number"},
            "k": {
                "type": "array",
                "items": {"type": "integer"},
                "minItems": 1,
                "maxItems": 2,
            },
            "phase": {"type": "number"},
        },
        "required": ["amp", "k"],
        "additionalProperties": False,
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "grid": {
            "type": "object",
            "properties": {
                "dim": {"type": "integer", "enum": [1, 2]},
                "n_x": {"type": "integer", "minimum": 2},
                "n_t": {"type": "integer", "minimum": 1},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "q_max": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
            "required": ["dim", "n_x", "n_t", "T"],
            "additionalProperties": False,
        },
        "model": {
            "type": "object",
            "properties": {
                "r": {"type": "number", "exclusiveMinimum": 1},
                "eps0": {"type": "number", "exclusiveMinimum": 0},
                "f": _COEFF_SCHEMA,
                "kappa": _COEFF_SCHEMA,
                "kappa_g": _COEFF_SCHEMA,
                "g_base": _COEFF_SCHEMA,
                "c_F": {"type": "number"},
                "c_g": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "mu0": {
            "type": "object",
            "properties": {
                "uniform": {"type": "boolean"},
                "atoms": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "cell": {"type": "integer", "minimum": 0},
                            "weight": {"type": "number", "exclusiveMinimum": 0},
                        },
                        "required": ["cell", "weight"],
                        "additionalProperties": False,
                    },
                    "minItems": 1,
                },
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "directory": {"type": "string", "minLength": 1},
                "formats": {
                    "type": "array",
                    "items": {"type": "string", "enum": ["csv", "json", "png"]},
                    "uniqueItems": True,
                },
            },
            "additionalProperties": False,
        },
    },
    "required": ["grid"],
    "additionalProperties": False,
}

_MODEL_DEFAULTS = {
    "r": 2.0,
    "eps0": 0.5,
    "f": [],
    "kappa": [],
    "kappa_g": [],
    "g_base": [],
    "c_F": 0.0,
    "c_g": 0.0,
}

_SOLVER_DEFAULTS = {"alpha": 0.5, "tol": 1e-3, "max_iter": 50, "seed": 0}

_OUTPUT_DEFAULTS = {"directory": "out", "formats": ["csv", "json", "png"]}


def _coeff_defaults(terms):
    return [
        {"amp": float(t["amp"]), "k": [int(v) for v in t["k"]],
         "phase": float(t.get("phase", 0.0))}
        for t in terms
    ]


@dataclass(frozen=True)
class RunConfig:
    """A validated run description with all defaults materialized."""

    grid: TorusGrid
    q_max: float | None
    model: ModelSpec
    mu0: AtomicTorusMeasure
    alpha: float
    tol: float
    max_iter: int
    seed: int
    out_dir: str
    formats: tuple

    def echo(self) -> dict:
        """The fully materialized config, suitable for byte-stable emission."""
        model_cfg = self.model.to_config()
        del model_cfg["dim"]
        return {
            "grid": {
                "dim": self.grid.dim,
                "n_x": self.grid.n_x,
                "n_t": self.grid.n_t,
                "T": self.grid.horizon,
                "q_max": self.q_max,
            },
            "model": model_cfg,
            "mu0": {
                "uniform": False,
                "atoms": [
                    {"cell": int(c), "weight": float(w)}
                    for c, w in zip(self.mu0.cells, self.mu0.weights)
                ],
            },
            "solver": {
                "alpha": self.alpha,
                "tol": self.tol,
                "max_iter": self.max_iter,
                "seed": self.seed,
            },
            "output": {
                "directory": self.out_dir,
                "formats": list(self.formats),
            },
        }


def _schema_error_message(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    where = f"config.{path}" if path else "config"
    return f"{where}: {err.message}"


def parse_config(raw: dict, path="<config>") -> RunConfig:
    """Validate a parsed JSON object and build the run objects."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError(f"{path}: " + "; ".join(_schema_error_message(e) for e in errors))

    grid_cfg = raw["grid"]
    grid = TorusGrid(
        dim=int(grid_cfg["dim"]),
        n_x=int(grid_cfg["n_x"]),
        n_t=int(grid_cfg["n_t"]),
        horizon=float(grid_cfg["T"]),
    )
    q_max = grid_cfg.get("q_max")
    q_max = None if q_max is None else float(q_max)

    model_cfg = dict(_MODEL_DEFAULTS)
    model_cfg.update(raw.get("model", {}))
    for key in ("f", "kappa", "kappa_g", "g_base"):
        model_cfg[key] = _coeff_defaults(model_cfg[key])
        for term in model_cfg[key]:
            if len(term["k"]) != grid.dim:
                raise ConfigError(
                    f"{path}: config.model.{key}: frequency vector {term['k']} "
                    f"does not match dim {grid.dim}")
    model = ModelSpec.from_config({"dim": grid.dim, **model_cfg})

    mu0_cfg = raw.get("mu0", {"uniform": True})
    if mu0_cfg.get("uniform") and "atoms" in mu0_cfg:
        raise ConfigError(f"{path}: config.mu0: give either uniform or atoms, not both")
    if mu0_cfg.get("uniform", False) or "atoms" not in mu0_cfg:
        mu0 = AtomicTorusMeasure.uniform(grid.n_cells)
    else:
        cells = [a["cell"] for a in mu0_cfg["atoms"]]
        weights = [a["weight"] for a in mu0_cfg["atoms"]]
        if any(c >= grid.n_cells for c in cells):
            raise ConfigError(
                f"{path}: config.mu0.atoms: cell index outside the {grid.n_cells}-cell grid")
        total = float(sum(weights))
        mu0 = AtomicTorusMeasure.from_atoms(cells, [w / total for w in weights])

    solver = dict(_SOLVER_DEFAULTS)
    solver.update(raw.get("solver", {}))
    output = dict(_OUTPUT_DEFAULTS)
    output.update(raw.get("output", {}))

    return RunConfig(
        grid=grid,
        q_max=q_max,
        model=model,
        mu0=mu0,
        alpha=float(solver["alpha"]),
        tol=float(solver["tol"]),
        max_iter=int(solver["max_iter"]),
        seed=int(solver["seed"]),
        out_dir=str(output["directory"]),
        formats=tuple(output["formats"]),
    )


def load_config(path, resolution_scale=1) -> RunConfig:
    """Read, validate, and optionally refine a config file.

    ``resolution_scale`` multiplies n_x and n_t, keeping everything else
    fixed; it exists for refinement studies driven from one base file.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if resolution_scale != 1:
        if not isinstance(resolution_scale, int) or resolution_scale < 1:
            raise ConfigError("resolution scale must be a positive integer")
        grid_cfg = dict(raw.get("grid", {}))
        if "n_x" in grid_cfg:
            grid_cfg["n_x"] = grid_cfg["n_x"] * resolution_scale
        if "n_t" in grid_cfg:
            grid_cfg["n_t"] = grid_cfg["n_t"] * resolution_scale
        raw = {**raw, "grid": grid_cfg}
        if "mu0" in raw and "atoms" in raw.get("mu0", {}):
            raise ConfigError(
                "resolution scaling is only supported with a uniform mu0 "
                "(atom cells do not transfer between grids)")
    return parse_config(raw, path=str(path))
