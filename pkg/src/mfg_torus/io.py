"""Bit-stable emission and re-import of run artifacts.

Every number is written with 17 significant digits so a re-read followed by a
re-emit reproduces the file byte for byte.  Writers sort nothing on their own:
the objects they receive already carry canonical orderings (ascending cells,
ascending time indices), so identical inputs yield identical bytes.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import MFGTorusError
from .measures import (
    AtomicTorusMeasure,
    CurveMeasure,
    DiscreteCurve,
    EvaluationCurveTable,
)


def format_float(x) -> str:
    """Render one float with 17 significant digits.

    float(format_float(x)) == x for every finite double, which is what the
    re-verification path relies on.
    """
    x = float(x)
    if not np.isfinite(x):
        raise MFGTorusError("artifacts must contain finite numbers only")
    return "%.17g" % x


def _emit(obj, indent):
    pad = " " * indent
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [_emit(v, indent + 2) for v in obj]
        inner = ",\n".join(pad + "  " + s for s in items)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise MFGTorusError("JSON artifact keys must be strings")
            parts.append(pad + "  " + json.dumps(key) + ": " + _emit(obj[key], indent + 2))
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    raise MFGTorusError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj) -> str:
    """Canonical JSON text: sorted keys, two-space indent, 17-digit floats."""
    return _emit(obj, 0) + "\n"


def write_json(obj, path):
    _write_text(path, dumps_json(obj))


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _cell_text(value):
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell_text(v) for v in row))
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# value fields


def write_value_field_csv(vf, path):
    """Rows (k, t_k, i, x components, v, successor); successor -1 at k=n_t."""
    grid = vf.grid
    header = ["k", "t_k", "i"] + [f"x_{d}" for d in range(grid.dim)] + ["v", "successor"]
    centers = grid.centers
    rows = []
    for k in range(grid.n_t + 1):
        t_k = grid.times[k]
        for i in range(grid.n_cells):
            succ = int(vf.successor[i, k]) if k < grid.n_t else -1
            rows.append([k, t_k, i] + list(centers[i]) + [vf.values[i, k], succ])
    write_csv(path, header, rows)


def read_value_field_csv(path):
    """Return (values, successor) arrays from a value-field export."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MFGTorusError(f"{path}: empty value-field file")
    header = lines[0].split(",")
    if header[:3] != ["k", "t_k", "i"] or header[-2:] != ["v", "successor"]:
        raise MFGTorusError(f"{path}: unexpected value-field header")
    ks, cells, vals, succ = [], [], [], []
    for line in lines[1:]:
        parts = line.split(",")
        ks.append(int(parts[0]))
        cells.append(int(parts[2]))
        vals.append(float(parts[-2]))
        succ.append(int(parts[-1]))
    n_t = max(ks)
    n_cells = max(cells) + 1
    if len(vals) != (n_t + 1) * n_cells:
        raise MFGTorusError(f"{path}: incomplete value-field table")
    values = np.empty((n_cells, n_t + 1))
    successor = np.empty((n_cells, n_t), dtype=np.int64)
    for k, i, v, s in zip(ks, cells, vals, succ):
        values[i, k] = v
        if k < n_t:
            successor[i, k] = s
    return values, successor


# ---------------------------------------------------------------------------
# curves and measures


def write_curve_csv(curve: DiscreteCurve, grid, path):
    """One curve as rows (k, t_k, cell, x components)."""
    header = ["k", "t_k", "cell"] + [f"x_{d}" for d in range(grid.dim)]
    centers = grid.centers
    rows = []
    for k, cell in enumerate(curve.nodes):
        rows.append([k, grid.times[k], int(cell)] + list(centers[cell]))
    write_csv(path, header, rows)


def write_measure_jsonl(measure, path):
    """One atom per line: curve atoms carry nodes, point atoms carry a cell."""
    lines = []
    if isinstance(measure, CurveMeasure):
        for curve, w in zip(measure.curves, measure.weights):
            lines.append(
                '{"nodes": [' + ", ".join(str(int(c)) for c in curve.nodes)
                + '], "weight": ' + format_float(w) + "}"
            )
    elif isinstance(measure, AtomicTorusMeasure):
        for cell, w in zip(measure.cells, measure.weights):
            lines.append('{"cell": %d, "weight": %s}' % (int(cell), format_float(w)))
    else:
        raise MFGTorusError(f"cannot export {type(measure).__name__} as JSONL")
    _write_text(path, "\n".join(lines) + "\n")


def read_measure_jsonl(path):
    """Rebuild a CurveMeasure or AtomicTorusMeasure from a JSONL export."""
    curves, cells, weights = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            atom = json.loads(line)
            weights.append(float(atom["weight"]))
            if "nodes" in atom:
                curves.append(DiscreteCurve(tuple(int(c) for c in atom["nodes"])))
            else:
                cells.append(int(atom["cell"]))
    if curves and cells:
        raise MFGTorusError(f"{path}: mixed curve and point atoms")
    if curves:
        return CurveMeasure.from_atoms(curves, weights)
    return AtomicTorusMeasure.from_atoms(cells, weights)


def write_eval_curve_csv(table: EvaluationCurveTable, grid, path):
    """Sparse slice export: rows (k, t_k, cell, weight), zero weights skipped."""
    rows = []
    for k in range(table.weights.shape[0]):
        t_k = grid.times[k]
        for cell in np.nonzero(table.weights[k])[0]:
            rows.append([k, t_k, int(cell), table.weights[k, cell]])
    write_csv(path, ["k", "t_k", "cell", "weight"], rows)


def read_eval_curve_csv(path, n_t, n_cells):
    weights = np.zeros((n_t + 1, n_cells))
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for line in lines[1:]:
        parts = line.split(",")
        k, cell, w = int(parts[0]), int(parts[2]), float(parts[3])
        if k > n_t or cell >= n_cells:
            raise MFGTorusError(f"{path}: slice entry outside the declared grid")
        weights[k, cell] = w
    return EvaluationCurveTable(weights)


# ---------------------------------------------------------------------------
# cost matrices


def write_cost_matrix_csv(entries, path):
    """Dense matrix, one row per line, 17-digit entries."""
    lines = [",".join(format_float(v) for v in row) for row in np.asarray(entries)]
    _write_text(path, "\n".join(lines) + "\n")


def read_cost_matrix_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    return np.array([[float(v) for v in ln.split(",")] for ln in lines])
