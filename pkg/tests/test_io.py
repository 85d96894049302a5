"""Bit-stable artifact emission and re-import."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfg_torus import AtomicTorusMeasure, CurveMeasure, DiscreteCurve, MFGTorusError
from mfg_torus.io import (
    dumps_json,
    format_float,
    read_cost_matrix_csv,
    read_eval_curve_csv,
    read_json,
    read_measure_jsonl,
    read_value_field_csv,
    write_cost_matrix_csv,
    write_csv,
    write_curve_csv,
    write_eval_curve_csv,
    write_json,
    write_measure_jsonl,
    write_value_field_csv,
)

from .conftest import solved_benchmark


# ---------------------------------------------------------------------------
# float formatting


def test_format_float_known_values():
    assert format_float(0.0) == "0"
    assert format_float(1.0) == "1"
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(-2.5e-3) == "-0.0025000000000000001"


def test_format_float_rejects_nonfinite():
    for bad in (np.inf, -np.inf, np.nan):
        with pytest.raises(MFGTorusError):
            format_float(bad)


@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_format_float_round_trips(x):
    assert float(format_float(x)) == x


# ---------------------------------------------------------------------------
# canonical JSON


def test_dumps_json_sorts_keys_and_is_stable():
    a = dumps_json({"b": 1, "a": [1.5, {"z": True, "y": None}]})
    b = dumps_json({"a": [1.5, {"y": None, "z": True}], "b": 1})
    assert a == b
    assert a.startswith('{\n  "a"')
    assert a.endswith("}\n")


def test_dumps_json_rejects_nonstring_keys_and_unknown_types():
    with pytest.raises(MFGTorusError):
        dumps_json({1: "x"})
    with pytest.raises(MFGTorusError):
        dumps_json({"x": object()})


def test_json_file_round_trip(tmp_path):
    payload = {"name": "run", "values": [1.0, 0.25, -3.5], "n": 4, "flag": False,
               "nested": {"empty_list": [], "empty_map": {}, "none": None}}
    path = tmp_path / "payload.json"
    write_json(payload, path)
    assert read_json(path) == payload
    # re-emitting the parsed object reproduces the bytes
    first = path.read_bytes()
    write_json(read_json(path), path)
    assert path.read_bytes() == first


# ---------------------------------------------------------------------------
# value fields


def test_value_field_csv_round_trip(tmp_path):
    tables, eval_curve, vf, xi = solved_benchmark(16)
    path = tmp_path / "value_field.csv"
    write_value_field_csv(vf, path)
    values, successor = read_value_field_csv(path)
    assert np.array_equal(values, vf.values)
    assert np.array_equal(successor, vf.successor)
    text = path.read_text()
    assert text.splitlines()[0] == "k,t_k,i,x_0,v,successor"
    assert "\r" not in text


def test_value_field_csv_rejects_truncation(tmp_path):
    tables, eval_curve, vf, xi = solved_benchmark(16)
    path = tmp_path / "value_field.csv"
    write_value_field_csv(vf, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(MFGTorusError):
        read_value_field_csv(path)


def test_value_field_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "value_field.csv"
    path.write_text("a,b,c\n")
    with pytest.raises(MFGTorusError):
        read_value_field_csv(path)


# ---------------------------------------------------------------------------
# measures


def test_curve_measure_jsonl_round_trip(tmp_path):
    xi = CurveMeasure.from_atoms(
        [DiscreteCurve(np.array([0, 1, 2])), DiscreteCurve(np.array([4, 4, 3]))],
        [0.375, 0.625])
    path = tmp_path / "measure.jsonl"
    write_measure_jsonl(xi, path)
    back = read_measure_jsonl(path)
    assert isinstance(back, CurveMeasure)
    assert [c.key() for c in back.curves] == [c.key() for c in xi.curves]
    assert np.array_equal(back.weights, xi.weights)


def test_atomic_measure_jsonl_round_trip(tmp_path):
    mu = AtomicTorusMeasure.from_atoms([2, 7, 5], [0.2, 0.3, 0.5])
    path = tmp_path / "mu.jsonl"
    write_measure_jsonl(mu, path)
    back = read_measure_jsonl(path)
    assert isinstance(back, AtomicTorusMeasure)
    assert np.array_equal(back.cells, mu.cells)
    assert np.array_equal(back.weights, mu.weights)


def test_measure_jsonl_rejects_mixed_atoms(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"nodes": [0, 1], "weight": 0.5}\n'
                    '{"cell": 3, "weight": 0.5}\n')
    with pytest.raises(MFGTorusError):
        read_measure_jsonl(path)


def test_measure_jsonl_rejects_unknown_object(tmp_path):
    with pytest.raises(MFGTorusError):
        write_measure_jsonl({"not": "a measure"}, tmp_path / "x.jsonl")


# ---------------------------------------------------------------------------
# evaluation curves and cost matrices


def test_eval_curve_csv_round_trip(tmp_path):
    tables, eval_curve, vf, xi = solved_benchmark(16)
    table = xi.evaluation_curve(tables.grid.n_cells)
    path = tmp_path / "eval_curve.csv"
    write_eval_curve_csv(table, tables.grid, path)
    back = read_eval_curve_csv(path, tables.grid.n_t, tables.grid.n_cells)
    assert np.array_equal(back.weights, table.weights)


def test_eval_curve_csv_rejects_out_of_grid(tmp_path):
    path = tmp_path / "eval.csv"
    path.write_text("k,t_k,cell,weight\n0,0,99,1\n")
    with pytest.raises(MFGTorusError):
        read_eval_curve_csv(path, n_t=2, n_cells=8)


def test_cost_matrix_csv_round_trip(tmp_path):
    gen = np.random.default_rng(5)
    entries = gen.normal(size=(6, 6))
    path = tmp_path / "cost.csv"
    write_cost_matrix_csv(entries, path)
    assert np.array_equal(read_cost_matrix_csv(path), entries)


def test_curve_csv_layout(tmp_path):
    tables, eval_curve, vf, xi = solved_benchmark(16)
    path = tmp_path / "curve.csv"
    write_curve_csv(xi.curves[0], tables.grid, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,t_k,cell,x_0"
    assert len(lines) == tables.grid.n_t + 2
    first = lines[1].split(",")
    assert first[0] == "0" and int(first[2]) == xi.curves[0].start


def test_write_csv_mixed_types(tmp_path):
    path = tmp_path / "rows.csv"
    write_csv(path, ["a", "b", "c"], [[1, 0.5, "x"], [2, 0.25, "y"]])
    assert path.read_text() == "a,b,c\n1,0.5,x\n2,0.25,y\n"


def test_writers_create_parent_directories(tmp_path):
    nested = tmp_path / "deep" / "deeper" / "out.json"
    write_json({"ok": True}, nested)
    assert read_json(nested) == {"ok": True}
