import json
import os
import subprocess
import sys

import pytest

from resdiv import cli


def write(tmp_path, obj, name="p.json"):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


REPRO = {"version": "1", "task": "reproduce", "n": 1, "max_degree": 2, "points": [[[0.1, 0.05]], [[-0.2, 0.0]]],
         "tolerances": {"rel_error": 1e-8}}


def test_missing_task_points_at_key(tmp_path, capsys):
    bad = dict(REPRO)
    del bad["task"]
    assert cli.main([write(tmp_path, bad)]) == cli.EXIT_INPUT
    assert "/task" in capsys.readouterr().err
    with pytest.raises(cli.InputError) as info:
        cli.validate(bad)
    assert info.value.pointer == "/task"


def test_schema_violation_pointer_is_nested():
    bad = json.loads(json.dumps(REPRO))
    bad["points"][1][0] = "oops"
    with pytest.raises(cli.InputError) as info:
        cli.validate(bad)
    assert info.value.pointer.startswith("/points/1")


def test_unreadable_and_malformed_files(tmp_path):
    assert cli.main([str(tmp_path / "missing.json")]) == cli.EXIT_INPUT
    assert cli.main([write(tmp_path, "{not json")]) == cli.EXIT_INPUT
    assert cli.main(["builtin:no-such-problem"]) == cli.EXIT_INPUT


def test_list_builtins(capsys):
    names = {b["name"] for b in cli.list_builtins()}
    assert {"koszul2-holomorphic", "counterexample-one-third", "cauchy-disc-reproduction"} <= names
    assert cli.main(["--list-builtins"]) == 0
    assert "koszul2-holomorphic" in capsys.readouterr().out


@pytest.mark.parametrize("name", [b["name"] for b in cli.list_builtins()])
def test_builtins_validate_and_normalize_idempotently(name):
    prob = cli.load_problem(f"builtin:{name}")
    cli.validate(prob)
    once = cli.normalize_problem(prob)
    assert cli.normalize_problem(once) == once


def test_normalize_expands_degree(capsys):
    norm = cli.normalize_problem(REPRO)
    assert norm["monomials"] == [[0], [1], [2]]
    assert cli.main(["builtin:cauchy-disc-reproduction", "--normalize"]) == 0
    assert json.loads(capsys.readouterr().out)["task"] == "reproduce"


def test_report_is_deterministic_and_thread_independent(tmp_path):
    path = write(tmp_path, REPRO)
    a = cli.run(cli.load_problem(path))
    b = cli.run(cli.load_problem(path))
    c = cli.run(cli.load_problem(path), threads=4)
    assert cli.dumps(cli.comparable(a)) == cli.dumps(cli.comparable(b)) == cli.dumps(cli.comparable(c))
    assert set(a) == {"format", "resdiv", "task", "name", "passed", "checks", "results", "problem", "timings"}


def test_report_file_and_pass_exit(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert cli.main([write(tmp_path, REPRO), "--report", str(out)]) == cli.EXIT_PASS
    rep = json.loads(out.read_text())
    assert rep["passed"] and rep["checks"]
    text = capsys.readouterr().out
    assert "PASS" in text and "timings" in text


def test_failing_check_exit(tmp_path):
    tight = dict(REPRO, tolerances={"rel_error": 1e-30})
    assert cli.main([write(tmp_path, tight)]) == cli.EXIT_FAIL


def test_numeric_abort_exit(tmp_path, capsys):
    prob = {"version": "1", "task": "divide", "n": 1,
            "generators": [[{"re": 1, "im": 0, "zexp": [1], "zbarexp": [0]}]], "level": 0,
            "phi": [{"expr": ["recip", ["z", 0]]}], "points": [[[0.0, 0.0]]], "tolerances": {"residual": 1e-3}}
    assert cli.main([write(tmp_path, prob)]) == cli.EXIT_NUMERIC
    assert "division by zero" in capsys.readouterr().err


def test_expression_parser():
    import numpy as np
    from resdiv import symbolic as sym
    e = cli.parse_expr(["add", ["mul", ["z", 0], ["zbar", 1]], ["pow", ["const", 0, 1], 2], 3], 2)
    v = sym.evaluate(e, sym.bind([np.array([2.0]), np.array([1j])]))
    assert np.allclose(v, 2 * -1j - 1 + 3)
    with pytest.raises(cli.InputError) as info:
        cli.parse_expr(["frobnicate", 1], 1, "/phi/0/expr")
    assert info.value.pointer.startswith("/phi/0/expr")


def test_debug_nodes_flag(tmp_path):
    dump = tmp_path / "nodes.txt"
    assert cli.main([write(tmp_path, REPRO), "--debug-nodes", str(dump)]) == 0
    assert dump.stat().st_size > 0


def test_console_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "resdiv.cli", "builtin:counterexample-one-third"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "PASS" in r.stdout


@pytest.mark.parametrize("name", ["extension-suite", "residue-pairings"])
def test_reports_identical_across_processes(name):
    code = ("import json; from resdiv import cli; "
            f"print(cli.dumps(cli.comparable(cli.run(cli.load_problem('builtin:{name}')))))")
    outs = []
    for seed in ("1", "2"):
        env = {**os.environ, "PYTHONHASHSEED": seed}
        r = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
        assert r.returncode == 0, r.stderr
        outs.append(r.stdout)
    assert outs[0] == outs[1]
