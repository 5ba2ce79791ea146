import json
import subprocess
import sys

import numpy as np
import pytest

from ratdesign.cli import main
from ratdesign.modelfile import shipped_models


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def noint_result(tmp_path_factory):
    path = tmp_path_factory.mktemp("res") / "noint.json"
    assert main(["solve", "noint_e8", "--emit", str(path), "--quiet"]) == 0
    return path


# --------------------------------------------------------------------------
# bound


@pytest.mark.parametrize(
    "name, expected",
    [
        ("radiation_e", "k1 = 0  k2 = 1  d_den = 12  d = 12  bound = 7"),
        ("poly_d3", "k1 = 0  k2 = 1  d_den = 0  d = 6  bound = 4"),
        ("cubic_union_d", "k1 = 1  k2 = 1  d_den = 0  d = 6  bound = 4"),
    ],
)
def test_bound(capsys, name, expected):
    code, out, _ = run_cli(capsys, "bound", name)
    assert code == 0
    assert out.splitlines()[0] == expected


# --------------------------------------------------------------------------
# solve and verify


def test_solve_then_verify_closed_loop(capsys, noint_result):
    doc = json.loads(noint_result.read_text())
    assert doc["exit_code"] == 0
    assert len(doc["support"]) == 8
    assert doc["verification"]["passed"]
    code, out, _ = run_cli(capsys, "verify", "noint_e8", noint_result)
    assert code == 0
    assert "PASS" in out


def test_perturbed_weight_fails_check_c(capsys, tmp_path):
    # check (c) is absolute at 1e-5 (1 + |y|), so use a model whose value is of order one
    path = tmp_path / "d3.json"
    assert main(["solve", "poly_d3", "--emit", str(path), "--quiet"]) == 0
    doc = json.loads(path.read_text())
    w = np.array(doc["weights"])
    w[0] += 0.02
    w[1] -= 0.02
    doc["weights"] = w.tolist()
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, out, _ = run_cli(capsys, "verify", "poly_d3", bad)
    assert code == 1
    assert "FAIL" in out
    line = next(s for s in out.splitlines() if s.strip().startswith("(c)"))
    assert "FAIL" in line


def test_zero_weight_point_is_accepted(capsys, noint_result, tmp_path):
    doc = json.loads(noint_result.read_text())
    doc["support"].append(0.1)
    doc["weights"].append(0.0)
    extra = tmp_path / "extra.json"
    extra.write_text(json.dumps(doc))
    code, out, _ = run_cli(capsys, "verify", "noint_e8", extra)
    assert code == 0
    assert "dropped 1 support point" in out


def test_verify_rejects_mismatched_model(capsys, noint_result):
    code, _, err = run_cli(capsys, "verify", "poly_d3", noint_result)
    assert code == 1
    assert "usage error" in err


def test_solve_output_is_deterministic(tmp_path):
    docs = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        assert main(["solve", "radiation_e", "--emit", str(path), "--quiet"]) == 0
        doc = json.loads(path.read_text())
        doc.pop("timing")
        for stats in (doc["solver"], doc["solver"].get("rescaled") or {}):
            stats.pop("seconds", None)
        docs.append(doc)
    assert docs[0] == docs[1]


def test_degenerate_exit_code(capsys):
    # a scale of 1 leaves the zero support polynomial optimal
    code, out, _ = run_cli(capsys, "solve", "zeropoly_e", "--rescale-lambda", 1)
    assert code == 2
    assert "degenerate" in out
    code, _, _ = run_cli(capsys, "solve", "zeropoly_e")
    assert code == 0


def test_iteration_limit_is_a_failure(capsys):
    code, out, _ = run_cli(capsys, "solve", "zeropoly_e", "--max-iters", 2)
    assert code == 1
    assert "IterLimit" in out


# --------------------------------------------------------------------------
# oracle, linearize, list, errors


def test_oracle_against_pipeline(capsys, noint_result):
    code, out, _ = run_cli(capsys, "oracle", "noint_e8", "--against", noint_result, "--grid", 201)
    assert code == 0
    assert out.rstrip().endswith("agree")


def test_oracle_grid_too_small(capsys):
    code, _, err = run_cli(capsys, "oracle", "poly_d2", "--grid", 1)
    assert code == 1
    assert "usage error" in err and "--grid" in err


def test_linearize_emits_model_file(capsys, tmp_path):
    path = tmp_path / "lin.json"
    code, _, _ = run_cli(capsys, "linearize", "emax_d", "--emit", path, "--quiet")
    assert code == 0
    doc = json.loads(path.read_text())
    assert len(doc["basis"]) == 3 and "nonlinear" not in doc
    code, out, _ = run_cli(capsys, "bound", path)
    assert code == 0 and "bound" in out
    code, _, err = run_cli(capsys, "linearize", "poly_d2")
    assert code == 1 and "nonlinear" in err


def test_list(capsys):
    code, out, _ = run_cli(capsys, "list")
    assert code == 0
    assert out.split() == shipped_models()


def test_model_file_error_is_located(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "space": [[-1, 1]],\n  "basis": ["t", "t +* 2"],\n  "criterion": "E"\n}\n')
    code, _, err = run_cli(capsys, "solve", bad)
    assert code == 1
    assert f"{bad}:3:22" in err


def test_usage_errors(capsys):
    assert run_cli(capsys, "frobnicate")[0] == 1
    assert run_cli(capsys, "solve", "no_such_model")[0] == 1
    assert run_cli(capsys, "solve")[0] == 1


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "ratdesign.cli", "list"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "noint_e8" in out.stdout.split()
