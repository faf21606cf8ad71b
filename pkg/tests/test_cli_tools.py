import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from clifmorse.cli_tools import (
    EXIT_CONVERGENCE,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VALIDATION,
    RunConfig,
    run_subcommand,
    write_loop,
)
from clifmorse.errors import ValidationError


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_subcommand(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture()
def family_file(tmp_path):
    code, text, _ = run("clifford", "build", "--n", "3")
    assert code == EXIT_OK
    path = tmp_path / "fam.json"
    path.write_text(text)
    return path


def test_clifford_build_and_check(family_file):
    code, text, _ = run("clifford", "check", "--family", str(family_file))
    data = json.loads(text)
    assert code == EXIT_OK and data["valid"] and data["p"] == 4
    assert data["volume_square_sign"] == 1


def test_clifford_check_invalid(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mats": [np.diag([1.0, 1.0]).tolist()]}))
    code, _, err = run("clifford", "check", "--family", str(bad))
    assert code == EXIT_VALIDATION and "malformed" in err
    bad.write_text(json.dumps({"p": 2, "mats": [np.diag([1.0, 1.0]).tolist()]}))
    assert run("clifford", "check", "--family", str(bad))[0] == EXIT_VALIDATION


def test_build_out_of_range():
    assert run("clifford", "build", "--n", "99")[0] == EXIT_VALIDATION


def test_usage_errors():
    assert run()[0] == EXIT_USAGE
    assert run("nosuch")[0] == EXIT_USAGE
    assert run("clifford", "check")[0] == EXIT_USAGE
    assert run("index")[0] == EXIT_USAGE
    assert run("ktheory", "table", "--format", "xml")[0] == EXIT_USAGE


def test_hopf_evaluate(family_file):
    code, text, _ = run("hopf", "evaluate", "--family", str(family_file), "--point", "0,1,0,0")
    assert code == EXIT_OK
    m = np.array(json.loads(text)["value"])
    assert np.allclose(m.T @ m, np.eye(4)) and np.allclose(m, -m.T)


def test_hopf_winding_loop_file(tmp_path):
    ts = np.linspace(0, 1, 65)
    loop = np.array([np.diag(np.exp(2j * np.pi * t * np.array([2, -1]))) for t in ts])
    path = tmp_path / "loop.json"
    write_loop(loop, path)
    code, text, _ = run("hopf", "winding", "--input", str(path))
    assert code == EXIT_OK and json.loads(text)["winding"] == 1


def test_hopf_sphere():
    code, text, _ = run("hopf", "sphere", "--n", "3", "--resolution", "10")
    data = json.loads(text)
    assert code == EXIT_OK and data["eta"] == data["expected"] == 2


def test_centriole_reference_and_check(tmp_path, family_file):
    code, text, _ = run("centriole", "reference", "--family", str(family_file), "--level", "2")
    assert code == EXIT_OK
    geo = tmp_path / "geo.json"
    geo.write_text(text)
    code, text, _ = run("centriole", "check", "--family", str(family_file), "--geodesic", str(geo))
    data = json.loads(text)
    assert code == EXIT_OK and data["k_spectrum"] == [1] and data["endpoint_member"]
    assert np.isclose(data["energy"], np.pi**2)


def test_index_report():
    code, text, _ = run("index", "--ks", "3,1", "--context", "so")
    data = json.loads(text)
    assert code == EXIT_OK
    assert (data["lower_bound"], data["oracle"], data["segments"]) == (2, 2, 24)
    code, text, _ = run("index", "--ks", "3,-1", "--context", "unitary")
    assert json.loads(text)["winding"] == 1


def test_index_invalid_spectrum():
    assert run("index", "--ks", "2,1")[0] == EXIT_VALIDATION


def test_flow_trace(tmp_path):
    code, text, _ = run("flow", "--ks", "1,1,1,1", "--segments", "16", "--out-dir", str(tmp_path),
                        "--trace", "trace.csv")
    data = json.loads(text)
    assert code == EXIT_OK and data["monotone"] and data["converged"]
    rows = list(csv.reader((tmp_path / "trace.csv").open()))
    assert tuple(rows[0]) == ("iteration", "stage", "max_energy", "mean_energy", "perturbations_applied")
    energies = [float(r[2]) for r in rows[1:]]
    assert all(b <= a for a, b in zip(energies, energies[1:]))


def test_flow_no_convergence():
    code, _, err = run("flow", "--ks", "1,1", "--max-iters", "1", "--noise", "0.1", "--segments", "16")
    assert code == EXIT_CONVERGENCE and "convergence" in err


def test_ktheory_csv():
    code, text, _ = run("ktheory", "table")
    rows = list(csv.reader(io.StringIO(text)))
    assert code == EXIT_OK and rows[0][0] == "n" and len(rows) == 18
    assert [r[1] for r in rows[1:10]] == ["1", "2", "4", "4", "8", "8", "8", "8", "16"]


def test_ktheory_restriction_json():
    code, text, _ = run("ktheory", "restriction", "--n", "4")
    assert code == EXIT_OK and "matrix" in json.loads(text)


def test_outputs_deterministic(tmp_path):
    for argv in (("ktheory", "table"), ("index", "--ks", "3,1"), ("flow", "--ks", "1,1", "--segments", "8")):
        assert run(*argv)[1] == run(*argv)[1]


def test_bundle_hopf_invariants_round_trip(tmp_path):
    code, _, _ = run("bundle", "hopf", "--n", "4", "--resolution", "10", "--out", str(tmp_path / "h.json"))
    assert code == EXIT_OK
    code, text, _ = run("bundle", "invariants", "--triple", str(tmp_path / "h.json"), "--resolution", "10")
    data = json.loads(text)
    assert code == EXIT_OK and (data["rank"], data["eta"]) == (4, 2)


def test_bundle_fiber(tmp_path):
    code, text, _ = run("clifford", "build", "--n", "4")
    (tmp_path / "f.json").write_text(text)
    code, text, _ = run("bundle", "fiber", "--family", str(tmp_path / "f.json"))
    assert code == EXIT_OK and json.loads(text) == {"E_dim": 1, "field": "quaternionic"}


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"segments": 12, "seed": 3}))
    code, text, _ = run("index", "--ks", "3,1", "--config", str(cfg))
    assert code == EXIT_OK and json.loads(text)["segments"] == 12
    cfg.write_text(json.dumps({"colour": 1}))
    assert run("index", "--ks", "3,1", "--config", str(cfg))[0] == EXIT_VALIDATION
    with pytest.raises(ValidationError):
        RunConfig(resolution=0)


def test_selftest_passes():
    code, text, _ = run("selftest")
    assert code == EXIT_OK and text.strip().endswith("7/7 checks passed")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "clifmorse", "ktheory", "table", "--max", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.count("\n") == 5
    assert subprocess.run([sys.executable, "-m", "clifmorse", "bogus"], capture_output=True).returncode == 64
