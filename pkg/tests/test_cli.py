import json

import numpy as np
import pytest

from mfteam import acceptance, dp
from mfteam.cli import main
from mfteam.model import save_model
from mfteam.zoo import benchmark_two_state, identity_model, random_model

from conftest import affine_model


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "model.json"
    save_model(random_model(2, 2, 2, seed=2), path)
    return path


def test_validate_ok(model_file, capsys):
    assert main(["validate", "--model", str(model_file)]) == 0
    assert capsys.readouterr().out.strip() == "OK"


def test_validate_invalid(tmp_path, capsys):
    B = np.zeros((2, 2))
    B[0] = [-0.2, 0.2]
    path = tmp_path / "bad.json"
    save_model(affine_model([0.1, 0.9], B, c0=1.0), path)
    assert main(["validate", "--model", str(path)]) == 1
    assert "negative kernel at simplex vertex" in capsys.readouterr().out
    assert main(["solve", "--model", str(path), "--grid-res", "4"]) == 1


@pytest.mark.parametrize("argv", [
    ["solve", "--model", "MODEL", "--grid-res", "0"],
    ["solve", "--model", "MODEL"],
    ["gap", "--model", "MODEL", "--agents", "4", "--grid-res", "4"],
    ["convergence", "--model", "MODEL", "--agents", "4,x", "--seed", "0", "--out", "o.csv"],
    ["deviation", "--p", "1.5", "--agents", "4", "--reps", "10", "--seed", "0"],
    ["frobnicate"],
])
def test_usage_errors(model_file, argv):
    argv = [str(model_file) if a == "MODEL" else a for a in argv]
    assert main(argv) == 2


def test_io_errors(tmp_path):
    assert main(["validate", "--model", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", "--model", str(bad)]) == 2


def test_solve_writes_json(model_file, tmp_path):
    out = tmp_path / "sol.json"
    assert main(["solve", "--model", str(model_file), "--grid-res", "16", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    sol = dp.solve_decentralized_grid(random_model(2, 2, 2, seed=2), 16)
    assert doc == json.loads(json.dumps(sol.to_dict()))
    out2 = tmp_path / "tree.json"
    assert main(["solve", "--model", str(model_file), "--tree", "--out", str(out2)]) == 0
    assert json.loads(out2.read_text())["mode"] == "tree"


def test_sharing_json(model_file, capsys):
    assert main(["sharing", "--model", str(model_file), "--agents", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["J_star"] == dp.solve_sharing(random_model(2, 2, 2, seed=2), 3).J_star
    assert doc["tables_elided"] is False


def test_sharing_cap_exceeded(tmp_path):
    path = tmp_path / "m3.json"
    save_model(random_model(3, 2, 2, seed=0), path)
    assert main(["sharing", "--model", str(path), "--agents", "500"]) == 3


def test_gap_exact_matches_dp(model_file, capsys):
    assert main(["gap", "--model", str(model_file), "--agents", "8", "--grid-res", "64",
                 "--exact"]) == 0
    vals = dict(line.split() for line in capsys.readouterr().out.strip().splitlines())
    res = dp.optimality_gap(random_model(2, 2, 2, seed=2), 8, nu=64)
    assert float(vals["J_g"]) == res.J_g
    assert float(vals["J_star"]) == res.J_star
    assert float(vals["gap"]) == res.gap


def test_gap_mc(model_file, capsys):
    assert main(["gap", "--model", str(model_file), "--agents", "8", "--grid-res", "8", "--mc",
                 "--reps", "20000", "--seed", "3"]) == 0
    vals = {k: float(v) for k, v in (l.split() for l in capsys.readouterr().out.splitlines())}
    exact = dp.optimality_gap(random_model(2, 2, 2, seed=2), 8, nu=8).J_g
    assert abs(vals["J_g"] - exact) <= 4 * vals["stderr"]


def test_convergence_byte_stable(tmp_path):
    path = tmp_path / "bench.json"
    save_model(benchmark_two_state(), path)
    outs = []
    for i in range(2):
        out = tmp_path / f"c{i}.csv"
        args = ["convergence", "--model", str(path), "--agents", "4,8,16,32,64", "--seed", "9",
                "--exact-cap", "20", "--mc-reps", "500", "--out", str(out)]
        assert main(args) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    lines = outs[0].decode().splitlines()
    assert lines[0] == "n,nu,J_g,J_star,gap,gap_sqrt_n,method,stderr,seed"
    assert [l.split(",")[6] for l in lines[1:]] == ["exact"] * 3 + ["mc"] * 2


def test_convergence_no_fit_rows(tmp_path):
    path = tmp_path / "m3.json"
    save_model(random_model(3, 2, 2, seed=0), path)
    args = ["convergence", "--model", str(path), "--agents", "60", "--seed", "0",
            "--exact-cap", "5", "--mc-reps", "10", "--out", str(tmp_path / "c.csv")]
    assert main(args) == 3


def test_convergence_identity_vacuous(tmp_path, capsys):
    path = tmp_path / "id.json"
    save_model(identity_model(), path)
    args = ["convergence", "--model", str(path), "--agents", "2,4,8", "--grid-res", "5",
            "--seed", "0", "--out", str(tmp_path / "c.csv")]
    assert main(args) == 0
    assert "vacuously" in capsys.readouterr().out


def test_deviation_output(capsys):
    assert main(["deviation", "--p", "0.5", "--agents", "1,4", "--reps", "1000", "--seed", "0"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "n,mean,stderr,exact,sqrt_n_mean"
    n1 = lines[1].split(",")
    assert n1[0] == "1" and float(n1[1]) == 0.5 and float(n1[3]) == 0.5
    assert float(lines[2].split(",")[3]) == 0.1875


def test_check_exit_codes(monkeypatch, capsys):
    ok = acceptance.CriterionResult(1, "x", True, "")
    bad = acceptance.CriterionResult(2, "y", False, "")
    monkeypatch.setattr(acceptance, "run_all", lambda model=None: [ok, ok])
    assert main(["check"]) == 0
    monkeypatch.setattr(acceptance, "run_all", lambda model=None: [ok, bad])
    assert main(["check"]) == 4
    assert "1/2 criteria passed" in capsys.readouterr().out
