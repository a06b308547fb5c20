import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from definetti_nash import DiffusionModel, ProfitRate, load_strategy
from definetti_nash.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


@pytest.fixture
def model_file(tmp_path):
    p = tmp_path / "model.json"
    p.write_text(json.dumps({"r": 0.08, "mu": "0.25*x", "sigma": "2"}))
    return str(p)


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_solve_unit_profit_curves(tmp_path, model_file, capsys):
    out = tmp_path / "curves"
    code, text = run(["solve", "--model", model_file, "--b", "0", "5", "10", "--format", "csv",
                      "--out", str(out), "--strict"], capsys)
    assert code == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["curve_b0.csv", "curve_b10.csv", "curve_b5.csv"]
    head, v5 = _read_csv(out / "curve_b5.csv")
    _, v10 = _read_csv(out / "curve_b10.csv")
    assert head == ["x", "V", "dV_left", "dV_right", "lambda"]
    assert np.all(v10[1:, 1] > v5[1:, 1])          # increasing in b
    assert np.all(np.diff(v5[:, 1]) > 0)           # increasing in x
    rep = json.loads(text)
    assert all(r["conditions"]["verdict"] for r in rep["results"])


def test_solve_jump_profit_has_kink(tmp_path, capsys):
    out = tmp_path / "c"
    code, _ = run(["solve", "--example", "g-jump", "--b", "5", "--format", "csv", "--out", str(out)], capsys)
    assert code == 0
    _, v = _read_csv(out / "curve_b5.csv")
    at = v[np.isclose(v[:, 0], 10.0)][0]
    assert at[2] == 0.5 and at[3] == 1.0


def test_missing_model_file(tmp_path, capsys):
    code = main(["solve", "--model", str(tmp_path / "nope.json"), "--b", "1"])
    err = capsys.readouterr().err
    assert code == 1 and "cannot read model" in err


def test_bad_arguments_exit_1(capsys):
    with pytest.raises(SystemExit) as e:
        main(["solve", "--bogus"])
    assert e.value.code == 1


def test_find_b(capsys):
    code, text = run(["find-b", "--example", "first", "--b-grid", "0:10:2.5"], capsys)
    assert code == 0 and json.loads(text)["b_lower"] == 0.0


def test_check(capsys):
    code, text = run(["check", "--example", "g-complicated", "--b", "0", "--strict"], capsys)
    rep = json.loads(text)
    assert rep["admissibility"][0]["verdict"]
    assert rep["assumptions"]["sigma_positive"]


def test_example_complicated(tmp_path, capsys):
    out = tmp_path / "ex"
    code, text = run(["example", "g-complicated", "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["equilibria"][0]["skew_list_exact"] == [["1", "11/23"], ["5", "1/2"]]
    assert json.loads(text) == rep


@pytest.mark.parametrize("name", ["first", "g-jump", "g-complicated", "case-study"])
def test_example_outputs_load_back(tmp_path, name, capsys):
    out = tmp_path / name
    assert main(["example", name, "--out", str(out)]) == 0
    capsys.readouterr()
    m = DiffusionModel.from_json(out / "model.json")
    g = ProfitRate.from_json(out / "profit.json")
    s = load_strategy(out / "strategy.json", equilibrium_rate=lambda x: 0.0)
    assert m.r > 0 and g(0.0) > 0
    if name == "case-study":
        assert s.skew == ((10.0, 0.5),) and s.jump_at(14.0) == 2.0
        assert g(10.0) == 1.0 and g.g_left(10.0) == 0.25 and g(11.0) == 0.0


def test_example_reruns_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["example", "case-study", "--out", str(a)])
    main(["example", "case-study", "--out", str(b)])
    capsys.readouterr()
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_simulate_with_strategy_files(tmp_path, capsys):
    s = tmp_path / "s.json"
    s.write_text(json.dumps({"lambda": "0.5", "skew": [], "jumps": None}))
    out = tmp_path / "sim"
    code, text = run(["simulate", "--example", "first", "--strategy1", str(s), "--strategy2", str(s),
                      "--x0", "2", "--paths", "20", "--tmax", "5", "--out", str(out), "--trace", "3"], capsys)
    assert code == 0
    rep = json.loads(text)
    assert rep["player_1"]["n_paths"] == 20 and rep["player_1"]["mean"] == rep["player_2"]["mean"]
    head = (out / "trace_3.csv").read_text().splitlines()[0]
    assert head == "t,X,dD1_rate,dD1_local,dD2_rate,dD2_local"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"lambda": "-1"}))
    code = main(["simulate", "--example", "first", "--strategy1", str(bad), "--strategy2", str(s)])
    assert code == 1


def test_verify_small_run(capsys):
    code, text = run(["verify", "equilibrium", "--example", "case-study", "--x0", "6", "--paths", "300",
                      "--tmax", "60", "--rel-tol", "0.05"], capsys)
    rep = json.loads(text)
    assert code == 0 and rep["all_pass"]


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "definetti_nash", "check", "--example", "first"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["assumptions"]["assumption2_kappa"] == 0.0
