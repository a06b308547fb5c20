import math

import numpy as np
import pytest

from definetti_nash import DiffusionModel, FundSolError, check_model, psi_ratio, solve_psi, structure_report

SQRT2 = repr(math.sqrt(2.0))


@pytest.fixture(scope="module")
def sinh_fs():
    return solve_psi(DiffusionModel(1.0, "0", SQRT2), x_max=20.0)


def test_initial_conditions(linear_fs, sinh_fs):
    for fs in (linear_fs, sinh_fs):
        assert fs.psi(0.0) == 0.0 and fs.dpsi(0.0) == 1.0


def test_sinh_oracle(sinh_fs):
    x = np.linspace(0.01, 10, 999)
    assert np.max(np.abs(sinh_fs.psi(x) / np.sinh(x) - 1)) < 1e-6
    assert sinh_fs.psi(2.0) == pytest.approx(3.626860407847019, rel=1e-9)
    assert psi_ratio(sinh_fs, 1.0, 1.0) == pytest.approx(math.tanh(1.0), abs=1e-8)


def test_ledger_rescales_large_values():
    fs = solve_psi(DiffusionModel(1.0, "0", repr(math.sqrt(2.0) / 20)), x_max=40.0)
    # psi grows like sinh(20 x): far beyond double range without the ledger
    assert fs.log_scale[-1] > 300
    assert fs.ratio(39.0, 40.0) == pytest.approx(math.exp(-20.0) / 20, rel=1e-6)


def test_ratio_invariant_under_rescaling(linear_fs):
    scaled = linear_fs.scaled_by(1e3)
    x = np.linspace(0, 50, 41)
    assert np.allclose(scaled.ratio(x, 7.0), linear_fs.ratio(x, 7.0), rtol=1e-14, atol=0)
    assert linear_fs.ratio(0.0, 5.0) == 0.0


def test_ode_residual(linear_fs, complicated_fs):
    assert np.max(linear_fs.ode_residual()) <= 1e-6
    assert np.max(complicated_fs.ode_residual()) <= 1e-6


def test_shape_example(linear_fs):
    assert np.all(linear_fs.dpsi_s > 0)
    assert np.all(linear_fs.d2psi() <= 0)
    rep = structure_report(linear_fs, 0.0)
    assert rep.b2 == 0.0 and rep.concave_on == linear_fs.x_max and rep.dpsi_positive
    assert linear_fs.dpsi(50.0) < linear_fs.dpsi(25.0) < 1.0


def test_shape_sinh(sinh_fs):
    rep = structure_report(sinh_fs, 0.0)
    assert rep.b2 is None and rep.single_sign_change
    assert rep.concave_on == pytest.approx(sinh_fs.dx)


def test_single_sign_change(complicated_model, complicated_fs):
    kappa = check_model(complicated_model).assumption2_kappa
    rep = structure_report(complicated_fs, kappa if kappa is not None else 0.0)
    assert rep.single_sign_change and rep.dpsi_positive


def test_step_halving(linear_model, linear_fs):
    fine = solve_psi(linear_model, dx=5e-4)
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 50, 50)
    b = rng.uniform(0, 50, 50)
    assert np.max(np.abs(fine.ratio(x, b) / linear_fs.ratio(x, b) - 1)) < 1e-6


def test_errors(linear_fs):
    with pytest.raises(FundSolError):
        solve_psi(DiffusionModel(0.1, "x", "1 - x"), x_max=5)
    with pytest.raises(ValueError):
        solve_psi(DiffusionModel(0.1, "x", "1"), x_max=1, dx=0.5)
    with pytest.raises(ValueError):
        linear_fs.psi(51.0)


def test_csv(tmp_path, sinh_fs):
    p = tmp_path / "psi.csv"
    sinh_fs.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "x,psi_scaled,log_scale,dpsi_scaled,d2psi"
    assert len(lines) == len(sinh_fs.grid) + 1
