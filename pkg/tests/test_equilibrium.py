import math

import numpy as np
import pytest

from definetti_nash import (DiffusionModel, EquilibriumError, ProfitRate, build_equilibrium,
                            case_study_equilibrium, check_conditions, find_b_lower, solve_psi,
                            trivial_value)

ONE = ProfitRate.constant(1.0)


@pytest.fixture(scope="module")
def sinh_setup():
    m = DiffusionModel(1.0, "0", repr(math.sqrt(2.0)))
    return m, solve_psi(m, x_max=20.0)


def test_unit_profit_closed_form(linear_model, linear_fs):
    fs = linear_fs
    for b in (0.0, 2.0, 5.0, 10.0):
        eq = build_equilibrium(linear_model, ONE, fs, b)
        assert eq.skew_list == ()
        lo = np.linspace(0, b, 7, endpoint=False)
        assert np.allclose(eq.value(lo), fs.psi(lo) / fs.dpsi(b), rtol=1e-12, atol=0)
        hi = np.linspace(b, 60, 7)        # above b the value extends past the grid
        assert np.allclose(eq.value(hi), hi - b + fs.psi(b) / fs.dpsi(b), rtol=1e-12)
        assert eq.value(0.0) == 0.0
        assert np.all(eq.value_slope(hi[1:]) == 1.0)
        assert np.all(eq.rate(lo) == 0.0)
        # g = 1: rate = mu(x) - r (x - b + psi(b)/psi'(b))
        u = np.linspace(b + 0.5, 40, 9)
        want = 0.25 * u - 0.08 * (u - b + fs.psi(b) / fs.dpsi(b))
        assert np.allclose(eq.rate(u), want, rtol=1e-12)


def test_smooth_fit_and_continuity(linear_model, linear_fs):
    eq = build_equilibrium(linear_model, ONE, linear_fs, 5.0)
    lo, hi = eq.value_slopes(5.0)
    assert abs(lo - 1) < 1e-8 and hi == 1.0
    assert abs(eq.value(5.0 - 1e-9) - eq.value(5.0)) < 1e-8
    left = build_equilibrium(linear_model, ONE, linear_fs, 5.0, left_variant=True)
    x = np.linspace(0, 20, 41)
    assert np.array_equal(left.value(x), eq.value(x))


def test_complicated_rate_display(complicated_model, complicated_profit, complicated_fs):
    eq = build_equilibrium(complicated_model, complicated_profit, complicated_fs, 0.0)
    assert eq.skew_list == ((1.0, 11 / 23), (5.0, 0.5))
    x = np.linspace(0, 8, 81)
    assert np.allclose(eq.value(x), complicated_profit.G_eval(x), rtol=0, atol=1e-15)
    assert eq.value(1.0) == pytest.approx(1 / 17, abs=1e-16)
    a = np.linspace(0.01, 0.99, 50)
    assert np.max(np.abs(eq.rate(a) - (0.01 * a + 0.001))) < 1e-10
    c = np.linspace(1.01, 2.99, 50)
    assert np.max(np.abs(eq.rate(c) - (0.01 * c + 1117 / 17000))) < 1e-10
    assert np.all(eq.rate(np.array([0.0, 1.0, 3.0, 5.0])) == 0.0)
    assert max(abs(r) for r in eq.skew_residuals()) <= 1e-12
    assert check_conditions(eq).verdict


def test_skew_list_vanishes_above_jump(linear_model, linear_fs, jump_profit):
    assert build_equilibrium(linear_model, jump_profit, linear_fs, 5.0).skew_list == ((10.0, pytest.approx(1 / 3)),)
    for b in (10.0, 12.0):
        assert build_equilibrium(linear_model, jump_profit, linear_fs, b).skew_list == ()
    # the left variant keeps the point at b and uses g(b-)
    left = build_equilibrium(linear_model, jump_profit, linear_fs, 10.0, left_variant=True)
    assert left.skew_list == ((10.0, pytest.approx(1 / 3)),) and left.g_b == 0.5


def test_skew_cancellation(linear_model, linear_fs, jump_profit):
    for b in (0.0, 5.0):
        eq = build_equilibrium(linear_model, jump_profit, linear_fs, b)
        for (l, c), res in zip(eq.skew_list, eq.skew_residuals()):
            lo, hi = eq.value_slopes(l)
            assert abs(res) <= 1e-12
            assert abs((hi - lo) - c * (hi + lo)) <= 1e-12


def test_conditions_example(linear_model, linear_fs):
    for b in (0.0, 2.0, 5.0, 10.0):
        rep = check_conditions(build_equilibrium(linear_model, ONE, linear_fs, b))
        assert rep.verdict and rep.generator_residual <= 1e-6


def test_conditions_fail_without_growth(sinh_setup):
    m, fs = sinh_setup
    rep = check_conditions(build_equilibrium(m, ONE, fs, 1.0))
    assert not rep.verdict and rep.cond_rate_nonneg < 0


def test_monotone_in_b(linear_model, linear_fs):
    bs = np.linspace(0, 12, 13)
    for x in (2.0, 5.0, 8.0):
        v = [build_equilibrium(linear_model, ONE, linear_fs, b).value(x) for b in bs]
        assert np.all(np.diff(v) > 0)


def test_find_b_lower(linear_model, linear_fs, sinh_setup):
    grid = [0.0, 1.0, 2.0, 5.0, 10.0]
    assert find_b_lower(linear_model, ONE, linear_fs, grid, stride=10) == 0.0
    m, fs = sinh_setup
    assert find_b_lower(m, ONE, fs, [0.0, 2.0, 4.0], stride=10) is None


def test_find_b_lower_consistent(linear_model, linear_fs, jump_profit):
    b = find_b_lower(linear_model, jump_profit, linear_fs, list(np.arange(0, 16.0, 1.5)), stride=10)
    assert b is not None
    for bb in np.linspace(b, 30, 10):
        assert check_conditions(build_equilibrium(linear_model, jump_profit, linear_fs, bb), stride=10).verdict


def test_build_errors(linear_model, linear_fs):
    with pytest.raises(EquilibriumError):
        build_equilibrium(linear_model, ONE, linear_fs, 60.0)
    bad = ProfitRate([(0.0, "0.2"), (3.0, "0.9")])
    with pytest.raises(EquilibriumError):
        build_equilibrium(linear_model, bad, linear_fs, 0.0)


def test_trivial_value(jump_profit):
    assert trivial_value(ONE, 6.0) == 3.0
    assert trivial_value(ONE, 0.0) == 0.0
    assert trivial_value(jump_profit, 14.0) == 4.5


def test_case_study(linear_model, linear_fs):
    cs = case_study_equilibrium(linear_model, linear_fs, 10.0, 0.25)
    assert cs.prefactor == pytest.approx(1.25 / 4)
    assert cs.value(0.0) == 0.0
    assert cs.value(14.0) == cs.value(10.0) == cs.value_sup
    assert cs.value(6.0) == pytest.approx(1.25 / 4 * linear_fs.psi(6.0) / linear_fs.dpsi(10.0), rel=1e-12)
    s = cs.strategy()
    assert s.rate is None and s.skew == ((10.0, 0.5),)
    assert s.jump_at(14.0) == 2.0 and s.jump_at(9.0) == 0.0
    with pytest.raises(EquilibriumError):
        case_study_equilibrium(linear_model, linear_fs, 10.0, 0.5)
    with pytest.raises(EquilibriumError):
        case_study_equilibrium(DiffusionModel(0.08, "-1 + 0*x", "2"), linear_fs, 10.0, 0.25)


def test_csv(tmp_path, linear_model, linear_fs):
    eq = build_equilibrium(linear_model, ONE, linear_fs, 5.0)
    p = tmp_path / "v.csv"
    eq.to_csv(p, x=np.array([0.0, 5.0, 7.5]))
    rows = [r.split(",") for r in p.read_text().splitlines()]
    assert rows[0] == ["x", "V", "dV_left", "dV_right", "lambda"]
    assert float(rows[3][1]) == eq.value(7.5)
