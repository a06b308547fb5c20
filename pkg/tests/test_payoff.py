import math
from dataclasses import replace

import numpy as np
import pytest

from definetti_nash import (ControlStrategy, ProfitRate, SimConfig, batch_simulate, build_equilibrium,
                            case_study_equilibrium, deviation_menu, jump_to_level, mc_estimate, path_payoff,
                            path_payoff_components, simulate_path, trivial_strategy, zero_strategy)
from definetti_nash.payoff import estimate_from_paths

ONE = ProfitRate.constant(1.0)
CFG = SimConfig(dt=1e-3, t_max=60.0, n_paths=400, seed=21)


@pytest.fixture(scope="module")
def eq5(linear_model, linear_fs):
    return build_equilibrium(linear_model, ONE, linear_fs, 5.0)


def test_trivial_pair_exact(linear_model, jump_profit):
    t = trivial_strategy()
    rec = simulate_path(linear_model, t, t, 5.0, CFG)
    assert path_payoff(rec, ONE, linear_model.r, 1) == 2.5
    assert path_payoff(rec, ONE, linear_model.r, 2) == 2.5
    rec = simulate_path(linear_model, t, t, 14.0, CFG, g=jump_profit)
    assert path_payoff(rec, jump_profit, linear_model.r, 1) == jump_profit.G_eval(14.0) / 2 == 4.5


def test_single_jumper_takes_all(linear_model):
    rec = simulate_path(linear_model, trivial_strategy(), zero_strategy(), 7.0, CFG)
    assert path_payoff(rec, ONE, linear_model.r, 1) == 7.0
    assert path_payoff(rec, ONE, linear_model.r, 2) == 0.0


def test_zero_strategies_pay_nothing(linear_model):
    est = mc_estimate(linear_model, zero_strategy(), zero_strategy(), ONE, 3.0, replace(CFG, n_paths=20, t_max=5))
    assert est.mean == 0.0 and est.stderr == 0.0


def test_estimate_bookkeeping(linear_model, eq5):
    s = eq5.strategy()
    paths = batch_simulate(linear_model, s, s, 5.0, CFG, g=ONE)
    est = estimate_from_paths(paths, ONE, linear_model.r, 1, CFG.t_max, eq5.value_sup)
    totals = np.array([path_payoff(p, ONE, linear_model.r, 1) for p in paths])
    assert est.mean == pytest.approx(totals.mean(), rel=1e-12)
    assert est.stderr == pytest.approx(totals.std(ddof=1) / math.sqrt(len(totals)), rel=1e-12)
    assert sum(est.components) == pytest.approx(est.mean, rel=1e-12)
    # symmetric strategies and shared noise: equal rewards path by path
    other = np.array([path_payoff(p, ONE, linear_model.r, 2) for p in paths])
    assert np.array_equal(totals, other)


def test_jump_sharing_conservation(linear_model, jump_profit):
    s1 = jump_to_level(6.0)
    s2 = ControlStrategy(jumps=s1.jumps)
    cfg = replace(CFG, n_paths=30, max_events=5000, t_max=2.0)
    for p in batch_simulate(linear_model, s1, s2, 5.0, cfg, g=jump_profit):
        assert p.events_complete
        parts = [path_payoff_components(p, jump_profit, linear_model.r, i)[2] for i in (1, 2)]
        whole = sum(wd * (jump_profit.G_eval(xb) - jump_profit.G_eval(xa)) for _, xb, xa, _, _, wd in p.events)
        assert sum(parts) == pytest.approx(whole, rel=1e-12, abs=1e-14)
        for _, xb, xa, a1, a2, _ in p.events:
            assert xa == pytest.approx(max(12.0 - xb, 0.0), abs=1e-12) and a1 == a2


def test_reward_under_other_profit_uses_event_log(linear_model, jump_profit):
    s = jump_to_level(6.0)
    cfg = replace(CFG, n_paths=20, max_events=5000, t_max=2.0)
    a = batch_simulate(linear_model, s, s, 5.0, cfg, g=jump_profit)
    half = ProfitRate.constant(0.5)
    b = batch_simulate(linear_model, s, s, 5.0, cfg, g=half)
    for pa, pb in zip(a, b):
        assert path_payoff(pa, half, linear_model.r, 1) == pytest.approx(path_payoff(pb, half, linear_model.r, 1),
                                                                          rel=1e-12)
    with pytest.raises(ValueError):
        path_payoff(a[0], ONE, 0.5, 1)


def test_stderr_scaling(linear_model, eq5):
    s = eq5.strategy()
    small = mc_estimate(linear_model, s, s, ONE, 5.0, replace(CFG, n_paths=400))
    big = mc_estimate(linear_model, s, s, ONE, 5.0, replace(CFG, n_paths=1600))
    assert abs(small.stderr / big.stderr / 2 - 1) < 0.2


def test_equilibrium_recovery_small(linear_model, eq5):
    s = eq5.strategy()
    prev = -np.inf
    for x0 in (2.0, 5.0, 8.0):
        est = mc_estimate(linear_model, s, s, ONE, x0, replace(CFG, n_paths=1500), value_sup=eq5.value_sup)
        V = eq5.value(x0)
        assert abs(est.mean - V) <= max(3 * est.stderr, 0.03 * V)
        assert est.mean > prev - 3 * est.stderr
        prev = est.mean


def test_inadmissible_pair_scores_minus_infinity(linear_model):
    s = ControlStrategy(skew=((2.0, 0.75),))
    est = mc_estimate(linear_model, s, s, ONE, 1.0, CFG)
    assert est.mean == -math.inf


def test_menu(linear_model, linear_fs, eq5):
    names = [n for n, _ in deviation_menu(eq5, 1.0, 0.5)]
    assert names == ["full-extraction", "threshold-shift(4)", "threshold-shift(6)", "extra-rate(+0.5)",
                     "jump-to-threshold(5)", "do-nothing"]
    cs = case_study_equilibrium(linear_model, linear_fs, 10.0, 0.25)
    names = [n for n, _ in deviation_menu(cs, 1.0, 0.5)]
    assert names == ["full-extraction", "level-shift(9)", "level-shift(11)", "extra-rate(+0.5)",
                     "jump-to-level(10)", "do-nothing"]
    with pytest.raises(TypeError):
        deviation_menu(object())


def test_full_extraction_against_equilibrium(linear_model, eq5):
    est = mc_estimate(linear_model, trivial_strategy(), eq5.strategy(), ONE, 5.0, replace(CFG, n_paths=50))
    assert est.mean == 5.0 and est.stderr == 0.0
    assert est.mean < eq5.value(5.0)
