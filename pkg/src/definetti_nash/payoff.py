"""
Discounted rewards along simulated paths
========================================

A player's reward weights each extracted unit by the profit rate at the
state where it was taken.  Rate and local-time extraction use the average
``(g(X-) + g(X--))/2``, which off the breakpoints is just ``g(X)``.  For a
jump the reward is the share ``dD_i / (dD_1 + dD_2)`` of
``G(x_before) - G(x_after)``, so simultaneous jumps split what is actually
available.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .coeffs import DiffusionModel
from .equilibrium import CaseStudyEquilibrium, EquilibriumRate, ThresholdEquilibrium, build_equilibrium
from .profit import ProfitRate
from .simulate import InadmissiblePair, PathRecord, SimConfig, batch_simulate
from .strategy import (ControlStrategy, JumpNonTermination, JumpRule, ShiftedRate,
                       jump_to_level, trivial_strategy, zero_strategy)

__all__ = ["PayoffEstimate", "path_payoff", "path_payoff_components", "mc_estimate", "estimate_from_paths",
           "deviation_menu", "deviation_suite", "DeviationResult"]


def _slot(player):
    if player not in (1, 2):
        raise ValueError("player must be 1 or 2")
    return player - 1


def _profit_key(g: ProfitRate):
    return repr(g.to_dict()) + repr(g.scale)


def path_payoff_components(path: PathRecord, g: ProfitRate, r: float, player: int = 1):
    """Rate, local-time and jump parts of one player's discounted reward."""
    i = _slot(player)
    if not math.isclose(r, path.r, rel_tol=0, abs_tol=1e-15):
        raise ValueError(f"path was simulated with r={path.r}, not {r}")
    same = path.profit_key == _profit_key(g)
    if same:
        rate = float(path.rate_g[i])
    elif g.is_constant:
        rate = float(g(0.0)) * float(path.rate_raw[i])
    else:
        raise ValueError("rate reward for a non-constant profit rate needs the simulated profit rate")

    c = path.skew_c1 if i == 0 else path.skew_c2
    local = 0.0
    for l, cj, L in zip(path.skew_at, c, path.local_time):
        if cj:
            local += cj * 0.5 * (g(l) + g.g_left(l)) * L

    jump = 0.0
    ij = path.initial_jump
    if ij.total > 0:
        share = (ij.total_attempt_1 if i == 0 else ij.total_attempt_2) / ij.total
        jump += share * (g.G_eval(ij.x_before) - g.G_eval(ij.x_after))
    if same:
        jump += float(path.jump_payoff[i])
    elif path.events_complete:
        for t, xb, xa, a1, a2, wd in path.events:
            share = (a1 if i == 0 else a2) / (a1 + a2)
            jump += wd * share * (g.G_eval(xb) - g.G_eval(xa))
    else:
        raise ValueError("jump log is truncated; re-simulate with the payoff profit rate")
    return rate, local, jump


def path_payoff(path: PathRecord, g: ProfitRate, r: float, player: int = 1) -> float:
    """Discounted reward of ``player`` on ``path``."""
    return float(sum(path_payoff_components(path, g, r, player)))


@dataclass(frozen=True)
class PayoffEstimate:
    """Monte Carlo reward estimate.

    ``stderr`` is the sample standard deviation (``ddof=1``) over ``sqrt(n)``;
    the three components average to ``mean``.  A mean of ``-inf`` marks a
    strategy pair without a well-defined state process.
    """
    mean: float
    stderr: float
    n_paths: int
    truncation_bias_bound: float
    components: tuple
    player: int = 1
    censored_fraction: float = 0.0

    def to_dict(self):
        return {"mean": self.mean, "stderr": self.stderr, "n_paths": self.n_paths,
                "truncation_bias_bound": self.truncation_bias_bound,
                "components": {"rate": self.components[0], "local": self.components[1],
                               "jump": self.components[2]},
                "player": self.player, "censored_fraction": self.censored_fraction}


def estimate_from_paths(paths: Sequence[PathRecord], g: ProfitRate, r: float, player: int = 1,
                        t_max: float = math.inf, value_sup: Optional[float] = None) -> PayoffEstimate:
    comps = np.array([path_payoff_components(p, g, r, player) for p in paths])
    totals = comps.sum(axis=1)
    n = len(paths)
    se = float(np.std(totals, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    if value_sup is None:
        value_sup = float(g.G_eval(max(p.max_state for p in paths)))
    censored = [p for p in paths if p.censored]
    bound = math.exp(-r * t_max) * value_sup if censored else 0.0
    return PayoffEstimate(float(totals.mean()), se, n, bound, tuple(float(v) for v in comps.mean(axis=0)),
                          player, len(censored) / n)


def mc_estimate(m: DiffusionModel, s1: ControlStrategy, s2: ControlStrategy, g: Optional[ProfitRate],
                x0: float, cfg: SimConfig, player: int = 1,
                value_sup: Optional[float] = None) -> PayoffEstimate:
    """Simulate ``cfg.n_paths`` paths and average ``player``'s reward.

    Parameters
    ----------
    value_sup : float, optional
        Bound on the continuation value used for the truncation bias
        ``exp(-r t_max) * value_sup``; defaults to ``G`` at the largest state
        visited, a heuristic.
    """
    g = ProfitRate.constant(1.0) if g is None else g
    try:
        paths = batch_simulate(m, s1, s2, x0, cfg, g=g)
    except (InadmissiblePair, JumpNonTermination):
        return PayoffEstimate(-math.inf, 0.0, cfg.n_paths, 0.0, (-math.inf, 0.0, 0.0), player, 0.0)
    return estimate_from_paths(paths, g, m.r, player, cfg.t_max, value_sup)


# ---------------------------------------------------------------------------
# deviations
# ---------------------------------------------------------------------------

def deviation_menu(target, delta: float = 1.0, extra_rate: float = 0.5):
    """Built-in single-player deviations for ``target``.

    1. full extraction at once,
    2. the same construction at a level shifted by ``-delta`` and ``+delta``,
    3. the equilibrium strategy with ``extra_rate`` added to its rate,
    4. jumping to the threshold from above it,
    5. doing nothing.
    """
    menu = [("full-extraction", trivial_strategy())]
    if isinstance(target, ThresholdEquilibrium):
        b = target.b
        for nb in (b - delta, b + delta):
            if 0.0 <= nb <= target.fs.x_max:
                eq = build_equilibrium(target.model, target.g, target.fs, nb, target.left_variant)
                menu.append((f"threshold-shift({nb:g})", eq.strategy()))
        menu.append((f"extra-rate(+{extra_rate:g})",
                     ControlStrategy(ShiftedRate(EquilibriumRate(target), extra_rate),
                                     target.skew_list, None, "extra-rate")))
        menu.append((f"jump-to-threshold({b:g})", jump_to_level(b)))
    elif isinstance(target, CaseStudyEquilibrium):
        ell = target.ell
        for nl in (ell - delta, ell + delta):
            if nl > 0:
                menu.append((f"level-shift({nl:g})", jump_to_level(nl, skew=((nl, 0.5),))))
        eq_s = target.strategy()
        menu.append((f"extra-rate(+{extra_rate:g})",
                     ControlStrategy(ShiftedRate(None, extra_rate), eq_s.skew, eq_s.jumps, "extra-rate")))
        menu.append((f"jump-to-level({ell:g})", jump_to_level(ell)))
    else:
        raise TypeError("target must be a threshold or reflection/jump equilibrium")
    menu.append(("do-nothing", zero_strategy()))
    return menu


@dataclass(frozen=True)
class DeviationResult:
    name: str
    mean: float
    stderr: float
    analytic: float
    margin: float
    verdict: bool

    def to_dict(self):
        return {"name": self.name, "mean": self.mean, "stderr": self.stderr,
                "analytic": self.analytic, "margin": self.margin, "verdict": self.verdict}


def deviation_suite(target, x0: float, cfg: SimConfig, menu=None, *, delta: float = 1.0,
                    extra_rate: float = 0.5, allowance: Optional[float] = None):
    """Test that no deviation of player 1 beats the equilibrium value.

    Player 2 keeps the equilibrium strategy.  A deviation passes when its
    estimate is at most ``V(x0) + 3 stderr + allowance + truncation bound``.
    Unless given, the allowance is the equilibrium recovery error
    ``|mean - V(x0)|`` at the same settings (same seed, so all runs share
    their noise).

    Returns
    -------
    dict
        JSON-ready report with one entry per deviation and ``all_pass``.
    """
    m, g = target.model, target.g
    V = float(target.value(x0))
    sup = target.value_sup
    eq_s = target.strategy()
    calib = mc_estimate(m, eq_s, eq_s, g, x0, cfg, value_sup=sup)
    if allowance is None:
        allowance = abs(calib.mean - V)
    menu = deviation_menu(target, delta, extra_rate) if menu is None else menu
    results = []
    for name, dev in menu:
        est = mc_estimate(m, dev, eq_s, g, x0, cfg, value_sup=sup)
        if est.mean == -math.inf:
            margin = math.inf
        else:
            margin = V + 3 * est.stderr + allowance + est.truncation_bias_bound - est.mean
        results.append(DeviationResult(name, est.mean, est.stderr, V, margin, bool(margin >= 0)))
    return {
        "x0": float(x0), "analytic": V, "allowance": float(allowance),
        "calibration": calib.to_dict(), "config": cfg.to_dict(),
        "deviations": [r.to_dict() for r in results],
        "all_pass": all(r.verdict for r in results),
    }


def dump_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
