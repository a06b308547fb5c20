"""Worked configurations: model, profit rate and thresholds for each bundled example."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .coeffs import DiffusionModel
from .profit import ProfitRate

__all__ = ["Preset", "PRESETS", "get_preset"]


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    model: DiffusionModel
    profit: Optional[ProfitRate]
    thresholds: tuple = ()
    case_study: Optional[tuple] = None      # (level, w)
    x_max: float = 50.0
    x0: tuple = (2.0, 5.0, 8.0)
    extra: dict = field(default_factory=dict)


def _linear_growth():
    return DiffusionModel(0.08, "0.25*x", "2")


def _presets():
    first = Preset(
        "first", "Linear drift 0.25x, unit volatility 2, r = 0.08, unit profit rate",
        _linear_growth(), None, thresholds=(0.0, 5.0, 10.0))
    g_jump = Preset(
        "g-jump", "Same dynamics; profit rate 1/2 below 10 and 1 from 10 on",
        _linear_growth(), ProfitRate([(0.0, "0.5"), (10.0, "1")]),
        thresholds=(0.0, 5.0, 10.0, 15.0))
    g_complicated = Preset(
        "g-complicated", "r = 0.1, drift 0.11x + 0.001, volatility 2(1+x)/(2+x), "
        "piecewise profit rate with jumps at 1 and 5",
        DiffusionModel(0.1, "0.11*x + 0.001", "2*(1+x)/(2+x)"),
        ProfitRate([(0.0, "1/17"), (1.0, "1/6"), (3.0, "1/6 + (x^2 - 6*x + 9)/24"), (5.0, "1")]),
        thresholds=(0.0,), x0=(0.5, 2.0, 6.0))
    case = Preset(
        "case-study", "Same dynamics as 'first'; profit 1/4 below 10, 1 at 10 and 0 above: "
        "reflection at 10 with a shared jump down to it",
        _linear_growth(), None, case_study=(10.0, 0.25), x0=(6.0, 10.0, 14.0))
    return {p.name: p for p in (first, g_jump, g_complicated, case)}


PRESETS = _presets()


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown example {name!r}; choose from {sorted(PRESETS)}") from None
