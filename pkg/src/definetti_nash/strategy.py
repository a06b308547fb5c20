"""
Control strategies
==================

A strategy is a rate ``lambda(x)``, a list of skew points ``(x_j, c_j)`` and a
jump rule ``(B, J)``.  When both players' jump rules fire at the same state,
the state moves by ``alpha(y) = (y - J1(y) - J2(y)) v 0`` repeatedly until
nobody jumps any more.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .coeffs import Expr, as_expr, eval_expr

__all__ = [
    "ControlStrategy", "ExprRate", "ShiftedRate", "JumpRule", "JumpResolution",
    "JumpNonTermination", "StrategyReport",
    "validate_strategy", "resolve_jumps", "resolve_jumps_array", "jump_endpoints",
    "trivial_strategy", "zero_strategy", "jump_to_level", "load_strategy",
]

MAX_JUMP_ROUNDS = 1_000_000


class JumpNonTermination(RuntimeError):
    """Simultaneous jumps did not settle within the iteration cap."""


class ExprRate:
    """Rate given by an expression in ``x``."""

    def __init__(self, expr):
        self.expr = as_expr(expr)

    def __call__(self, x):
        return eval_expr(self.expr, x)

    def numba_source(self, name):
        return f"def {name}(x):\n    return {self.expr.source()}\n", {}

    def __repr__(self):
        return f"ExprRate({self.expr})"


class ShiftedRate:
    """``base(x) + extra`` everywhere."""

    def __init__(self, base, extra):
        self.base = base
        self.extra = float(extra)

    def __call__(self, x):
        base = 0.0 if self.base is None else self.base(x)
        return np.asarray(base) + self.extra if np.ndim(x) else float(base) + self.extra

    def numba_source(self, name):
        if self.base is None:
            return f"def {name}(x):\n    return {self.extra!r}\n", {}
        src, ns = self.base.numba_source(f"{name}_base")
        return src + f"\ndef {name}(x):\n    return {name}_base(x) + {self.extra!r}\n", ns

    def __repr__(self):
        return f"ShiftedRate({self.base!r}, {self.extra:g})"


@dataclass(frozen=True)
class JumpRule:
    """Jump set ``B`` (union of closed intervals, ``inf`` allowed) and map ``J``.

    ``J(x)`` is the map expression on ``B`` and 0 elsewhere.
    """
    intervals: tuple
    map: Expr

    def __post_init__(self):
        iv = tuple((float(a), float(b)) for a, b in self.intervals)
        for a, b in iv:
            if not (0 <= a <= b):
                raise ValueError(f"bad jump interval [{a}, {b}]")
        object.__setattr__(self, "intervals", iv)
        object.__setattr__(self, "map", as_expr(self.map))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (x >= a) & (x <= b)
        return inside

    def interior(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (x > a) & (x < b)
        return inside

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        inside = self.contains(xa)
        out = np.zeros(xa.shape)
        if np.any(inside):
            out[inside] = np.atleast_1d(eval_expr(self.map, xa[inside]))
        return float(out) if xa.ndim == 0 else out

    def numba_source(self, name):
        cond = " or ".join(
            f"(x >= {a!r})" if math.isinf(b) else f"({a!r} <= x <= {b!r})"
            for a, b in self.intervals) or "False"
        src = (f"def {name}(x):\n"
               f"    if {cond}:\n"
               f"        return {self.map.source()}\n"
               f"    return 0.0\n")
        return src, {}

    def to_dict(self):
        return {"intervals": [[a, "inf" if math.isinf(b) else b] for a, b in self.intervals],
                "map": str(self.map)}


@dataclass(frozen=True)
class ControlStrategy:
    """Admissible strategy: rate, skew points and jump rule.

    ``rate`` is None for "no rate control"; otherwise a callable with a
    ``numba_source(name)`` method (see :class:`ExprRate`).
    """
    rate: Optional[object] = None
    skew: tuple = ()
    jumps: Optional[JumpRule] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "skew", tuple((float(a), float(c)) for a, c in self.skew))

    def rate_at(self, x):
        if self.rate is None:
            return np.zeros(np.shape(x)) if np.ndim(x) else 0.0
        return self.rate(x)

    def jump_at(self, x):
        if self.jumps is None:
            return np.zeros(np.shape(x)) if np.ndim(x) else 0.0
        return self.jumps(x)

    def in_jump_set(self, x):
        if self.jumps is None:
            return np.zeros(np.shape(x), dtype=bool) if np.ndim(x) else False
        out = self.jumps.contains(x)
        return bool(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class StrategyReport:
    valid: bool
    violations: tuple

    def to_dict(self):
        return {"valid": self.valid, "violations": list(self.violations)}


def validate_strategy(s: ControlStrategy, grid) -> StrategyReport:
    """Sample the admissibility constraints on ``grid`` and at interval ends."""
    grid = np.asarray(grid, dtype=float)
    bad = []
    if s.rate is not None:
        lam = np.asarray(s.rate(grid), dtype=float)
        if not np.all(np.isfinite(lam)):
            bad.append("rate is not finite on the grid")
        elif np.min(lam) < -1e-12:
            i = int(np.argmin(lam))
            bad.append(f"rate is negative at x={grid[i]!r} ({lam[i]:.6g})")
    for xj, c in s.skew:
        if not xj > 0:
            bad.append(f"skew point {xj} is not positive")
        if not (0 < c <= 1):
            bad.append(f"skew intensity {c} at {xj} is outside (0, 1]")
        if s.jumps is not None and bool(s.jumps.interior(xj)):
            bad.append(f"skew point {xj} lies inside the jump set")
    if s.jumps is not None:
        ends = [v for a, b in s.jumps.intervals for v in (a, b) if math.isfinite(v)]
        pts = np.unique(np.concatenate([grid, np.array(ends, dtype=float)]))
        inner = s.jumps.interior(pts)
        J = np.asarray(s.jumps(pts), dtype=float)
        Jint = J[inner]
        xint = pts[inner]
        if Jint.size and np.any(~((Jint > 0) & (Jint <= xint * (1 + 1e-15)))):
            k = int(np.nonzero(~((Jint > 0) & (Jint <= xint * (1 + 1e-15))))[0][0])
            bad.append(f"jump J({xint[k]!r})={Jint[k]!r} is outside (0, x]")
        inside = s.jumps.contains(pts)
        Jb = J[inside]
        if Jb.size and np.any((Jb < 0) | (Jb > pts[inside] * (1 + 1e-15))):
            bad.append("jump map leaves [0, x] on the jump set")
    return StrategyReport(not bad, tuple(bad))


@dataclass(frozen=True)
class JumpResolution:
    """Outcome of the simultaneous-jump iteration at one instant."""
    x_before: float
    x_after: float
    total_attempt_1: float
    total_attempt_2: float
    iterations: int

    @property
    def total(self):
        return self.total_attempt_1 + self.total_attempt_2

    @property
    def capped_total(self):
        return self.x_before - self.x_after

    @property
    def absorbed(self):
        return self.x_after == 0.0 and self.x_before > 0.0

    @property
    def jumped(self):
        return self.total > 0


SNAP_ULPS = 4


def jump_endpoints(*strategies) -> np.ndarray:
    """Finite endpoints of the strategies' jump sets, sorted."""
    ends = {v for s in strategies if s.jumps is not None
            for iv in s.jumps.intervals for v in iv if math.isfinite(v)}
    return np.array(sorted(ends), dtype=float)


def _snap(y, ends):
    # x - (x - l)/2 - (x - l)/2 can miss l by an ulp; land exactly on l instead
    for a in ends:
        near = np.abs(y - a) <= SNAP_ULPS * np.spacing(a)
        y[near] = a
    return y


def resolve_jumps_array(x, J1: Callable, J2: Callable, cap: int = MAX_JUMP_ROUNDS, ends=()):
    """Vectorised jump resolution.

    A landing within ``SNAP_ULPS`` ulps of a point of ``ends`` is moved onto
    it, and a round that leaves the state unchanged in floating point ends
    the iteration without being recorded.

    Returns ``(x_after, attempts_1, attempts_2, iterations, stuck)`` where
    ``stuck`` marks entries that hit the iteration cap.
    """
    y = np.array(x, dtype=float, copy=True)
    a1 = np.zeros_like(y)
    a2 = np.zeros_like(y)
    its = np.zeros(y.shape, dtype=np.int64)
    active = np.ones(y.shape, dtype=bool)
    ends = np.asarray(ends, dtype=float)
    for _ in range(cap):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        ya = y[idx]
        j1 = np.asarray(J1(ya), dtype=float)
        j2 = np.asarray(J2(ya), dtype=float)
        yn = _snap(np.maximum(ya - (j1 + j2), 0.0), ends)
        moving = ((j1 + j2) > 0) & (yn != ya)
        active[idx[~moving]] = False
        idx, yn = idx[moving], yn[moving]
        a1[idx] += j1[moving]
        a2[idx] += j2[moving]
        y[idx] = yn
        its[idx] += 1
        active[idx[yn == 0.0]] = False
    return y, a1, a2, its, active.copy()


def resolve_jumps(x: float, s1: ControlStrategy, s2: ControlStrategy,
                  cap: int = MAX_JUMP_ROUNDS) -> JumpResolution:
    """Apply both players' jumps at state ``x`` until no one jumps.

    Raises
    ------
    JumpNonTermination
        If the iteration does not settle within ``cap`` rounds.
    """
    if x < 0:
        raise ValueError("state must be non-negative")
    y, a1, a2, its, stuck = resolve_jumps_array(np.array([float(x)]), s1.jump_at, s2.jump_at, cap,
                                                 jump_endpoints(s1, s2))
    if stuck[0]:
        raise JumpNonTermination(f"jumps from x={x!r} did not settle in {cap} rounds")
    return JumpResolution(float(x), float(y[0]), float(a1[0]), float(a2[0]), int(its[0]))


# ---------------------------------------------------------------------------
# builders and JSON
# ---------------------------------------------------------------------------

def trivial_strategy() -> ControlStrategy:
    """Extract everything immediately: ``B = [0, inf)``, ``J(x) = x``."""
    return ControlStrategy(jumps=JumpRule(((0.0, math.inf),), "x"), name="full-extraction")


def zero_strategy() -> ControlStrategy:
    return ControlStrategy(name="do-nothing")


def jump_to_level(level: float, rate=None, skew=()) -> ControlStrategy:
    """Jump down to ``level`` from above it, optionally with a rate and skew points."""
    level = float(level)
    return ControlStrategy(rate=rate, skew=skew,
                           jumps=JumpRule(((level, math.inf),), f"x - {level!r}"),
                           name=f"jump-to({level:g})")


def _interval(v):
    a, b = v
    b = math.inf if (isinstance(b, str) and b.lower() in ("inf", "infinity")) or b is None else float(b)
    return float(a), b


def strategy_from_dict(d, equilibrium_rate=None) -> ControlStrategy:
    """Build a strategy from its JSON form.

    ``"lambda": "equilibrium"`` needs ``equilibrium_rate``.
    """
    lam = d.get("lambda")
    if lam is None or lam == "":
        rate = None
    elif lam == "equilibrium":
        if equilibrium_rate is None:
            raise ValueError('"lambda": "equilibrium" needs an equilibrium to refer to')
        rate = equilibrium_rate
    else:
        rate = ExprRate(lam)
    skew = tuple((float(p["x"]), float(p["c"])) for p in d.get("skew", []) or [])
    jd = d.get("jumps")
    jumps = None
    if jd:
        jumps = JumpRule(tuple(_interval(v) for v in jd["intervals"]), jd["map"])
    return ControlStrategy(rate, skew, jumps, name=d.get("name", ""))


def load_strategy(path, equilibrium_rate=None) -> ControlStrategy:
    with open(path) as fh:
        return strategy_from_dict(json.load(fh), equilibrium_rate)
