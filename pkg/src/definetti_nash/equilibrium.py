"""
Threshold equilibria
====================

Symmetric equilibria in which both players extract at a state-dependent
rate above a threshold ``b`` and push with their local time at the upward
jumps of the profit rate.  With ``K = g(b) psi(b)/psi'(b) - G(b)`` the value
of each player is

.. math::

    V_b(x) = g(b) \\psi(x)/\\psi'(b), \\quad x < b, \\qquad
    V_b(x) = K + G(x), \\quad x \\ge b,

and the rate is ``(sigma^2/2 g' + mu g - r G - r K) / g`` on ``(b, inf)``
minus the breakpoints.  A constant profit rate gives the plain dividend
game.  The module also builds the reflection/jump equilibrium of a profit
rate that vanishes above a level ``l``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .coeffs import DiffusionModel
from .fundsol import FundamentalSolution
from .profit import ProfitRate, check_b_admissible, skew_intensity
from .strategy import ControlStrategy, JumpRule

__all__ = [
    "ThresholdEquilibrium", "EquilibriumRate", "ConditionReport",
    "CaseStudyEquilibrium", "EquilibriumError",
    "build_equilibrium", "check_conditions", "find_b_lower",
    "trivial_value", "case_study_equilibrium", "case_study_profit",
]

_MARGIN_TOL = -1e-9
_RESIDUAL_TOL = 1e-6


class EquilibriumError(ValueError):
    """Precondition failure when building an equilibrium."""


class EquilibriumRate:
    """Extraction rate of a threshold equilibrium, usable as a strategy rate."""

    def __init__(self, eq: "ThresholdEquilibrium"):
        self.eq = eq

    def __call__(self, x):
        return self.eq.rate(x)

    def numba_source(self, name):
        eq = self.eq
        m, g = eq.model, eq.g
        gsrc, ns = g.numba_source(f"{name}_p")
        lines = [gsrc,
                 f"def {name}_mu(x):", f"    return {m.mu.source()}", "",
                 f"def {name}_sig(x):", f"    return {m.sigma.source()}", "",
                 f"def {name}(x):",
                 f"    if x <= {eq.b!r}:",
                 "        return 0.0"]
        for l in g.theta:
            lines += [f"    if x == {l!r}:", "        return 0.0"]
        lines += [f"    gx = {name}_p_g(x)",
                  f"    s = {name}_sig(x)",
                  f"    return (0.5 * s * s * {name}_p_gp(x) + {name}_mu(x) * gx"
                  f" - {m.r!r} * {name}_p_G(x) - {m.r * eq.boundary_constant!r}) / gx", ""]
        return "\n".join(lines), ns

    def __repr__(self):
        return f"EquilibriumRate(b={self.eq.b:g})"


@dataclass(frozen=True)
class ThresholdEquilibrium:
    """Candidate equilibrium of threshold type.

    Attributes
    ----------
    b : float
        Threshold; no control at or below it.
    g_b : float
        Profit weight at the threshold, ``g(b)`` or ``g(b-)`` in the left variant.
    boundary_constant : float
        ``K = g_b psi(b)/psi'(b) - G(b)``.
    skew_list : tuple of (float, float)
        Breakpoints above ``b`` (also at ``b`` in the left variant) with
        non-zero intensity ``c``; each player pushes with ``c`` there.
    """
    model: DiffusionModel
    g: ProfitRate
    fs: FundamentalSolution
    b: float
    left_variant: bool
    g_b: float
    boundary_ratio: float
    boundary_constant: float
    skew_list: tuple
    admissibility: object = field(repr=False, default=None)

    # -- value ----------------------------------------------------------------
    def value(self, x):
        """``V_b(x)``; states at or above ``b`` may lie beyond the grid."""
        xa = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xa)
        out = np.empty_like(flat)
        lo = flat < self.b
        if np.any(lo):
            out[lo] = self.g_b * np.atleast_1d(self.fs.ratio(flat[lo], self.b))
        hi = ~lo
        if np.any(hi):
            out[hi] = self.boundary_constant + np.atleast_1d(self.g.G_eval(flat[hi]))
        return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)

    __call__ = value

    def value_slopes(self, x):
        """One-sided slopes ``(V'(x-), V'(x+))``."""
        xa = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xa)
        left = np.empty_like(flat)
        right = np.empty_like(flat)
        below = flat < self.b
        if np.any(below):
            left[below] = right[below] = self.g_b * np.atleast_1d(self.fs.dratio(flat[below], self.b))
        at = flat == self.b
        above = flat > self.b
        if np.any(above):
            left[above] = self.g.g_left(flat[above])
            right[above] = self.g.g_right(flat[above])
        if np.any(at):
            left[at] = self.g_b
            right[at] = self.g.g_right(self.b)
        if xa.ndim == 0:
            return float(left[0]), float(right[0])
        return left.reshape(xa.shape), right.reshape(xa.shape)

    def value_slope(self, x):
        """Right slope ``V'(x+)`` (the slope off the breakpoints)."""
        return self.value_slopes(x)[1]

    # -- rate -----------------------------------------------------------------
    def rate(self, x):
        """Equilibrium extraction rate of each player."""
        xa = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xa)
        out = np.zeros_like(flat)
        act = flat > self.b
        th = np.array(self.g.theta)
        if th.size:
            act &= ~np.isin(flat, th)
        if np.any(act):
            u = flat[act]
            m, g = self.model, self.g
            gx = g(u)
            out[act] = (0.5 * m.vol(u) ** 2 * g.g_prime(u) + m.drift(u) * gx
                        - m.r * g.G_eval(u) - m.r * self.boundary_constant) / gx
        return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)

    def strategy(self) -> ControlStrategy:
        return ControlStrategy(rate=EquilibriumRate(self), skew=self.skew_list, jumps=None,
                               name=f"threshold(b={self.b:g})")

    @property
    def value_sup(self) -> float:
        return float(self.value(self.fs.x_max))

    def skew_residuals(self):
        """``(V'(l+) - V'(l-))/2 - c (V'(l+) + V'(l-))/2`` at each skew point."""
        out = []
        for l, c in self.skew_list:
            lo, hi = self.value_slopes(l)
            out.append(0.5 * (hi - lo) - c * 0.5 * (hi + lo))
        return tuple(out)

    def to_csv(self, path, x=None):
        """Write ``x, V, dV_left, dV_right, lambda`` at full double precision."""
        x = self.fs.grid if x is None else np.asarray(x, dtype=float)
        v = self.value(x)
        lo, hi = self.value_slopes(x)
        lam = self.rate(x)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "V", "dV_left", "dV_right", "lambda"])
            for row in zip(x, v, lo, hi, lam):
                w.writerow([f"{val:.17g}" for val in row])

    def summary(self):
        return {"b": self.b, "left_variant": self.left_variant, "g_b": self.g_b,
                "boundary_constant": self.boundary_constant,
                "psi_ratio_at_b": self.boundary_ratio,
                "skew_list": [[l, c] for l, c in self.skew_list]}


def build_equilibrium(m: DiffusionModel, g: ProfitRate, fs: FundamentalSolution, b: float,
                      left_variant: bool = False, *, check: bool = True) -> ThresholdEquilibrium:
    """Assemble the threshold equilibrium candidate for ``b``.

    Raises
    ------
    EquilibriumError
        If ``b`` is outside the grid or ``g`` fails the admissibility check.
    """
    b = float(b)
    if not (0.0 <= b <= fs.x_max):
        raise EquilibriumError(f"threshold {b} outside the grid [0, {fs.x_max}]")
    adm = check_b_admissible(g, b, fs.x_max, include_b=left_variant)
    if check and not adm.verdict:
        raise EquilibriumError("profit rate is not admissible: " + "; ".join(adm.violations))
    g_b = g.g_left(b) if left_variant else g(b)
    ratio_b = fs.ratio(b, b)
    K = g_b * ratio_b - g.G_eval(b)
    skew = []
    for l in g.theta:
        if l > b or (left_variant and l == b):
            try:
                c = float(skew_intensity(g, l, exact=True))
            except (ValueError, ArithmeticError):
                c = skew_intensity(g, l)
            if c != 0:
                skew.append((float(l), float(c)))
    return ThresholdEquilibrium(m, g, fs, b, bool(left_variant), float(g_b), float(ratio_b),
                                float(K), tuple(skew), adm)


@dataclass(frozen=True)
class ConditionReport:
    """Margins of the verification conditions on the grid.

    verdict holds iff both margins are at least ``-1e-9`` and the generator
    residual is at most ``1e-6``.
    """
    b: float
    cond_value_slope: float
    cond_rate_nonneg: float
    generator_residual: float
    skew_residual: float
    verdict: bool

    def to_dict(self):
        return {"b": self.b, "cond_value_slope": self.cond_value_slope,
                "cond_rate_nonneg": self.cond_rate_nonneg,
                "generator_residual": self.generator_residual,
                "skew_residual": self.skew_residual, "verdict": self.verdict}


def _away_from(x, points, gap):
    keep = np.ones(x.shape, dtype=bool)
    for p in points:
        keep &= np.abs(x - p) > gap
    return keep


def check_conditions(eq: ThresholdEquilibrium, *, h: float = 1e-3,
                     stride: Optional[int] = None) -> ConditionReport:
    """Check ``V' >= g``, ``lambda >= 0`` and the generator identity.

    The identity ``sigma^2/2 V'' + mu V' - r V - lambda g = 0`` is checked on
    ``(b, x_max)`` with ``V'`` and ``V''`` from central differences of ``V``
    (step ``h``), skipping points within ``2h`` of ``b`` and the breakpoints.
    """
    fs, g, m = eq.fs, eq.g, eq.model
    x = fs.grid if stride is None else fs.grid[::stride]
    th = g.theta
    off = x[_away_from(x, th, 1e-12)]
    slope_r = eq.value_slopes(off)[1]
    value_margin = float(np.min(slope_r - g(off)))
    lam = eq.rate(x)
    rate_margin = float(np.min(lam))

    u = x[(x > eq.b) & (x < fs.x_max - 2 * h)]
    u = u[_away_from(u, (eq.b,) + th, 2 * h)]
    if u.size:
        vp, v0, vm = eq.value(u + h), eq.value(u), eq.value(u - h)
        d1 = (vp - vm) / (2 * h)
        d2 = (vp - 2 * v0 + vm) / h ** 2
        res = 0.5 * m.vol(u) ** 2 * d2 + m.drift(u) * d1 - m.r * v0 - eq.rate(u) * g(u)
        residual = float(np.max(np.abs(res)))
    else:
        residual = 0.0
    skew_res = max((abs(s) for s in eq.skew_residuals()), default=0.0)
    verdict = value_margin >= _MARGIN_TOL and rate_margin >= _MARGIN_TOL and residual <= _RESIDUAL_TOL
    return ConditionReport(eq.b, value_margin, rate_margin, residual, float(skew_res), bool(verdict))


def find_b_lower(m: DiffusionModel, g: ProfitRate, fs: FundamentalSolution,
                 b_grid: Sequence[float], left_variant: bool = False, **kw) -> Optional[float]:
    """Smallest ``b`` in ``b_grid`` such that every grid ``b' >= b`` passes.

    Only a grid-certified surrogate of the true lower bound.  Requires
    ``g(y1) >= g(x)`` for all ``x`` (checked on the grid).
    """
    y1 = g.y1
    if y1 is None:
        raise EquilibriumError("profit rate is not eventually constant")
    sample = g(fs.grid)
    if np.any(sample > g(y1) + 1e-15):
        raise EquilibriumError("the profit rate must attain its maximum beyond y1")
    best = None
    for b in sorted(set(float(v) for v in b_grid), reverse=True):
        try:
            eq = build_equilibrium(m, g, fs, b, left_variant)
        except EquilibriumError:
            break
        if not check_conditions(eq, **kw).verdict:
            break
        best = b
    return best


def trivial_value(g: ProfitRate, x):
    """Each player's value when both extract everything at once: ``G(x)/2``."""
    return 0.5 * g.G_eval(x)


# ---------------------------------------------------------------------------
# reflection and jumps at a level where the profit collapses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseStudyEquilibrium:
    """Reflection at ``ell`` with a shared jump down to it.

    The profit rate is ``w`` below ``ell``, ``1`` at ``ell`` and ``0`` above.
    Each player reflects with intensity 1/2 at ``ell`` and, above it, jumps
    by ``(x - ell)/2``, so the pair lands exactly on ``ell``.
    """
    model: DiffusionModel
    fs: FundamentalSolution
    ell: float
    w: float
    g: ProfitRate

    @property
    def prefactor(self):
        return (self.g(self.ell) + self.g.g_left(self.ell)) / 4.0

    def value(self, x):
        xa = np.minimum(np.asarray(x, dtype=float), self.ell)
        out = self.prefactor * self.fs.ratio(xa, self.ell)
        return float(out) if np.ndim(out) == 0 else out

    __call__ = value

    @property
    def value_sup(self) -> float:
        return float(self.value(self.ell))

    def strategy(self) -> ControlStrategy:
        ell = self.ell
        return ControlStrategy(rate=None, skew=((ell, 0.5),),
                               jumps=JumpRule(((ell, math.inf),), f"(x - {ell!r}) / 2"),
                               name=f"reflect-and-jump(l={ell:g})")

    def to_csv(self, path, x=None):
        x = self.fs.grid if x is None else np.asarray(x, dtype=float)
        v = self.value(x)
        slope = np.where(x < self.ell, self.prefactor * self.fs.dratio(np.minimum(x, self.ell), self.ell), 0.0)
        left = np.where(x <= self.ell, self.prefactor * self.fs.dratio(np.minimum(x, self.ell), self.ell), 0.0)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["x", "V", "dV_left", "dV_right", "lambda"])
            for row in zip(x, v, left, slope, np.zeros_like(x)):
                wr.writerow([f"{val:.17g}" for val in row])

    def summary(self):
        return {"ell": self.ell, "w": self.w, "prefactor": self.prefactor,
                "skew_list": [[self.ell, 0.5]], "jump_set": [[self.ell, "inf"]],
                "jump_map": f"(x - {self.ell!r}) / 2"}


def case_study_profit(ell, w) -> ProfitRate:
    return ProfitRate([(0.0, repr(float(w))), (float(ell), "0")], {float(ell): 1.0})


def case_study_equilibrium(m: DiffusionModel, fs: FundamentalSolution, ell: float,
                           w: float) -> CaseStudyEquilibrium:
    """Build the reflection/jump equilibrium and check its preconditions.

    Requires ``0 < w <= 1/3``, ``mu(0) >= 0`` and ``mu(x) - r x``
    non-decreasing on ``[0, ell)`` (sampled on the solution grid).
    """
    if not (0 < w <= 1.0 / 3.0):
        raise EquilibriumError(f"w must lie in (0, 1/3], got {w}")
    if not (0 < ell <= fs.x_max):
        raise EquilibriumError(f"level {ell} outside the grid")
    if m.drift(0.0) < 0:
        raise EquilibriumError("drift must be non-negative at 0")
    x = fs.grid[fs.grid < ell]
    f = m.drift(x) - m.r * x
    if np.any(np.diff(f) < -1e-12):
        raise EquilibriumError("mu(x) - r x must be non-decreasing below the level")
    return CaseStudyEquilibrium(m, fs, float(ell), float(w), case_study_profit(ell, w))
