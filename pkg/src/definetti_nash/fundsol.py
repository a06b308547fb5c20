"""
Increasing fundamental solution of the generator equation
=========================================================

``psi`` solves ``sigma(x)^2/2 psi'' + mu(x) psi' = r psi`` on ``[0, x_max]``
with ``psi(0) = 0`` and ``psi'(0) = 1``.  It is integrated with fixed-step
RK4 on a uniform grid.  Because ``psi`` may grow very fast, the pair
``(psi, psi')`` is stored in scaled form with a per-node log factor: the true
values are ``psi_s[k] * exp(log_scale[k])``.  Every formula downstream uses
ratios ``psi(x)/psi'(b)``, which the scaling leaves untouched.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .coeffs import DiffusionModel

__all__ = ["FundamentalSolution", "StructureReport", "FundSolError",
           "solve_psi", "psi_ratio", "structure_report"]

_RESCALE_AT = 1e150
_CHECK_EVERY = 1000
_CHECK_TOL = 1e-6


class FundSolError(RuntimeError):
    """Integration failure: non-positive volatility, or step-halving check failed."""


@dataclass(frozen=True)
class FundamentalSolution:
    """Grid representation of ``psi`` and ``psi'``.

    Attributes
    ----------
    grid : ndarray
        Uniform nodes ``0, dx, ..., x_max``.
    psi_s, dpsi_s : ndarray
        Scaled ``psi`` and ``psi'``.
    log_scale : ndarray
        Log factor per node (non-decreasing step function).
    d2psi_s : ndarray
        Scaled ``psi''`` from the ODE identity ``2 (r psi - mu psi') / sigma^2``.
    richardson_max : float
        Largest relative step-halving deviation seen by the spot checks.
    """
    model: DiffusionModel
    dx: float
    grid: np.ndarray
    psi_s: np.ndarray
    dpsi_s: np.ndarray
    log_scale: np.ndarray
    d2psi_s: np.ndarray
    richardson_max: float = 0.0

    @property
    def x_max(self) -> float:
        return float(self.grid[-1])

    # -- interpolation --------------------------------------------------------
    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        tol = 1e-9 * max(1.0, self.x_max)
        if np.any(x < -tol) or np.any(x > self.x_max + tol):
            raise ValueError(f"query outside the grid [0, {self.x_max}]")
        x = np.clip(x, 0.0, self.x_max)
        k = np.minimum((x / self.dx).astype(np.int64), len(self.grid) - 2)
        s = (x - self.grid[k]) / self.dx
        return x, k, s

    def _hermite(self, v, dv, x):
        """Cubic Hermite value in the scale of the left node, and that node's log factor."""
        x, k, s = self._locate(x)
        rel = np.exp(self.log_scale[k + 1] - self.log_scale[k])
        h = self.dx
        v0, v1 = v[k], v[k + 1] * rel
        d0, d1 = dv[k], dv[k + 1] * rel
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * v0 + h10 * h * d0 + h01 * v1 + h11 * h * d1, self.log_scale[k]

    def scaled_psi(self, x):
        """``(value, log_factor)`` with ``psi(x) = value * exp(log_factor)``."""
        return self._hermite(self.psi_s, self.dpsi_s, x)

    def scaled_dpsi(self, x):
        return self._hermite(self.dpsi_s, self.d2psi_s, x)

    def psi(self, x):
        v, L = self.scaled_psi(x)
        out = v * np.exp(L)
        return float(out) if np.ndim(out) == 0 else out

    def dpsi(self, x):
        v, L = self.scaled_dpsi(x)
        out = v * np.exp(L)
        return float(out) if np.ndim(out) == 0 else out

    def d2psi(self, x=None):
        """``psi''`` at the nodes (``x`` None) or at arbitrary points via the ODE identity."""
        if x is None:
            return self.d2psi_s * np.exp(self.log_scale)
        m = self.model
        r, mu, sig = m.r, m.drift(x), m.vol(x)
        return 2.0 * (r * self.psi(x) - mu * self.dpsi(x)) / sig ** 2

    def ratio(self, x, b):
        """``psi(x) / psi'(b)``."""
        vx, lx = self.scaled_psi(x)
        vb, lb = self.scaled_dpsi(b)
        out = vx / vb * np.exp(lx - lb)
        return float(out) if np.ndim(out) == 0 else out

    def dratio(self, x, b):
        """``psi'(x) / psi'(b)``."""
        vx, lx = self.scaled_dpsi(x)
        vb, lb = self.scaled_dpsi(b)
        out = vx / vb * np.exp(lx - lb)
        return float(out) if np.ndim(out) == 0 else out

    # -- diagnostics ----------------------------------------------------------
    def ode_residual(self):
        """Relative ODE residual at interior nodes, ``psi''`` by central differences.

        Returns ``|sigma^2/2 psi'' + mu psi' - r psi| / max(1, |r psi|)``.
        """
        m = self.model
        x = self.grid[1:-1]
        L = self.log_scale[1:-1]
        lo = self.psi_s[:-2] * np.exp(self.log_scale[:-2] - L)
        hi = self.psi_s[2:] * np.exp(self.log_scale[2:] - L)
        mid = self.psi_s[1:-1]
        d2 = (hi - 2 * mid + lo) / self.dx ** 2
        res = 0.5 * m.vol(x) ** 2 * d2 + m.drift(x) * self.dpsi_s[1:-1] - m.r * mid
        # normalise in true units: divide by max(exp(-L), |r psi_s|)
        denom = np.maximum(np.exp(-L), np.abs(m.r * mid))
        return np.abs(res) / denom

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "psi_scaled", "log_scale", "dpsi_scaled", "d2psi"])
            d2 = self.d2psi()
            for row in zip(self.grid, self.psi_s, self.log_scale, self.dpsi_s, d2):
                w.writerow([f"{v:.17g}" for v in row])

    def scaled_by(self, factor):
        """Copy with both stored arrays multiplied by ``factor`` (ledger unchanged)."""
        return replace(self, psi_s=self.psi_s * factor, dpsi_s=self.dpsi_s * factor,
                       d2psi_s=self.d2psi_s * factor)


def _rk4_step(y0, y1, h, r, a0, b0, am, bm, a1, b1):
    # system (y0, y1)' = (y1, a(x) y0 - b(x) y1) with a = 2r/sigma^2, b = 2mu/sigma^2
    k1a, k1b = y1, a0 * y0 - b0 * y1
    u0, u1 = y0 + 0.5 * h * k1a, y1 + 0.5 * h * k1b
    k2a, k2b = u1, am * u0 - bm * u1
    u0, u1 = y0 + 0.5 * h * k2a, y1 + 0.5 * h * k2b
    k3a, k3b = u1, am * u0 - bm * u1
    u0, u1 = y0 + h * k3a, y1 + h * k3b
    k4a, k4b = u1, a1 * u0 - b1 * u1
    return (y0 + h / 6 * (k1a + 2 * k2a + 2 * k3a + k4a),
            y1 + h / 6 * (k1b + 2 * k2b + 2 * k3b + k4b))


def _coef(m, x):
    mu, sig = m.drift(x), m.vol(x)
    if np.any(~(sig > 0)):
        bad = np.atleast_1d(x)[~(np.atleast_1d(sig) > 0)][0]
        raise FundSolError(f"volatility is not positive at x={bad!r}")
    return 2.0 * m.r / sig ** 2, 2.0 * mu / sig ** 2


def solve_psi(m: DiffusionModel, x_max: float = 50.0, dx: float = 1e-3) -> FundamentalSolution:
    """Integrate the increasing fundamental solution on ``[0, x_max]``.

    Parameters
    ----------
    m : DiffusionModel
    x_max : float
        Right end of the grid; it is rounded to a whole number of steps.
    dx : float
        RK4 step, ``0 < dx < x_max / 10``.

    Raises
    ------
    FundSolError
        If the volatility is not positive somewhere on the grid, or a
        step-halving spot check deviates by more than ``1e-6`` relative.
    """
    if not (x_max > 0 and 0 < dx < x_max / 10):
        raise ValueError("need x_max > 0 and 0 < dx < x_max/10")
    n = int(round(x_max / dx))
    half = np.arange(2 * n + 1) * (0.5 * dx)
    A, Bc = _coef(m, half)
    A, Bc = A.tolist(), Bc.tolist()
    r = m.r

    psi = np.empty(n + 1)
    dpsi = np.empty(n + 1)
    logs = np.empty(n + 1)
    y0, y1, L = 0.0, 1.0, 0.0
    psi[0], dpsi[0], logs[0] = y0, y1, L
    worst = 0.0
    for k in range(n):
        j = 2 * k
        z0, z1 = _rk4_step(y0, y1, dx, r, A[j], Bc[j], A[j + 1], Bc[j + 1], A[j + 2], Bc[j + 2])
        if k % _CHECK_EVERY == 0:
            xk = k * dx
            qa, qb = _coef(m, np.array([xk + 0.25 * dx, xk + 0.75 * dx]))
            h0, h1 = _rk4_step(y0, y1, 0.5 * dx, r, A[j], Bc[j], qa[0], qb[0], A[j + 1], Bc[j + 1])
            h0, h1 = _rk4_step(h0, h1, 0.5 * dx, r, A[j + 1], Bc[j + 1], qa[1], qb[1],
                               A[j + 2], Bc[j + 2])
            scale = max(abs(h0), abs(h1), 1e-300)
            dev = max(abs(h0 - z0), abs(h1 - z1)) / scale
            worst = max(worst, dev)
            if dev > _CHECK_TOL:
                raise FundSolError(f"step-halving check failed at x={xk:g} (relative {dev:.3g})")
        y0, y1 = z0, z1
        big = max(abs(y0), abs(y1))
        if big > _RESCALE_AT:
            y0, y1 = y0 / big, y1 / big
            L += math.log(big)
        if not (math.isfinite(y0) and math.isfinite(y1)):
            raise FundSolError(f"integration diverged at x={(k + 1) * dx:g}")
        psi[k + 1], dpsi[k + 1], logs[k + 1] = y0, y1, L

    grid = half[::2].copy()
    a_n, b_n = np.array(A[::2]), np.array(Bc[::2])
    d2 = a_n * psi - b_n * dpsi
    return FundamentalSolution(m, float(dx), grid, psi, dpsi, logs, d2, worst)


def psi_ratio(fs: FundamentalSolution, x, b):
    """``psi(x) / psi'(b)`` by cubic Hermite interpolation between nodes."""
    return fs.ratio(x, b)


@dataclass(frozen=True)
class StructureReport:
    """Sign structure of ``psi''`` and tail behaviour of ``psi'``.

    Attributes
    ----------
    b2 : float or None
        Node where ``psi''`` changes from non-negative to negative on
        ``[kappa, x_max]`` (left node of the crossing cell), or None when
        ``psi''`` never becomes negative there.
    concave_on : float
        ``psi''`` is sampled non-positive on ``[0, concave_on)``.
    psi_prime_tail : tuple
        ``psi'`` at the nodes of the last 5% of the grid.
    single_sign_change : bool
        ``psi''`` has at most one change from + to - on ``[kappa, x_max]``.
    dpsi_positive : bool
    """
    kappa: float
    b2: Optional[float]
    concave_on: float
    psi_prime_tail: tuple
    single_sign_change: bool
    dpsi_positive: bool

    def to_dict(self):
        return {"kappa": self.kappa, "b2": self.b2, "concave_on": [0.0, self.concave_on],
                "psi_prime_tail": list(self.psi_prime_tail),
                "single_sign_change": self.single_sign_change,
                "dpsi_positive": self.dpsi_positive}


def structure_report(fs: FundamentalSolution, kappa: float = 0.0) -> StructureReport:
    """Scan the sampled sign pattern of ``psi''`` from ``kappa`` rightwards."""
    if not (0.0 <= kappa <= fs.x_max):
        raise ValueError("kappa outside the grid")
    d2 = fs.d2psi_s
    start = int(math.ceil(kappa / fs.dx - 1e-9))
    seg = d2[start:]
    neg = np.nonzero(seg < 0)[0]
    if neg.size == 0:
        b2 = None
    else:
        k = neg[0]
        b2 = float(fs.grid[start + max(k - 1, 0)])
    # at most one + -> - change: after the first negative node nothing positive
    single = True
    if neg.size:
        single = not np.any(seg[neg[0]:] > 0)
    pos = np.nonzero(d2 > 0)[0]
    concave_on = float(fs.grid[pos[0]]) if pos.size else fs.x_max
    n_tail = max(1, int(math.ceil(0.05 * len(fs.grid))))
    tail = fs.dpsi_s[-n_tail:] * np.exp(fs.log_scale[-n_tail:])
    return StructureReport(float(kappa), b2, concave_on, tuple(float(v) for v in tail),
                           bool(single), bool(np.all(fs.dpsi_s > 0)))
