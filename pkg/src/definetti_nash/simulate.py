"""
Path simulation of the controlled state
=======================================

Euler-Maruyama steps with

* rate control from both players,
* skew points handled by straddle resampling: a step crossing a skew point
  ``l`` with aggregate intensity ``c`` ends above ``l`` with probability
  ``(1 - c)/2`` and is mirrored to the other side otherwise (``c = 1`` is
  reflection),
* simultaneous jumps resolved with the alpha-iteration whenever the state
  lands in a jump set, and
* absorption at 0.  Besides the grid check ``X <= 0`` the chance that the
  Brownian bridge between two positive grid states touched 0 is applied as
  a survival weight ``1 - exp(-2 x x' / (sigma^2 dt))``.

The per-step loop is generated as Python source from the model, the two
strategies and the profit rate, and compiled with numba.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ._codegen import compile_functions
from .coeffs import DiffusionModel
from .profit import ProfitRate
from .strategy import (MAX_JUMP_ROUNDS, SNAP_ULPS, ControlStrategy, JumpNonTermination, JumpResolution,
                       jump_endpoints, resolve_jumps)

__all__ = ["SimConfig", "PathRecord", "SimulationError", "InadmissiblePair",
           "simulate_path", "batch_simulate", "merge_skew_points"]

RUNNING, ABSORBED, CENSORED, NAN, STUCK = 0, 1, 2, 3, 4
_STATUS = {ABSORBED: "absorbed", CENSORED: "censored", NAN: "nan", STUCK: "jump-nontermination"}


class SimulationError(RuntimeError):
    """A path produced NaN or its jumps did not settle."""


class InadmissiblePair(ValueError):
    """Aggregate skew intensity above 1 at some point: no strong solution."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Parameters
    ----------
    dt, t_max : float
        Time step and horizon; paths alive at ``t_max`` are censored.
    n_paths : int
    seed : int
        Path ``i`` draws from generators seeded by ``SeedSequence(seed, spawn_key=(i, .))``.
    lt_k : float
        Occupation half-width factor: ``eps = lt_k * sigma(l) * sqrt(dt)``.
    overshoot_estimator : bool
        At reflecting points use the pushed-back displacement as local time.
    bridge_absorption : bool
        Apply the Brownian-bridge survival weight near 0.
    workers : int
        Threads; results do not depend on it.
    chunk : int
        Initial number of steps drawn per generator call (doubles up to 32768).
    max_events : int
        Jump events logged per path (all are tallied).
    trace : bool
        Keep the per-step trace (use with few paths).
    """
    dt: float = 1e-3
    t_max: float = 150.0
    n_paths: int = 1000
    seed: int = 0
    lt_k: float = 2.0
    overshoot_estimator: bool = True
    bridge_absorption: bool = True
    workers: int = 1
    chunk: int = 2048
    max_events: int = 8
    trace: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and self.t_max > 0 and self.n_paths >= 1 and self.lt_k > 0):
            raise ValueError("need dt > 0, t_max > 0, n_paths >= 1 and lt_k > 0")
        if self.workers < 1 or self.chunk < 1:
            raise ValueError("workers and chunk must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def to_dict(self):
        """Settings that determine the paths; worker count and chunking do not."""
        d = asdict(self)
        for k in ("workers", "chunk"):
            d.pop(k)
        return d


@dataclass(frozen=True)
class SkewTable:
    """Union of both players' skew points with per-player intensities."""
    at: np.ndarray
    c1: np.ndarray
    c2: np.ndarray

    @property
    def c_tot(self):
        return self.c1 + self.c2

    @property
    def reflecting(self):
        return np.abs(self.c_tot - 1.0) < 1e-12

    def __len__(self):
        return len(self.at)


def merge_skew_points(s1: ControlStrategy, s2: ControlStrategy) -> SkewTable:
    pts = sorted({x for x, _ in s1.skew} | {x for x, _ in s2.skew})
    c1 = np.array([sum(c for x, c in s1.skew if x == p) for p in pts], dtype=float)
    c2 = np.array([sum(c for x, c in s2.skew if x == p) for p in pts], dtype=float)
    tab = SkewTable(np.array(pts, dtype=float), c1, c2)
    if np.any(tab.c_tot > 1.0 + 1e-12):
        raise InadmissiblePair("aggregate skew intensity exceeds 1")
    return tab


@dataclass
class PathRecord:
    """One simulated path with its control decomposition.

    All tallies are discounted and multiplied by the bridge survival weight.
    ``rate_raw[i]`` is the discounted integral of player ``i``'s rate,
    ``rate_g[i]`` the same weighted by the simulated profit rate,
    ``local_time[j]`` the aggregate discounted local time at skew point ``j``
    and ``jump_payoff[i]`` the in-kernel jump reward.
    """
    index: int
    x0: float
    r: float
    initial_jump: JumpResolution
    status: str
    tau: Optional[float]
    steps: int
    weight: float
    max_state: float
    rate_raw: np.ndarray
    rate_g: np.ndarray
    jump_payoff: np.ndarray
    jump_attempts: np.ndarray
    skew_at: np.ndarray
    skew_c1: np.ndarray
    skew_c2: np.ndarray
    lt_occupation: np.ndarray
    lt_overshoot: np.ndarray
    local_time: np.ndarray
    straddles: np.ndarray
    placed_above: np.ndarray
    n_events: int
    events: np.ndarray = field(repr=False)
    trace: Optional[np.ndarray] = field(default=None, repr=False)
    profit_key: object = field(default=None, repr=False)

    @property
    def censored(self) -> bool:
        return self.status == "censored"

    @property
    def events_complete(self) -> bool:
        return self.n_events <= len(self.events)

    def summary(self):
        ij = self.initial_jump
        return {
            "index": self.index, "x0": self.x0, "status": self.status, "tau": self.tau,
            "steps": self.steps, "weight": self.weight, "max_state": self.max_state,
            "initial_jump": {"x_before": ij.x_before, "x_after": ij.x_after,
                             "attempt_1": ij.total_attempt_1, "attempt_2": ij.total_attempt_2,
                             "iterations": ij.iterations},
            "rate_raw": self.rate_raw.tolist(), "rate_g": self.rate_g.tolist(),
            "jump_payoff": self.jump_payoff.tolist(), "jump_attempts": self.jump_attempts.tolist(),
            "local_time": self.local_time.tolist(), "n_events": self.n_events,
        }


# ---------------------------------------------------------------------------
# kernel generation
# ---------------------------------------------------------------------------

_KERNEL = '''
def kernel(st, z, fu, acc, lt_occ, lt_over, cnt, ev, tr, k_end):
    x = st[0]
    k = int(st[1])
    w = st[2]
    mx = st[5]
    disc = st[6]
    n_ev = int(acc[8])
    status = 0
    i = 0
    n = z.shape[0]
    k0 = k
    while i < n:
        if k >= k_end:
            status = {CENSORED}
            break
        lam1 = r1(x)
        lam2 = r2(x)
        gx = pg_g(x)
        wd = w * disc
        acc[0] += wd * lam1 * {dt!r}
        acc[1] += wd * lam2 * {dt!r}
        acc[2] += wd * lam1 * gx * {dt!r}
        acc[3] += wd * lam2 * gx * {dt!r}
        dl1 = 0.0
        dl2 = 0.0
        for j in range({nsk}):
            if abs(x - SK_L[j]) < SK_EPS[j]:
                lt_occ[j] += wd * SK_OCC[j]
                if not SK_OVER[j]:
                    dl1 += SK_C1[j] * SK_OCC[j]
                    dl2 += SK_C2[j] * SK_OCC[j]
        s = sig(x)
        xn = x + (mu(x) - lam1 - lam2) * {dt!r} + s * {sqdt!r} * z[i]
        disc_n = disc * {ed!r}
        if {nsk} > 0:
            if xn > x:
                for j in range({nsk}):
                    l = SK_L[j]
                    if x <= l and l < xn:
                        cnt[j, 0] += 1.0
                        if fu[i, j] < SK_PUP[j]:
                            cnt[j, 1] += 1.0
                        else:
                            over = xn - l
                            xn = l - over
                            if SK_REFL[j]:
                                lt_over[j] += w * disc_n * 2.0 * over
                                if SK_OVER[j]:
                                    dl1 += SK_C1[j] * 2.0 * over
                                    dl2 += SK_C2[j] * 2.0 * over
                            break
            elif xn < x:
                for jj in range({nsk}):
                    j = {nsk} - 1 - jj
                    l = SK_L[j]
                    if x >= l and l > xn:
                        cnt[j, 0] += 1.0
                        if fu[i, j] < SK_PUP[j]:
                            cnt[j, 1] += 1.0
                            xn = l + (l - xn)
                            break
        if xn <= 0.0:
            xn = 0.0
            status = {ABSORBED}
        elif {bridge}:
            a = 2.0 * x * xn / (s * s * {dt!r})
            if a < 60.0:
                w *= 1.0 - np.exp(-a)
        if {has_jumps} and status == 0:
            y = xn
            a1 = 0.0
            a2 = 0.0
            it = 0
            while True:
                ja = j1(y)
                jb = j2(y)
                if ja + jb <= 0.0:
                    break
                yn = y - (ja + jb)
                if yn < 0.0:
                    yn = 0.0
                for q in range(JEND.shape[0]):
                    if abs(yn - JEND[q]) <= JTOL[q]:
                        yn = JEND[q]
                if yn == y:
                    break
                a1 += ja
                a2 += jb
                y = yn
                it += 1
                if y == 0.0:
                    break
                if it >= {cap}:
                    status = {STUCK}
                    break
            if a1 + a2 > 0.0 and status == 0:
                gain = pg_G(xn) - pg_G(y)
                tot = a1 + a2
                acc[4] += w * disc_n * gain * a1 / tot
                acc[5] += w * disc_n * gain * a2 / tot
                acc[6] += w * disc_n * a1
                acc[7] += w * disc_n * a2
                if n_ev < ev.shape[0]:
                    ev[n_ev, 0] = (k + 1) * {dt!r}
                    ev[n_ev, 1] = xn
                    ev[n_ev, 2] = y
                    ev[n_ev, 3] = a1
                    ev[n_ev, 4] = a2
                    ev[n_ev, 5] = w * disc_n
                n_ev += 1
                xn = y
                if y == 0.0:
                    status = {ABSORBED}
        if xn != xn:
            status = {NAN}
        if xn > mx:
            mx = xn
        if tr.shape[0] > 0:
            row = k - k0
            tr[row, 0] = (k + 1) * {dt!r}
            tr[row, 1] = xn
            tr[row, 2] = lam1 * {dt!r}
            tr[row, 3] = dl1
            tr[row, 4] = lam2 * {dt!r}
            tr[row, 5] = dl2
            tr[row, 6] = w
        x = xn
        disc = disc_n
        k += 1
        i += 1
        if status != 0:
            break
    st[0] = x
    st[1] = k
    st[2] = w
    st[3] = status
    st[5] = mx
    st[6] = disc
    acc[8] = n_ev
    return i
'''


def _rate_source(rate, name):
    if rate is None:
        return f"def {name}(x):\n    return 0.0\n", {}
    return rate.numba_source(name)


def _jump_source(s, name):
    if s.jumps is None:
        return f"def {name}(x):\n    return 0.0\n", {}
    return s.jumps.numba_source(name)


def _build_kernel(m: DiffusionModel, s1, s2, g: ProfitRate, tab: SkewTable, cfg: SimConfig):
    parts = [f"def mu(x):\n    return {m.mu.source()}\n",
             f"def sig(x):\n    return {m.sigma.source()}\n"]
    ns = {}
    for src, extra in (_rate_source(s1.rate, "r1"), _rate_source(s2.rate, "r2"),
                       _jump_source(s1, "j1"), _jump_source(s2, "j2"), g.numba_source("pg")):
        parts.append(src)
        ns.update(extra)
    nsk = len(tab)
    ends = jump_endpoints(s1, s2)
    sig_l = np.atleast_1d(m.vol(tab.at)) if nsk else np.zeros(0)
    eps = cfg.lt_k * sig_l * math.sqrt(cfg.dt)
    refl = tab.reflecting
    ns.update({
        "SK_L": tab.at.copy(), "SK_C1": tab.c1.copy(), "SK_C2": tab.c2.copy(),
        "SK_EPS": eps, "SK_OCC": sig_l ** 2 * cfg.dt / (2 * eps) if nsk else np.zeros(0),
        "SK_PUP": (1.0 - tab.c_tot) / 2.0,
        "SK_REFL": refl.copy(), "SK_OVER": refl & cfg.overshoot_estimator,
        "JEND": ends, "JTOL": SNAP_ULPS * np.spacing(ends),
    })
    has_jumps = s1.jumps is not None or s2.jumps is not None
    parts.append(_KERNEL.format(
        dt=float(cfg.dt), sqdt=math.sqrt(cfg.dt), ed=math.exp(-m.r * cfg.dt), nsk=nsk,
        bridge=bool(cfg.bridge_absorption), has_jumps=has_jumps, cap=MAX_JUMP_ROUNDS,
        CENSORED=CENSORED, ABSORBED=ABSORBED, NAN=NAN, STUCK=STUCK))
    (kernel,) = compile_functions("\n".join(parts), ns, ["kernel"])
    return kernel


class _Simulator:
    def __init__(self, m, s1, s2, g, cfg):
        if g is None:
            g = ProfitRate.constant(1.0)
        self.m, self.s1, self.s2, self.g, self.cfg = m, s1, s2, g, cfg
        self.tab = merge_skew_points(s1, s2)
        self.kernel = _build_kernel(m, s1, s2, g, self.tab, cfg)
        self.profit_key = repr(g.to_dict()) + repr(g.scale)

    def run(self, index, x0, init: JumpResolution):
        cfg, tab = self.cfg, self.tab
        nsk = len(tab)
        st = np.zeros(7)
        st[0] = init.x_after
        st[2] = 1.0
        st[5] = max(x0, init.x_after)
        st[6] = 1.0
        acc = np.zeros(9)
        lt_occ = np.zeros(nsk)
        lt_over = np.zeros(nsk)
        cnt = np.zeros((nsk, 2))
        ev = np.zeros((cfg.max_events, 6))
        k_end = cfg.n_steps
        traces = []
        status = RUNNING
        if init.x_after <= 0.0:
            status = ABSORBED
        else:
            gz = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(index, 0))))
            gu = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(index, 1))))
            chunk = cfg.chunk
            while status == RUNNING:
                n = min(chunk, k_end - int(st[1]))
                if n <= 0:
                    status = CENSORED
                    break
                z = gz.standard_normal(n)
                fu = gu.random((n, nsk)) if nsk else np.zeros((n, 0))
                tr = np.zeros((n, 7)) if cfg.trace else np.zeros((0, 7))
                used = self.kernel(st, z, fu, acc, lt_occ, lt_over, cnt, ev, tr, k_end)
                if cfg.trace:
                    traces.append(tr[:used])
                status = int(st[3])
                if status == RUNNING and int(st[1]) >= k_end:
                    status = CENSORED
                chunk = min(2 * chunk, 32768)
        if status == NAN:
            raise SimulationError(f"path {index} produced NaN at step {int(st[1])} (x before step "
                                  f"unknown); reduce dt or check the coefficients")
        if status == STUCK:
            raise JumpNonTermination(f"path {index}: jumps did not settle")
        steps = int(st[1])
        tau = steps * cfg.dt if status == ABSORBED else None
        local = np.where(tab.reflecting & cfg.overshoot_estimator, lt_over, lt_occ) if nsk else np.zeros(0)
        trace = None
        if cfg.trace:
            head = np.array([[0.0, init.x_after, 0, 0, 0, 0, 1.0]])
            trace = np.vstack([head] + traces) if traces else head
        return PathRecord(
            index=index, x0=float(x0), r=self.m.r, initial_jump=init, status=_STATUS[status], tau=tau,
            steps=steps, weight=float(st[2]), max_state=float(st[5]),
            rate_raw=acc[0:2].copy(), rate_g=acc[2:4].copy(), jump_payoff=acc[4:6].copy(),
            jump_attempts=acc[6:8].copy(), skew_at=tab.at, skew_c1=tab.c1, skew_c2=tab.c2,
            lt_occupation=lt_occ, lt_overshoot=lt_over, local_time=local,
            straddles=cnt[:, 0].copy(), placed_above=cnt[:, 1].copy(), n_events=int(acc[8]),
            events=ev[:min(int(acc[8]), cfg.max_events)].copy(), trace=trace,
            profit_key=self.profit_key)


def simulate_path(m: DiffusionModel, s1: ControlStrategy, s2: ControlStrategy, x0: float,
                  cfg: SimConfig, index: int = 0, g: Optional[ProfitRate] = None) -> PathRecord:
    """Simulate path ``index`` of the batch defined by ``cfg``.

    ``g`` is the profit rate used for the in-kernel reward tallies (a unit
    rate when omitted).
    """
    if x0 < 0:
        raise ValueError("initial state must be non-negative")
    sim = _Simulator(m, s1, s2, g, cfg)
    init = resolve_jumps(float(x0), s1, s2)
    return sim.run(index, float(x0), init)


def batch_simulate(m: DiffusionModel, s1: ControlStrategy, s2: ControlStrategy, x0: float,
                   cfg: SimConfig, g: Optional[ProfitRate] = None) -> list:
    """Simulate ``cfg.n_paths`` independent paths from ``x0``.

    Path ``i`` only depends on ``(cfg.seed, i)``, so the output does not
    depend on ``cfg.workers`` and a larger batch extends a smaller one.
    """
    if x0 < 0:
        raise ValueError("initial state must be non-negative")
    sim = _Simulator(m, s1, s2, g, cfg)
    init = resolve_jumps(float(x0), s1, s2)
    n = cfg.n_paths
    if cfg.workers == 1:
        return [sim.run(i, float(x0), init) for i in range(n)]
    out = [None] * n

    def work(block):
        for i in block:
            out[i] = sim.run(i, float(x0), init)

    blocks = [range(i, n, cfg.workers) for i in range(cfg.workers)]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        for f in [pool.submit(work, b) for b in blocks]:
            f.result()
    return out
