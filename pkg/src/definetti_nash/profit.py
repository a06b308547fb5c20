"""
Piecewise profit rates
======================

The profit rate :math:`g` weights every unit of extracted resource by the
state at which it is extracted.  It is stored as an ordered list of pieces
``(x_i, expr_i)`` valid on ``[x_i, x_{i+1})`` with the last piece running to
infinity, so that left and right limits and the breakpoint set are explicit.

An optional point-value override at a breakpoint allows rates that are not
right-continuous (the reflection/jump equilibrium needs one: ``w`` below a
level, ``1`` exactly at it and ``0`` above).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .coeffs import BinOp, Expr, Num, as_expr, eval_expr

__all__ = [
    "ProfitRate", "AdmissibilityReport", "JumpCheck",
    "skew_intensity", "check_b_admissible",
]

_FD_STEP = 1e-6
_TABLE_STEP = 1e-3
_TABLE_TAIL = 1000.0


def _shift_poly(p, a):
    """Coefficients of ``p(t + a)`` in ``t`` (exact)."""
    out = [Fraction(0)] * len(p)
    # Horner in the shifted variable
    for c in reversed(p):
        # out = out * (t + a) + c
        nxt = [Fraction(0)] * len(p)
        for k, v in enumerate(out):
            if v:
                nxt[k] += v * a
                if k + 1 < len(p):
                    nxt[k + 1] += v
        nxt[0] += c
        out = nxt
    return tuple(out)


def _horner(coefs, t):
    acc = 0.0 * t
    for c in reversed(coefs):
        acc = acc * t + c
    return acc


@dataclass(frozen=True)
class _Piece:
    start: float
    stop: float                  # math.inf for the final piece
    expr: Expr
    poly: Optional[tuple]        # exact coefficients in x, or None
    # polynomial pieces: antiderivative in t = x - start as floats/fractions
    anti: Optional[tuple] = None
    anti_exact: Optional[tuple] = None
    dpoly: Optional[tuple] = None
    # non-polynomial pieces: Hermite table of G on [start, table_stop]
    table_x: Optional[np.ndarray] = field(default=None, compare=False)
    table_G: Optional[np.ndarray] = field(default=None, compare=False)
    table_g: Optional[np.ndarray] = field(default=None, compare=False)


def _gauss_cells(f, nodes, order=8):
    """Integrals of ``f`` over consecutive cells of ``nodes`` (Gauss-Legendre)."""
    t, w = np.polynomial.legendre.leggauss(order)
    a, b = nodes[:-1], nodes[1:]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * t[None, :]
    vals = f(pts.ravel()).reshape(pts.shape)
    return half * (vals @ w)


class ProfitRate:
    """Piecewise-smooth profit rate with exact one-sided limits.

    Parameters
    ----------
    pieces : sequence of (float, Expr or str)
        Left endpoints and expressions; the first endpoint must be 0 and the
        endpoints strictly increasing.
    point_values : mapping, optional
        ``{breakpoint: value}`` overrides of the value *at* a breakpoint.
    rescale : bool
        Divide by the sampled maximum ``M`` when ``g`` exceeds 1 somewhere;
        ``scale`` keeps ``M`` so payoffs can be converted back.
    x_check : float
        Extent of the grid used to find the maximum and to validate signs.

    Notes
    -----
    ``g(x)`` is right-continuous except at point-value overrides, i.e.
    ``g(x) == g_right(x)`` at every ordinary breakpoint.
    """

    def __init__(self, pieces, point_values=None, *, rescale=True, x_check=50.0):
        pieces = [(float(a), as_expr(e)) for a, e in pieces]
        if not pieces:
            raise ValueError("a profit rate needs at least one piece")
        if pieces[0][0] != 0.0:
            raise ValueError("the first piece must start at 0")
        starts = [a for a, _ in pieces]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("piece endpoints must be strictly increasing")
        pv = {float(k): float(v) for k, v in dict(point_values or {}).items()}
        for k in pv:
            if k not in starts[1:]:
                raise ValueError(f"point value at {k} is not at a breakpoint")

        self.scale = 1.0
        self._raw_pieces = pieces
        self._raw_points = dict(pv)
        self._build(pieces, pv)
        x_top = max(x_check, starts[-1] + 1.0)
        gmax = max(float(np.max(self(np.linspace(0.0, x_top, 20001)))),
                   max(pv.values(), default=0.0),
                   max((self.g_left(a) for a in starts[1:]), default=0.0))
        if not math.isfinite(gmax):
            raise ValueError("profit rate is not finite on the checked grid")
        if gmax > 1.0:
            if not rescale:
                raise ValueError(f"profit rate exceeds 1 (max {gmax}) and rescale is off")
            self.scale = gmax
            text = repr(gmax)
            pieces = [(a, BinOp("/", e, Num(gmax, text))) for a, e in pieces]
            pv = {k: v / gmax for k, v in pv.items()}
            self._build(pieces, pv)

    # -- construction -------------------------------------------------------
    def _build(self, pieces, pv):
        self.point_values = dict(sorted(pv.items()))
        built = []
        for i, (a, e) in enumerate(pieces):
            stop = pieces[i + 1][0] if i + 1 < len(pieces) else math.inf
            p = e.poly()
            if p is not None:
                shifted = _shift_poly(p, Fraction(a))
                anti_exact = (Fraction(0),) + tuple(c / (k + 1) for k, c in enumerate(shifted))
                dpoly = tuple(c * k for k, c in enumerate(p))[1:] or (Fraction(0),)
                built.append(_Piece(a, stop, e, p, tuple(float(c) for c in anti_exact),
                                    anti_exact, dpoly))
            else:
                top = stop if math.isfinite(stop) else a + _TABLE_TAIL
                n = max(2, int(math.ceil((top - a) / _TABLE_STEP)))
                tx = np.linspace(a, top, n + 1)
                cells = _gauss_cells(lambda u: eval_expr(e, u), tx)
                tG = np.concatenate([[0.0], np.cumsum(cells)])
                # g at the right end is the left limit of this piece
                tg = eval_expr(e, tx)
                built.append(_Piece(a, stop, e, None, table_x=tx, table_G=tG, table_g=tg))
        self.pieces = tuple(built)
        # exact/float prefix sums of G at piece starts
        prefix = [0.0]
        prefix_exact = [Fraction(0)]
        for pc in built[:-1]:
            width = pc.stop - pc.start
            if pc.poly is not None:
                prefix.append(prefix[-1] + float(_horner(pc.anti, width)))
                w_exact = Fraction(pc.stop) - Fraction(pc.start)
                prev = prefix_exact[-1]
                prefix_exact.append(None if prev is None else
                                    prev + sum(c * w_exact ** k for k, c in enumerate(pc.anti_exact)))
            else:
                prefix.append(prefix[-1] + float(pc.table_G[-1]))
                prefix_exact.append(None)
        self._prefix = np.array(prefix)
        self._prefix_exact = prefix_exact
        self._starts = np.array([pc.start for pc in built])

    # -- descriptors ----------------------------------------------------------
    @property
    def theta(self) -> tuple:
        """Breakpoints (all piece boundaries), ascending."""
        return tuple(float(s) for s in self._starts[1:])

    @property
    def y1(self) -> Optional[float]:
        """Smallest breakpoint beyond which ``g`` is constant, or None."""
        last = self.pieces[-1]
        if not last.expr.is_constant:
            return None
        value = last.poly[0]
        i = len(self.pieces) - 1
        while i > 0:
            prev = self.pieces[i - 1]
            if not (prev.poly is not None and len(prev.poly) == 1 and prev.poly[0] == value):
                break
            if prev.stop in self.point_values:
                break
            i -= 1
        return float(self.pieces[i].start)

    @property
    def is_constant(self) -> bool:
        return self.y1 == 0.0 and not self.point_values

    @property
    def is_rcll(self) -> bool:
        return not self.point_values

    def _index(self, x):
        return np.searchsorted(self._starts, x, side="right") - 1

    # -- evaluation -----------------------------------------------------------
    def _eval_pieces(self, x, idx, fn):
        out = np.empty_like(x)
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = fn(self.pieces[i], x[mask])
        return out

    @staticmethod
    def _check(x):
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0):
            raise ValueError("profit rate is defined on [0, inf) only")
        return arr

    def g_right(self, x):
        """Right limit ``g(x+)``."""
        arr = self._check(x)
        flat = np.atleast_1d(arr).ravel()
        out = self._eval_pieces(flat, self._index(flat), lambda pc, u: eval_expr(pc.expr, u))
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def g_left(self, x):
        """Left limit ``g(x-)``; at 0 this is ``g(0)``."""
        arr = self._check(x)
        flat = np.atleast_1d(arr).ravel()
        idx = np.maximum(np.searchsorted(self._starts, flat, side="left") - 1, 0)
        out = self._eval_pieces(flat, idx, lambda pc, u: eval_expr(pc.expr, u))
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def g_eval(self, x):
        """``g(x)``: the right limit, or the point value where one is set."""
        arr = self._check(x)
        out = np.atleast_1d(self.g_right(arr)).astype(float)
        xf = np.atleast_1d(arr)
        for at, v in self.point_values.items():
            out[xf == at] = v
        return float(out[0]) if arr.ndim == 0 else out

    __call__ = g_eval

    def g_avg(self, x):
        """``(g(x-) + g(x+)) / 2``."""
        return 0.5 * (self.g_left(x) + self.g_right(x))

    def g_prime(self, x):
        """Right derivative of ``g`` within the piece containing ``x``."""
        arr = self._check(x)
        flat = np.atleast_1d(arr).ravel()

        def deriv(pc, u):
            if pc.dpoly is not None:
                return _horner(tuple(float(c) for c in pc.dpoly), u)
            h = _FD_STEP * np.maximum(1.0, np.abs(u))
            return (eval_expr(pc.expr, u + h) - eval_expr(pc.expr, u - h)) / (2 * h)

        out = self._eval_pieces(flat, self._index(flat), deriv)
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def G_eval(self, x):
        """Antiderivative ``G(x) = int_0^x g(u) du``."""
        arr = self._check(x)
        flat = np.atleast_1d(arr).ravel()
        idx = self._index(flat)

        def integral(pc, u):
            if pc.anti is not None:
                return _horner(pc.anti, u - pc.start)
            if np.any(u > pc.table_x[-1]):
                raise ValueError("G requested beyond the tabulated range of a non-polynomial piece")
            return _hermite(pc.table_x, pc.table_G, pc.table_g, u)

        out = self._eval_pieces(flat, idx, integral) + self._prefix[idx]
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    G = G_eval

    def G_exact(self, x) -> Fraction:
        """Exact ``G(x)`` for rational ``x`` when every piece up to ``x`` is polynomial."""
        x = Fraction(x)
        if x < 0:
            raise ValueError("profit rate is defined on [0, inf) only")
        i = int(self._index(float(x)))
        pc = self.pieces[i]
        base = self._prefix_exact[i]
        if pc.anti_exact is None or base is None:
            raise ValueError("exact antiderivative needs polynomial pieces")
        t = x - Fraction(pc.start)
        return base + sum(c * t ** k for k, c in enumerate(pc.anti_exact))

    def exact_left(self, l) -> Fraction:
        i = max(int(np.searchsorted(self._starts, float(l), side="left")) - 1, 0)
        return self.pieces[i].expr.exact(Fraction(l))

    def exact_right(self, l) -> Fraction:
        return self.pieces[int(self._index(float(l)))].expr.exact(Fraction(l))

    # -- serialization --------------------------------------------------------
    @classmethod
    def constant(cls, w=1.0):
        return cls([(0.0, Num(float(w), repr(float(w))))])

    @classmethod
    def from_dict(cls, d, **kw):
        try:
            pieces = [(p["from"], p["expr"]) for p in d["pieces"]]
        except (KeyError, TypeError) as err:
            raise ValueError(f"malformed profit rate: {err}") from None
        pv = {p["at"]: p["value"] for p in d.get("point_values", []) or []}
        return cls(pieces, pv, **kw)

    @classmethod
    def from_json(cls, path, **kw):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), **kw)

    def to_dict(self):
        d = {"pieces": [{"from": a, "expr": str(e)} for a, e in self._raw_pieces]}
        if self._raw_points:
            d["point_values"] = [{"at": k, "value": v} for k, v in sorted(self._raw_points.items())]
        return d

    def __repr__(self):
        body = ", ".join(f"[{pc.start:g}, {pc.stop:g}): {pc.expr}" for pc in self.pieces)
        return f"ProfitRate({body})"

    # -- code generation ------------------------------------------------------
    def numba_source(self, name):
        """Source for scalar ``{name}_g``, ``{name}_gp`` and ``{name}_G``.

        Returns ``(source, namespace)``; the namespace holds any tables.
        """
        ns = {}
        lines = []
        starts = [pc.start for pc in self.pieces]

        def dispatch(fname, body_of):
            lines.append(f"def {fname}(x):")
            for i in range(len(self.pieces) - 1, 0, -1):
                lines.append(f"    if x >= {starts[i]!r}:")
                lines.append(f"        {body_of(i)}")
            lines.append(f"    {body_of(0)}")
            lines.append("")

        g_lines = [f"def {name}_g(x):"]
        for at, v in self.point_values.items():
            g_lines.append(f"    if x == {at!r}:")
            g_lines.append(f"        return {v!r}")
        g_lines.append(f"    return {name}_gr(x)")
        dispatch(f"{name}_gr", lambda i: f"return {self.pieces[i].expr.source()}")
        lines.extend(g_lines + [""])

        def gp_body(i):
            pc = self.pieces[i]
            if pc.dpoly is not None:
                return f"return {_horner_src([float(c) for c in pc.dpoly], 'x')}"
            e = pc.expr
            return (f"h = {_FD_STEP!r} * max(1.0, abs(x)); "
                    f"return ({_subst(e, '(x + h)')} - {_subst(e, '(x - h)')}) / (2.0 * h)")

        dispatch(f"{name}_gp", gp_body)

        def G_body(i):
            pc = self.pieces[i]
            base = float(self._prefix[i])
            if pc.anti is not None:
                return f"return {base!r} + {_horner_src(list(pc.anti), f'(x - {pc.start!r})')}"
            ns[f"{name}_tx{i}"] = pc.table_x
            ns[f"{name}_tG{i}"] = pc.table_G
            ns[f"{name}_tg{i}"] = pc.table_g
            return (f"return {base!r} + _hermite_scalar({name}_tx{i}, {name}_tG{i}, "
                    f"{name}_tg{i}, x)")

        dispatch(f"{name}_G", G_body)
        return "\n".join(lines), ns


def _horner_src(coefs, var):
    acc = repr(float(coefs[-1]))
    for c in reversed(coefs[:-1]):
        acc = f"({acc} * {var} + {float(c)!r})"
    return acc


def _subst(e: Expr, var: str) -> str:
    # numeric literals never contain an 'x', so textual substitution is safe
    return e.source().replace("x", var)


def _hermite(tx, tG, tg, u):
    """Cubic Hermite interpolation of G with slopes g on a uniform table."""
    h = tx[1] - tx[0]
    k = np.clip(((u - tx[0]) / h).astype(int), 0, len(tx) - 2)
    s = (u - tx[k]) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * tG[k] + h10 * h * tg[k] + h01 * tG[k + 1] + h11 * h * tg[k + 1]


# ---------------------------------------------------------------------------
# Skew intensities and admissibility
# ---------------------------------------------------------------------------

def skew_intensity(g: ProfitRate, l, exact=False):
    """Skew intensity ``(g(l+) - g(l-)) / (g(l+) + g(l-))`` at a breakpoint.

    With ``exact=True`` the value is a :class:`~fractions.Fraction` computed
    from the piece expressions in rational arithmetic.
    """
    if float(l) not in g.theta:
        raise ValueError(f"{l} is not a breakpoint of the profit rate")
    if exact:
        lo, hi = g.exact_left(l), g.exact_right(l)
    else:
        lo, hi = g.g_left(float(l)), g.g_right(float(l))
    if lo + hi == 0:
        raise ZeroDivisionError(f"g vanishes on both sides of {l}")
    return (hi - lo) / (hi + lo)


@dataclass(frozen=True)
class JumpCheck:
    at: float
    delta_g: float
    c: float
    c_in_range: bool


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of the threshold-admissibility checks for a given ``b``."""
    b: float
    jump_points_above_b: tuple
    jumps: tuple
    eventually_constant: bool
    gprime_over_g_bound: float
    codomain_ok: bool
    smooth_off_theta: bool
    rcll: bool
    verdict: bool
    violations: tuple = ()

    def to_dict(self):
        return {
            "b": self.b,
            "jump_points_above_b": list(self.jump_points_above_b),
            "jumps": [{"at": j.at, "delta_g": j.delta_g, "c": j.c, "c_in_range": j.c_in_range}
                      for j in self.jumps],
            "eventually_constant": self.eventually_constant,
            "gprime_over_g_bound": self.gprime_over_g_bound,
            "codomain_ok": self.codomain_ok,
            "smooth_off_theta": self.smooth_off_theta,
            "rcll": self.rcll,
            "verdict": self.verdict,
            "violations": list(self.violations),
        }


def _off_theta_grid(g, lo, hi, n):
    x = np.linspace(lo, hi, n)
    th = np.array(g.theta)
    if th.size:
        near = np.min(np.abs(x[:, None] - th[None, :]), axis=1) < 1e-9
        x = x[~near]
    return x


def check_b_admissible(g: ProfitRate, b: float, x_max: float = 50.0, *,
                       include_b: bool = False, n_grid: int = 20001) -> AdmissibilityReport:
    """Check that ``g`` is admissible for the threshold ``b``.

    ``include_b`` also subjects a breakpoint located exactly at ``b`` to the
    jump conditions, matching the equilibrium variant that uses ``g(b-)``.
    """
    if b < 0:
        raise ValueError("threshold must be non-negative")
    violations = []
    y1 = g.y1
    eventually_constant = y1 is not None
    if not eventually_constant:
        violations.append("g is not eventually constant")

    jumps = []
    above = []
    for l in g.theta:
        if l < b or (l == b and not include_b):
            continue
        lo, hi = g.g_left(l), g.g_right(l)
        dg = hi - lo
        if dg == 0:
            continue
        above.append(l)
        c = skew_intensity(g, l)
        try:
            c_cmp = skew_intensity(g, l, exact=True)
        except (ValueError, ArithmeticError):
            c_cmp = c - 1e-12
        ok = dg > 0 and 0 < c_cmp <= Fraction(1, 2)
        jumps.append(JumpCheck(l, dg, c, ok))
        if not ok:
            violations.append(f"jump at {l} has delta_g={dg:.6g}, c={c:.6g} outside (0, 1/2]")

    rcll = g.is_rcll
    if not rcll:
        violations.append("g has point-value overrides and is not right-continuous")

    x_top = max(x_max, (y1 or 0.0) + 1.0)
    full = np.linspace(0.0, x_top, n_grid)
    gv = g(full)
    codomain_ok = bool(np.all((gv > 0) & (gv <= 1)))
    if not codomain_ok:
        violations.append("g leaves (0, 1] on the grid")

    pts = _off_theta_grid(g, b, x_top, n_grid)
    pts = pts[pts > b]
    if pts.size:
        gp = g.g_prime(pts)
        vals = g(pts)
        smooth = bool(np.all(np.isfinite(gp)) and np.all(np.isfinite(vals)))
        with np.errstate(all="ignore"):
            ratio = np.abs(gp / vals)
        bound = float(np.max(ratio)) if smooth else math.inf
    else:
        smooth, bound = True, 0.0
    if not smooth:
        violations.append("g is not continuously differentiable off its breakpoints")
    elif not math.isfinite(bound):
        violations.append("|g'/g| is unbounded on the grid")

    verdict = not violations
    return AdmissibilityReport(float(b), tuple(above), tuple(jumps), eventually_constant,
                               bound, codomain_ok, smooth, rcll, verdict, tuple(violations))
