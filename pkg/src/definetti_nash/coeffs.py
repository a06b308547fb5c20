"""
Coefficient expressions and diffusion models
============================================

A deliberately small arithmetic language for the drift :math:`\\mu(x)`, the
volatility :math:`\\sigma(x)` and the pieces of profit rates.  Expressions are
built from numeric literals, the variable ``x``, unary minus, the binary
operators ``+ - * / ^`` and parentheses.

Expressions evaluate on floats or on numpy arrays, evaluate exactly on
:class:`fractions.Fraction` arguments (literals are read as exact decimals),
print back to parseable text, and emit numba-compatible source code for the
path simulator.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Neg", "BinOp",
    "ExprSyntaxError", "ExprEvalError",
    "parse_expr", "eval_expr", "as_expr",
    "DiffusionModel", "AssumptionReport", "check_model",
]


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message, text, offset):
        self.text = text
        self.offset = offset
        super().__init__(f"{message} at offset {offset} in {text!r}")


class ExprEvalError(ArithmeticError):
    """Division by zero, or zero raised to a negative power."""


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class Expr:
    """Base class of expression nodes.  Nodes are immutable."""

    def __call__(self, x):
        return eval_expr(self, x)

    def _eval(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def exact(self, x) -> Fraction:
        """Evaluate in rational arithmetic."""
        return self._exact(Fraction(x))

    def poly(self) -> Optional[tuple]:
        """Exact polynomial coefficients (lowest degree first), or None."""
        p = self._poly()
        if p is None:
            return None
        return _trim(p)

    @property
    def is_constant(self) -> bool:
        p = self.poly()
        return p is not None and len(p) == 1

    def source(self) -> str:
        """Python/numba source text for a scalar evaluation in variable ``x``."""
        return self._source()

    def __str__(self):
        text = self._print()
        # the outermost node's parentheses are redundant
        if isinstance(self, (BinOp, Neg)):
            text = text[1:-1]
        return text


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float
    text: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.text:
            object.__setattr__(self, "text", repr(float(self.value)))

    def _eval(self, x):
        return self.value

    def _exact(self, x):
        return Fraction(self.text)

    def _poly(self):
        return (Fraction(self.text),)

    def _print(self):
        return f"({self.text})" if self.text.startswith("-") else self.text

    def _source(self):
        return f"({float(self.value)!r})"


@dataclass(frozen=True, eq=True)
class Var(Expr):
    def _eval(self, x):
        return x

    def _exact(self, x):
        return x

    def _poly(self):
        return (Fraction(0), Fraction(1))

    def _print(self):
        return "x"

    def _source(self):
        return "x"


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr

    def _eval(self, x):
        return -self.operand._eval(x)

    def _exact(self, x):
        return -self.operand._exact(x)

    def _poly(self):
        p = self.operand._poly()
        return None if p is None else tuple(-c for c in p)

    def _print(self):
        return f"(-{self.operand._print()})"

    def _source(self):
        return f"(-{self.operand._source()})"


_OPS = {"+", "-", "*", "/", "^"}


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def _eval(self, x):
        a = self.left._eval(x)
        b = self.right._eval(x)
        op = self.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if np.any(np.asarray(b) == 0):
                raise ExprEvalError(f"division by zero in {self}")
            return np.true_divide(a, b)
        # power
        a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        if np.any((a_arr == 0) & (b_arr < 0)):
            raise ExprEvalError(f"zero to a negative power in {self}")
        if np.any((a_arr < 0) & (b_arr != np.round(b_arr))):
            raise ExprEvalError(f"negative base with non-integer exponent in {self}")
        return np.power(a_arr, b_arr)

    def _exact(self, x):
        a = self.left._exact(x)
        b = self.right._exact(x)
        op = self.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0:
                raise ExprEvalError(f"division by zero in {self}")
            return a / b
        if b.denominator != 1:
            raise ExprEvalError(f"non-integer exponent {b} has no exact value")
        if a == 0 and b < 0:
            raise ExprEvalError(f"zero to a negative power in {self}")
        return a ** int(b)

    def _poly(self):
        p = self.left._poly()
        q = self.right._poly()
        if p is None or q is None:
            return None
        op = self.op
        if op in "+-":
            n = max(len(p), len(q))
            p = p + (Fraction(0),) * (n - len(p))
            q = q + (Fraction(0),) * (n - len(q))
            return tuple(a + b if op == "+" else a - b for a, b in zip(p, q))
        if op == "*":
            return _polymul(p, q)
        if op == "/":
            q = _trim(q)
            if len(q) != 1 or q[0] == 0:
                return None
            return tuple(c / q[0] for c in p)
        q = _trim(q)
        if len(q) != 1 or q[0].denominator != 1 or q[0] < 0:
            return None
        out = (Fraction(1),)
        for _ in range(int(q[0])):
            out = _polymul(out, p)
        return out

    def _print(self):
        return f"({self.left._print()} {self.op} {self.right._print()})"

    def _source(self):
        op = "**" if self.op == "^" else self.op
        return f"({self.left._source()} {op} {self.right._source()})"


def _polymul(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return tuple(out)


def _trim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return tuple(p)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lit = text[i:j]
            try:
                float(lit)
            except ValueError:
                raise ExprSyntaxError(f"malformed number {lit!r}", text, i) from None
            tokens.append(("num", lit, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            name = text[i:j]
            if name != "x":
                raise ExprSyntaxError(f"unknown identifier {name!r}", text, i)
            tokens.append(("var", name, i))
            i = j
            continue
        if ch in _OPS or ch in "()":
            tokens.append(("op", ch, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", text, i)
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    # expr   := term (('+'|'-') term)*
    # term   := unary (('*'|'/') unary)*
    # unary  := '-' unary | power
    # power  := atom ('^' unary)?         (right associative)
    # atom   := number | 'x' | '(' expr ')'

    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, self.text, tok[2])

    def parse(self):
        e = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        tok = self.peek()
        kind, val, _ = tok
        if kind == "num":
            self.take()
            return Num(float(val), val)
        if kind == "var":
            self.take()
            return Var()
        if kind == "op" and val == "(":
            self.take()
            e = self.expr()
            if self.peek()[1] != ")":
                raise self.error("expected ')'")
            self.take()
            return e
        if kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {val!r}")


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    ``^`` binds tighter than ``*`` and ``/``, which bind tighter than ``+`` and
    ``-``.  ``+ - * /`` associate to the left, ``^`` to the right, and unary
    minus binds looser than ``^`` (``-x^2`` is ``-(x^2)``).

    Raises
    ------
    ExprSyntaxError
        On malformed input or identifiers other than ``x``.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", str(text), 0)
    return _Parser(text).parse()


def as_expr(value: Union[Expr, str, float, int]) -> Expr:
    """Coerce text or a number to an :class:`Expr`."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse_expr(value)
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Num(float(value))
    raise TypeError(f"cannot interpret {value!r} as an expression")


def eval_expr(e: Expr, x):
    """Evaluate ``e`` at ``x`` (float or array) in floating point."""
    scalar = np.ndim(x) == 0
    xx = float(x) if scalar else np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        out = e._eval(xx)
    if scalar:
        return float(out)
    return np.broadcast_to(np.asarray(out, dtype=float), np.shape(xx)).copy()


# ---------------------------------------------------------------------------
# Diffusion model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionModel:
    """Discount rate plus drift and volatility of the uncontrolled state.

    Parameters
    ----------
    r : float
        Discount rate, strictly positive.
    mu, sigma : Expr or str
        Drift and volatility expressions in ``x``.
    """
    r: float
    mu: Expr
    sigma: Expr

    def __post_init__(self):
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "mu", as_expr(self.mu))
        object.__setattr__(self, "sigma", as_expr(self.sigma))
        if not self.r > 0:
            raise ValueError(f"discount rate must be positive, got {self.r}")

    def drift(self, x):
        return eval_expr(self.mu, x)

    def vol(self, x):
        return eval_expr(self.sigma, x)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["r"], d["mu"], d["sigma"])
        except KeyError as err:
            raise ValueError(f"model is missing field {err.args[0]!r}") from None

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return {"r": self.r, "mu": str(self.mu), "sigma": str(self.sigma)}


_C_CANDIDATES = (1.0, 0.5, 0.1, 0.01)


@dataclass(frozen=True)
class AssumptionReport:
    """Grid-based diagnostics of the model-level assumptions.

    The Lipschitz bounds are maximal finite-difference slopes on the grid,
    i.e. estimates and not proofs.
    """
    lipschitz_mu_bound_estimate: float
    lipschitz_sigma_bound_estimate: float
    sigma_positive: bool
    assumption2_kappa: Optional[float]
    assumption2_c: Optional[float]
    grid_used: tuple
    violations: tuple = ()
    notes: tuple = ()

    @property
    def assumption2_holds(self):
        return self.assumption2_kappa is not None

    @property
    def ok(self):
        return self.sigma_positive and self.assumption2_holds and not self.violations

    def to_dict(self):
        return {
            "lipschitz_mu_bound_estimate": self.lipschitz_mu_bound_estimate,
            "lipschitz_sigma_bound_estimate": self.lipschitz_sigma_bound_estimate,
            "sigma_positive": self.sigma_positive,
            "assumption2_kappa": self.assumption2_kappa,
            "assumption2_c": self.assumption2_c,
            "grid_used": list(self.grid_used),
            "violations": list(self.violations),
            "notes": list(self.notes),
        }


def _smallest_kappa(x, f):
    inc = np.diff(f)
    bad = np.nonzero(inc <= 0)[0]
    if bad.size == 0:
        return float(x[0])
    last = bad[-1]
    if last + 1 >= len(x) - 1:
        return None
    return float(x[last + 1])


def check_model(m: DiffusionModel, x_max: float = 50.0, dx: float = 1e-3) -> AssumptionReport:
    """Sample ``m`` on ``[0, x_max]`` and check Lipschitz/positivity/growth.

    The growth condition asks for ``x -> mu(x) - (r + c) x`` to have strictly
    positive sampled increments on ``[kappa, x_max]``.  ``c`` is taken from the
    fixed list ``1, 0.5, 0.1, 0.01``; the pair with the smallest ``kappa`` is
    reported, ties going to the larger ``c``.
    """
    if not (x_max > 0 and dx > 0):
        raise ValueError("x_max and dx must be positive")
    n = int(round(x_max / dx))
    x = np.linspace(0.0, n * dx, n + 1)
    mu = m.drift(x)
    sig = m.vol(x)
    violations = []
    if not np.all(np.isfinite(mu)):
        violations.append("drift is not finite on the grid")
    if not np.all(np.isfinite(sig)):
        violations.append("volatility is not finite on the grid")
    sigma_positive = bool(np.all(sig > 0))
    if not sigma_positive:
        bad = x[sig <= 0][0]
        violations.append(f"volatility is not positive at x={bad!r}")
    lip_mu = float(np.max(np.abs(np.diff(mu))) / dx)
    lip_sig = float(np.max(np.abs(np.diff(sig))) / dx)

    best = None
    for c in _C_CANDIDATES:
        kappa = _smallest_kappa(x, mu - (m.r + c) * x)
        if kappa is not None and (best is None or kappa < best[0]):
            best = (kappa, c)
    notes = ("Lipschitz constants are grid estimates, not bounds",)
    if best is None:
        return AssumptionReport(lip_mu, lip_sig, sigma_positive, None, None,
                                (float(x_max), float(dx)), tuple(violations), notes)
    return AssumptionReport(lip_mu, lip_sig, sigma_positive, best[0], best[1],
                            (float(x_max), float(dx)), tuple(violations), notes)
