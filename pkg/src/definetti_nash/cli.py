"""
Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 a check or
verification failed.  All JSON is written with sorted keys and every CSV
number with 17 significant digits, so runs are byte-for-byte repeatable.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction

import numpy as np

from .coeffs import DiffusionModel, ExprEvalError, ExprSyntaxError, check_model
from .equilibrium import (EquilibriumError, build_equilibrium, case_study_equilibrium,
                          check_conditions, find_b_lower)
from .fundsol import FundSolError, solve_psi, structure_report
from .payoff import deviation_suite, estimate_from_paths
from .presets import get_preset
from .profit import ProfitRate, check_b_admissible, skew_intensity
from .simulate import InadmissiblePair, SimConfig, SimulationError, batch_simulate
from .strategy import JumpNonTermination, load_strategy, validate_strategy

EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# -- output helpers ---------------------------------------------------------

def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_clean(v) for v in o.tolist()]
    if isinstance(o, (np.floating, float)):
        v = float(o)
        if math.isfinite(v):
            return v
        return "nan" if v != v else ("inf" if v > 0 else "-inf")
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, Fraction):
        return str(o)
    return o


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _emit(obj, out=None, name="report.json"):
    text = dumps(obj)
    if out:
        path = out if out.endswith(".json") else os.path.join(out, name)
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _fmt_b(b):
    return f"{b:g}".replace(".", "p").replace("-", "m")


# -- loading ----------------------------------------------------------------

def _load_json(path, what):
    if not path:
        raise ConfigError(f"--{what} is required")
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read {what} file {path!r}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{what} file {path!r} is not valid JSON: {err}") from None


def _model(args):
    if getattr(args, "example", None):
        return get_preset(args.example).model
    try:
        return DiffusionModel.from_dict(_load_json(args.model, "model"))
    except (ValueError, ExprSyntaxError) as err:
        raise ConfigError(f"bad model: {err}") from None


def _profit(args):
    if getattr(args, "example", None):
        pre = get_preset(args.example)
        return pre.profit or ProfitRate.constant(1.0)
    if not args.profit:
        return ProfitRate.constant(1.0)
    try:
        return ProfitRate.from_dict(_load_json(args.profit, "profit"))
    except (ValueError, ExprSyntaxError) as err:
        raise ConfigError(f"bad profit rate: {err}") from None


def _thresholds(args):
    if args.b:
        return [float(b) for b in args.b]
    if getattr(args, "example", None):
        pre = get_preset(args.example)
        if pre.thresholds:
            return list(pre.thresholds)
    raise ConfigError("--b is required")


def _solve(args, m):
    try:
        return solve_psi(m, args.xmax, args.dx)
    except (ValueError, FundSolError) as err:
        raise ConfigError(f"cannot solve for psi: {err}") from None


def _positive(name, v):
    if not v > 0:
        raise ConfigError(f"--{name} must be positive")


def _sim_config(args, n_default=2000):
    for name in ("dt", "tmax"):
        _positive(name, getattr(args, name))
    paths = args.paths if args.paths is not None else n_default
    if paths < 1:
        raise ConfigError("--paths must be at least 1")
    return SimConfig(dt=args.dt, t_max=args.tmax, n_paths=paths, seed=args.seed,
                     workers=args.workers)


def _parse_grid(text):
    try:
        a, b, s = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError("--b-grid must be start:stop:step") from None
    if s <= 0 or b < a:
        raise ConfigError("--b-grid needs step > 0 and stop >= start")
    n = int(math.floor((b - a) / s + 1e-9))
    return [a + k * s for k in range(n + 1)]


def _target(args, m, fs, g):
    """Equilibrium selected by --case-study/--example or by --b."""
    case = None
    if args.case_study:
        case = (args.ell, args.w)
    elif getattr(args, "example", None) and get_preset(args.example).case_study:
        case = get_preset(args.example).case_study
    try:
        if case:
            return case_study_equilibrium(m, fs, *case)
        b = _thresholds(args)
        if len(b) != 1:
            raise ConfigError("give exactly one --b")
        return build_equilibrium(m, g, fs, b[0], args.left_variant)
    except EquilibriumError as err:
        raise ConfigError(str(err)) from None


# -- commands ---------------------------------------------------------------

def cmd_solve(args):
    m, g = _model(args), _profit(args)
    fs = _solve(args, m)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    reports = []
    ok = True
    for b in _thresholds(args):
        try:
            eq = build_equilibrium(m, g, fs, b, args.left_variant)
        except EquilibriumError as err:
            raise ConfigError(str(err)) from None
        rep = check_conditions(eq)
        ok &= rep.verdict
        if args.format == "csv":
            path = os.path.join(out, f"curve_b{_fmt_b(b)}.csv")
            eq.to_csv(path)
        else:
            path = os.path.join(out, f"curve_b{_fmt_b(b)}.json")
            x = fs.grid
            lo, hi = eq.value_slopes(x)
            with open(path, "w") as fh:
                fh.write(dumps({"x": x, "V": eq.value(x), "dV_left": lo, "dV_right": hi,
                                "lambda": eq.rate(x)}))
        reports.append({"equilibrium": eq.summary(), "conditions": rep.to_dict(),
                        "file": os.path.basename(path)})
    _emit({"model": m.to_dict(), "profit": g.to_dict(), "results": reports}, None)
    return EXIT_FAIL if (args.strict and not ok) else EXIT_OK


def cmd_check(args):
    m = _model(args)
    rep = check_model(m, args.xmax, args.dx)
    fs = _solve(args, m)
    kappa = rep.assumption2_kappa if rep.assumption2_kappa is not None else 0.0
    res = {"model": m.to_dict(), "assumptions": rep.to_dict(),
           "structure": structure_report(fs, kappa).to_dict()}
    ok = rep.ok
    if args.profit or getattr(args, "example", None):
        g = _profit(args)
        if args.b:
            adm = [check_b_admissible(g, float(b), args.xmax, include_b=args.left_variant).to_dict()
                   for b in args.b]
            res["admissibility"] = adm
            ok &= all(a["verdict"] for a in adm)
    _emit(res, args.out, "check.json")
    return EXIT_FAIL if (args.strict and not ok) else EXIT_OK


def cmd_find_b(args):
    m, g = _model(args), _profit(args)
    fs = _solve(args, m)
    grid = _parse_grid(args.b_grid) if args.b_grid else [0.5 * k for k in range(int(fs.x_max))]
    grid = [b for b in grid if b <= fs.x_max]
    try:
        b = find_b_lower(m, g, fs, grid, args.left_variant)
    except EquilibriumError as err:
        raise ConfigError(str(err)) from None
    _emit({"b_lower": b, "grid": [grid[0], grid[-1], len(grid)]}, args.out, "find_b.json")
    return EXIT_FAIL if (args.strict and b is None) else EXIT_OK


def _strategies(args, target):
    eq_strategy = target.strategy() if target is not None else None
    out = []
    for path in (args.strategy1, args.strategy2):
        if path is None:
            if eq_strategy is None:
                raise ConfigError("strategies are required without an equilibrium")
            out.append(eq_strategy)
            continue
        try:
            rate = eq_strategy.rate if eq_strategy is not None else None
            out.append(load_strategy(path, rate))
        except OSError as err:
            raise ConfigError(f"cannot read strategy {path!r}: {err.strerror}") from None
        except (ValueError, KeyError, ExprSyntaxError) as err:
            raise ConfigError(f"bad strategy {path!r}: {err}") from None
    return out


def cmd_simulate(args):
    m, g = _model(args), _profit(args)
    fs = _solve(args, m)
    target = None
    if args.b or args.case_study or None in (args.strategy1, args.strategy2):
        target = _target(args, m, fs, g)
        g = target.g
    s1, s2 = _strategies(args, target)
    grid = fs.grid[::10]
    for s in (s1, s2):
        rep = validate_strategy(s, grid)
        if not rep.valid:
            raise ConfigError("invalid strategy: " + "; ".join(rep.violations))
    cfg = _sim_config(args)
    x0 = args.x0[0] if args.x0 else 1.0
    try:
        paths = batch_simulate(m, s1, s2, x0, cfg, g=g)
    except (InadmissiblePair, JumpNonTermination) as err:
        _emit({"error": str(err), "payoff": "-inf"}, args.out, "simulate.json")
        return EXIT_FAIL
    except SimulationError as err:
        raise ConfigError(str(err)) from None
    res = {"config": cfg.to_dict(), "x0": x0,
           "player_1": estimate_from_paths(paths, g, m.r, 1, cfg.t_max).to_dict(),
           "player_2": estimate_from_paths(paths, g, m.r, 2, cfg.t_max).to_dict()}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "paths.json"), "w") as fh:
            fh.write(dumps([p.summary() for p in paths]))
        if args.trace is not None:
            from dataclasses import replace
            from .simulate import simulate_path
            rec = simulate_path(m, s1, s2, x0, replace(cfg, trace=True), index=args.trace, g=g)
            with open(os.path.join(args.out, f"trace_{args.trace}.csv"), "w") as fh:
                fh.write("t,X,dD1_rate,dD1_local,dD2_rate,dD2_local\n")
                for row in rec.trace[:, :6]:
                    fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    _emit(res, args.out, "simulate.json")
    return EXIT_OK


def cmd_verify(args):
    m, g = _model(args), _profit(args)
    fs = _solve(args, m)
    target = _target(args, m, fs, g)
    x0s = args.x0 or (list(get_preset(args.example).x0) if getattr(args, "example", None) else None)
    if not x0s:
        raise ConfigError("--x0 is required")
    if args.which == "equilibrium":
        cfg = _sim_config(args, 20000)
        s = target.strategy()
        rows = []
        for x0 in x0s:
            paths = batch_simulate(m, s, s, x0, cfg, g=target.g)
            est = estimate_from_paths(paths, target.g, m.r, 1, cfg.t_max, target.value_sup)
            V = float(target.value(x0))
            tol = max(3 * est.stderr, args.rel_tol * V)
            rows.append({"x0": x0, "analytic": V, "estimate": est.to_dict(),
                         "error": est.mean - V, "tolerance": tol,
                         "verdict": abs(est.mean - V) <= tol})
        res = {"which": "equilibrium", "config": cfg.to_dict(), "results": rows,
               "all_pass": all(r["verdict"] for r in rows)}
    else:
        cfg = _sim_config(args, 4000)
        reps = [deviation_suite(target, x0, cfg, delta=args.delta, extra_rate=args.extra_rate)
                for x0 in x0s]
        res = {"which": "deviations", "results": reps, "all_pass": all(r["all_pass"] for r in reps)}
    _emit(res, args.out, f"verify_{args.which}.json")
    return EXIT_OK if res["all_pass"] else EXIT_FAIL


def cmd_example(args):
    pre = get_preset(args.name)
    out = args.out or os.path.join(".", f"example-{pre.name}")
    os.makedirs(out, exist_ok=True)
    m = pre.model
    fs = solve_psi(m, pre.x_max, args.dx)
    with open(os.path.join(out, "model.json"), "w") as fh:
        fh.write(dumps(m.to_dict()))
    res = {"example": pre.name, "description": pre.description, "model": m.to_dict(),
           "assumptions": check_model(m, pre.x_max, args.dx).to_dict()}
    ok = True
    if pre.case_study:
        cs = case_study_equilibrium(m, fs, *pre.case_study)
        cs.to_csv(os.path.join(out, "curve_case_study.csv"))
        with open(os.path.join(out, "profit.json"), "w") as fh:
            fh.write(dumps(cs.g.to_dict()))
        s = cs.strategy()
        with open(os.path.join(out, "strategy.json"), "w") as fh:
            fh.write(dumps({"lambda": "", "skew": [{"x": x, "c": c} for x, c in s.skew],
                            "jumps": s.jumps.to_dict()}))
        res["equilibrium"] = cs.summary()
        res["values"] = {f"{x:g}": cs.value(x) for x in pre.x0}
    else:
        g = pre.profit or ProfitRate.constant(1.0)
        with open(os.path.join(out, "profit.json"), "w") as fh:
            fh.write(dumps(g.to_dict()))
        eqs = []
        for b in pre.thresholds:
            eq = build_equilibrium(m, g, fs, b, args.left_variant)
            eq.to_csv(os.path.join(out, f"curve_b{_fmt_b(b)}.csv"))
            rep = check_conditions(eq)
            ok &= rep.verdict
            summ = eq.summary()
            summ["skew_list_exact"] = [[str(Fraction(l).limit_denominator()),
                                        str(skew_intensity(g, l, exact=True))] for l, _ in eq.skew_list]
            summ["conditions"] = rep.to_dict()
            summ["values"] = {f"{x:g}": eq.value(x) for x in pre.x0}
            eqs.append(summ)
        res["equilibria"] = eqs
        with open(os.path.join(out, "strategy.json"), "w") as fh:
            fh.write(dumps({"lambda": "equilibrium",
                            "skew": [{"x": x, "c": c} for x, c in eqs[0]["skew_list"]]}))
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(dumps(res))
    sys.stdout.write(dumps(res))
    return EXIT_OK if ok else EXIT_FAIL


# -- parser -----------------------------------------------------------------

def _common(p, model=True):
    if model:
        p.add_argument("--model", help="model JSON {r, mu, sigma}")
        p.add_argument("--profit", help="profit-rate JSON {pieces, point_values}")
        p.add_argument("--example", choices=["first", "g-jump", "g-complicated", "case-study"],
                       help="use a bundled configuration instead of --model/--profit")
    p.add_argument("--xmax", type=float, default=50.0)
    p.add_argument("--dx", type=float, default=1e-3)
    p.add_argument("--out", help="output directory (or .json file for reports)")
    p.add_argument("--format", choices=["csv", "json"], default="json")
    p.add_argument("--strict", action="store_true", help="exit 2 when a check fails")
    p.add_argument("--left-variant", action="store_true",
                   help="use g(b-) at the threshold and a skew point at b")


def _sim(p):
    p.add_argument("--x0", type=float, nargs="+")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--tmax", type=float, default=150.0)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)


def _eq_select(p):
    p.add_argument("--b", type=float, nargs="+")
    p.add_argument("--case-study", action="store_true",
                   help="reflection/jump equilibrium with --ell and --w")
    p.add_argument("--ell", type=float, default=10.0)
    p.add_argument("--w", type=float, default=0.25)


def build_parser():
    p = _Parser(prog="definetti-nash", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("solve", help="value/rate curves and condition reports")
    _common(q)
    q.add_argument("--b", type=float, nargs="+")
    q.set_defaults(func=cmd_solve)

    q = sub.add_parser("check", help="model assumptions, psi structure, admissibility")
    _common(q)
    q.add_argument("--b", type=float, nargs="+")
    q.set_defaults(func=cmd_check)

    q = sub.add_parser("find-b", help="grid-certified lower threshold")
    _common(q)
    q.add_argument("--b-grid", help="start:stop:step")
    q.set_defaults(func=cmd_find_b)

    q = sub.add_parser("simulate", help="simulate a strategy pair")
    _common(q)
    _sim(q)
    _eq_select(q)
    q.add_argument("--strategy1")
    q.add_argument("--strategy2")
    q.add_argument("--trace", type=int, help="also write the step trace of this path")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("verify", help="Monte Carlo checks of an equilibrium")
    q.add_argument("which", choices=["equilibrium", "deviations"])
    _common(q)
    _sim(q)
    _eq_select(q)
    q.add_argument("--rel-tol", type=float, default=0.02)
    q.add_argument("--delta", type=float, default=1.0)
    q.add_argument("--extra-rate", type=float, default=0.5)
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("example", help="run a bundled example")
    q.add_argument("name", choices=["first", "g-jump", "g-complicated", "case-study"])
    _common(q, model=False)
    q.set_defaults(func=cmd_example)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExprEvalError, FundSolError, EquilibriumError, SimulationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
