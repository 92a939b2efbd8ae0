"""Command-line interface.

Exit codes: 0 success, 1 tolerance not met or iteration caps hit, 2 usage
error or scenario/method mismatch, 3 I/O or malformed input file,
4 numerical failure.  Machine output goes to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import jsonio
from .balance import (AffinePriceSpec, Buyer, Trader, check_affine_equilibrium,
                      project_market, single_commodity_equilibrium)
from .errors import (AssumptionViolation, EmptyBalanceSet, InfeasibleMarket, InvalidParams,
                     NumericalFailure, ScenarioError)
from .model import GeneratorParams, random_scenario
from .pricing import PricePolytope, project_polytope
from .solvers import PCGMConfig, SGPConfig, solve_fpi, solve_pcgm, solve_sgp
from .verify import check_qvi_solution

EXIT_OK, EXIT_TOL, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write(path, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError("cannot write %s: %s" % (path, exc)) from None


def _read_json(path):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError("cannot read %s: %s" % (path, exc)) from None
    except json.JSONDecodeError as exc:
        raise InputError("%s is not valid JSON: %s" % (path, exc)) from None


def _load_scenario(path):
    try:
        return jsonio.scenario_from_dict(_read_json(path))
    except ScenarioError as exc:
        raise InputError("%s: %s" % (path, exc)) from None


def _emit(obj) -> None:
    sys.stdout.write(jsonio.dumps(obj))


def _mapper(args):
    if getattr(args, "parallel", False):
        pool = ThreadPoolExecutor()
        return pool.map
    return map


def _stdin_doc(args) -> dict:
    doc = _read_json(args.input)
    if not isinstance(doc, dict):
        raise InputError("input must be a JSON object")
    return doc


def cmd_gen(args) -> int:
    try:
        params = GeneratorParams(mode=args.mode, radius=args.radius)
        s = random_scenario(args.seed, args.agents, args.commodities, params)
    except InvalidParams as exc:
        raise UsageError(str(exc)) from None
    text = jsonio.dumps(jsonio.scenario_to_dict(s))
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        _write(args.out, text)
    return EXIT_OK


def _config(args, scenario, method):
    block = dict(scenario.solver.get(method, {}))
    if method == "pcgm":
        for name in ("beta", "delta0", "delta_decay", "tau0", "tau_decay", "delta_min",
                     "stage_cap", "iter_cap"):
            if getattr(args, name) is not None:
                block[name] = getattr(args, name)
        cls = PCGMConfig
    else:
        for name in ("theta0", "max_iter", "target_gap"):
            if getattr(args, name) is not None:
                block[name] = getattr(args, name)
        cls = SGPConfig
    try:
        return cls(**block)
    except (TypeError, ValueError) as exc:
        raise UsageError("invalid %s options: %s" % (method, exc)) from None


def cmd_solve(args) -> int:
    scenario = _load_scenario(args.scenario)
    method = args.method or scenario.solver.get("method")
    if method is None:
        raise UsageError("no --method given and the scenario names none")
    config = _config(args, scenario, method)
    start = None
    if args.start:
        start, _ = jsonio.state_from_dict(_read_json(args.start), scenario.m, scenario.n)
    solver = {"sgp": solve_sgp, "pcgm": solve_pcgm, "fpi": solve_fpi}[method]
    trace = solver(scenario, config, start, mapper=_mapper(args))
    if args.trace:
        _write(args.trace, trace.to_csv())
    doc = jsonio.solution_to_dict(trace, scenario)
    if args.out in (None, "-"):
        _emit(doc)
    else:
        _write(args.out, jsonio.dumps(doc))
    if not trace.converged:
        print("%s stopped with status %s (gap %.3e)" % (method, trace.status, trace.gap),
              file=sys.stderr)
        return EXIT_TOL
    return EXIT_OK


def cmd_check(args) -> int:
    scenario = _load_scenario(args.scenario)
    try:
        x, p = jsonio.state_from_dict(_read_json(args.state), scenario.m, scenario.n)
    except ScenarioError as exc:
        raise InputError("%s: %s" % (args.state, exc)) from None
    report = check_qvi_solution(x, scenario, args.eps, prices_hint=p, bound_tol=args.bound_tol)
    doc = {"format_version": jsonio.FORMAT_VERSION}
    doc.update(report.to_dict())
    _emit(doc)
    return EXIT_OK if report.passed else EXIT_TOL


def _column_or_matrix(v, where):
    arr = np.array(v, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise InputError("%s must be a finite vector or matrix" % where)
    return arr


def _float_field(doc, key):
    try:
        return _column_or_matrix(doc[key], key)
    except KeyError:
        raise InputError("missing field '%s'" % key) from None
    except (TypeError, ValueError):
        raise InputError("field '%s' must be numeric" % key) from None


def cmd_project(args) -> int:
    doc = _stdin_doc(args)
    z = _float_field(doc, "z")
    lower = _float_field(doc, "lower")
    upper = _float_field(doc, "upper")
    if not (z.shape == lower.shape == upper.shape):
        raise InputError("z, lower and upper must have the same shape")
    y, lam = project_market(z, lower, upper, _mapper(args))
    vec = np.asarray(doc["z"]).ndim == 1
    _emit({"format_version": jsonio.FORMAT_VERSION,
           "y": y[:, 0].tolist() if vec else y.tolist(),
           "lambda": lam.lam[0] if vec else lam.lam.tolist()})
    return EXIT_OK


def cmd_price(args) -> int:
    doc = _stdin_doc(args)
    if "n" not in doc:
        raise InputError("missing field 'n'")
    n = doc["n"]
    try:
        tech = jsonio._agent_from_dict(
            {"lower": [0.0] * n, "upper": [0.0] * n, "radius": [0.0] * n,
             "technology": doc.get("technology", {}), "pricing": doc.get("pricing", {"mode": "lp"})},
            n, "price").technology
        pricing = doc.get("pricing", {"mode": "lp"})
        c = jsonio._vector(doc.get("x"), n, "x")
        V = PricePolytope.from_technology(tech, n)
    except (ScenarioError, TypeError) as exc:
        raise InputError(str(exc)) from None
    c = np.array(c)
    if pricing.get("mode") == "regularized":
        ref = np.array(jsonio._vector(pricing["reference"], n, "reference"))
        beta = jsonio._number(pricing["beta"], "beta")
        p = project_polytope(V, ref + c / beta)
        diff = p - ref
        out = {"price": p.tolist(), "value": float(p @ c - 0.5 * beta * diff @ diff),
               "unique": True}
    else:
        p, unique = V.argmax(c)
        out = {"price": p.tolist(), "value": float(p @ c), "unique": bool(unique)}
    _emit({"format_version": jsonio.FORMAT_VERSION, **out})
    return EXIT_OK


def _participants(doc, key, cls):
    items = doc.get(key)
    if not isinstance(items, list) or not items:
        raise InputError("'%s' must be a nonempty list" % key)
    out = []
    for k, it in enumerate(items):
        where = "%s[%d]" % (key, k)
        if not isinstance(it, dict):
            raise InputError("%s must be an object" % where)
        try:
            jsonio._expect_keys(it, ("intercept", "slope", "lower", "upper"), (), where)
            vals = [jsonio._number(it[f], where + "." + f)
                    for f in ("intercept", "slope", "lower", "upper")]
        except ScenarioError as exc:
            raise InputError(str(exc)) from None
        out.append(cls(*vals))
    return out


def cmd_equilibrium1d(args) -> int:
    doc = _stdin_doc(args)
    spec = AffinePriceSpec(_participants(doc, "traders", Trader),
                           _participants(doc, "buyers", Buyer))
    eq = single_commodity_equilibrium(spec)
    rep = check_affine_equilibrium(spec, eq, args.eps)
    lo, hi = eq.lam_interval
    _emit({"format_version": jsonio.FORMAT_VERSION, "x": eq.x.tolist(), "y": eq.y.tolist(),
           "lambda": eq.lam,
           "lambda_interval": [lo if math.isfinite(lo) else "-inf", hi if math.isfinite(hi) else "inf"],
           "tie": eq.tie, "max_violation": rep.max_violation})
    return EXIT_OK if rep.passed else EXIT_TOL


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qvimarket", description="Market equilibrium solvers on moving feasible sets.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen", help="generate a random scenario")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--agents", type=int, default=3)
    g.add_argument("--commodities", type=int, default=2)
    g.add_argument("--mode", choices=("lp", "regularized"), default="regularized")
    g.add_argument("--radius", type=float, default=None,
                   help="window radius (default: inf for lp, 0.5 for regularized)")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run a solver on a scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--method", choices=("sgp", "pcgm", "fpi"))
    s.add_argument("--trace")
    s.add_argument("--out")
    s.add_argument("--start", help="JSON document with a starting 'state'")
    s.add_argument("--parallel", action="store_true")
    s.add_argument("--theta0", type=float)
    s.add_argument("--max-iter", dest="max_iter", type=int)
    s.add_argument("--target-gap", dest="target_gap", type=float)
    for name, typ in (("beta", float), ("delta0", float), ("delta_decay", float), ("tau0", float),
                      ("tau_decay", float), ("delta_min", float), ("stage_cap", int),
                      ("iter_cap", int)):
        s.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("check", help="certify a candidate equilibrium")
    c.add_argument("--scenario", required=True)
    c.add_argument("--state", required=True)
    c.add_argument("--eps", type=float, default=1e-4)
    c.add_argument("--bound-tol", dest="bound_tol", type=float, default=None)
    c.set_defaults(func=cmd_check)

    for name, func, helptext in (("project", cmd_project, "project onto balanced boxes"),
                                 ("price", cmd_price, "price oracle of one agent"),
                                 ("equilibrium1d", cmd_equilibrium1d,
                                  "single-commodity affine market")):
        q = sub.add_parser(name, help=helptext)
        q.add_argument("--input", default="-", help="JSON input file (default stdin)")
        q.add_argument("--parallel", action="store_true")
        if name == "equilibrium1d":
            q.add_argument("--eps", type=float, default=1e-8)
        q.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except AssumptionViolation as exc:
        print("scenario does not fit the method: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print("input error: %s" % exc, file=sys.stderr)
        return EXIT_IO
    except (EmptyBalanceSet, InfeasibleMarket) as exc:
        print("infeasible input: %s" % exc, file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, FloatingPointError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
