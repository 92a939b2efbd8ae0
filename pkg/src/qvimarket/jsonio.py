"""Strict JSON (de)serialization for scenarios, states and solutions.

Every document carries ``"format_version": 1``.  Unknown fields are
rejected so typos surface as errors instead of silently using defaults.
Infinite window radii are written as the string ``"inf"``.
"""
from __future__ import annotations

import json
import math
from dataclasses import fields

import numpy as np

from .errors import ScenarioError
from .model import (AgentSpec, Dimensions, LPSetValued, Regularized, Scenario,
                    TechnologySpec)
from .solvers import PCGMConfig, SGPConfig

FORMAT_VERSION = 1
METHODS = ("sgp", "pcgm", "fpi")


class SchemaError(ScenarioError):
    """Document does not follow the expected JSON layout."""


def _expect_keys(obj, required, optional, where):
    if not isinstance(obj, dict):
        raise SchemaError("%s must be a JSON object" % where)
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise SchemaError("%s: unknown field(s) %s" % (where, ", ".join(sorted(unknown))))
    missing = [k for k in required if k not in obj]
    if missing:
        raise SchemaError("%s: missing field(s) %s" % (where, ", ".join(missing)))


def _version(obj, where):
    v = obj.get("format_version", FORMAT_VERSION)
    if v != FORMAT_VERSION:
        raise SchemaError("%s: unsupported format_version %r" % (where, v))


def _number(v, where, allow_inf=False) -> float:
    if allow_inf and v in ("inf", "Infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError("%s: expected a number, got %r" % (where, v))
    v = float(v)
    if not math.isfinite(v):
        raise SchemaError("%s: non-finite value" % where)
    return v


def _vector(v, n, where, allow_inf=False) -> list[float]:
    if not isinstance(v, list) or len(v) != n:
        raise SchemaError("%s: expected a list of %d numbers" % (where, n))
    return [_number(e, "%s[%d]" % (where, k), allow_inf) for k, e in enumerate(v)]


def _matrix(v, m, n, where) -> np.ndarray:
    if not isinstance(v, list) or len(v) != m:
        raise SchemaError("%s: expected %d rows" % (where, m))
    return np.array([_vector(r, n, "%s[%d]" % (where, i)) for i, r in enumerate(v)])


def _int(v, where) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError("%s: expected an integer, got %r" % (where, v))
    return v


def _radius_out(r: float):
    return "inf" if math.isinf(r) else float(r)


# ---------------------------------------------------------------------------
# scenario


def _agent_from_dict(d, n, where) -> AgentSpec:
    _expect_keys(d, ("lower", "upper", "radius", "technology", "pricing"), (), where)
    tech = d["technology"]
    _expect_keys(tech, (), ("supply", "demand", "coeff"), where + ".technology")
    coeff = tech.get("coeff", [])
    if not isinstance(coeff, list) or any(not isinstance(c, list) or len(c) != 3 for c in coeff):
        raise SchemaError("%s.technology.coeff must be a list of [s, j, a] triples" % where)
    technology = TechnologySpec(
        supply=tuple(_int(j, where + ".technology.supply") for j in tech.get("supply", [])),
        demand=tuple(_int(j, where + ".technology.demand") for j in tech.get("demand", [])),
        coeff=tuple((_int(s, where + ".coeff"), _int(j, where + ".coeff"),
                     _number(a, where + ".coeff")) for s, j, a in coeff))
    pr = d["pricing"]
    if not isinstance(pr, dict) or pr.get("mode") not in ("lp", "regularized"):
        raise SchemaError("%s.pricing.mode must be 'lp' or 'regularized'" % where)
    if pr["mode"] == "lp":
        _expect_keys(pr, ("mode",), (), where + ".pricing")
        pricing = LPSetValued()
    else:
        _expect_keys(pr, ("mode", "reference", "beta"), (), where + ".pricing")
        pricing = Regularized(reference=_vector(pr["reference"], n, where + ".pricing.reference"),
                              weight=_number(pr["beta"], where + ".pricing.beta"))
    return AgentSpec(lower=_vector(d["lower"], n, where + ".lower"),
                     upper=_vector(d["upper"], n, where + ".upper"),
                     radius=_vector(d["radius"], n, where + ".radius", allow_inf=True),
                     technology=technology, pricing=pricing)


def _solver_from_dict(d) -> dict:
    _expect_keys(d, (), ("method",) + METHODS, "solver")
    if "method" in d and d["method"] not in METHODS:
        raise SchemaError("solver.method must be one of %s" % ", ".join(METHODS))
    out = dict(d)
    for key, cls in (("sgp", SGPConfig), ("fpi", SGPConfig), ("pcgm", PCGMConfig)):
        if key in d:
            names = [f.name for f in fields(cls)]
            _expect_keys(d[key], (), names, "solver." + key)
            try:
                cls(**d[key])
            except (TypeError, ValueError) as exc:
                raise SchemaError("solver.%s: %s" % (key, exc)) from None
    return out


def scenario_from_dict(d) -> Scenario:
    _expect_keys(d, ("m", "n", "agents"), ("seed", "solver", "format_version"), "scenario")
    _version(d, "scenario")
    m, n = _int(d["m"], "m"), _int(d["n"], "n")
    agents = d["agents"]
    if not isinstance(agents, list):
        raise SchemaError("agents must be a list")
    return Scenario(dims=Dimensions(m, n),
                    agents=tuple(_agent_from_dict(a, n, "agents[%d]" % i) for i, a in enumerate(agents)),
                    solver=_solver_from_dict(d.get("solver", {})),
                    seed=_int(d.get("seed", 0), "seed"))


def scenario_to_dict(s: Scenario) -> dict:
    agents = []
    for a in s.agents:
        if isinstance(a.pricing, Regularized):
            pricing = {"mode": "regularized", "reference": a.pricing.reference.tolist(),
                       "beta": a.pricing.weight}
        else:
            pricing = {"mode": "lp"}
        agents.append({
            "lower": a.lower.tolist(),
            "upper": a.upper.tolist(),
            "radius": [_radius_out(r) for r in a.radius],
            "technology": {"supply": list(a.technology.supply),
                           "demand": list(a.technology.demand),
                           "coeff": [[s_, j, c] for s_, j, c in a.technology.coeff]},
            "pricing": pricing,
        })
    return {"format_version": FORMAT_VERSION, "m": s.m, "n": s.n, "seed": s.seed,
            "agents": agents, "solver": dict(s.solver)}


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_scenario(path) -> Scenario:
    return scenario_from_dict(load_json(path))


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(scenario_to_dict(s)))


# ---------------------------------------------------------------------------
# states and solutions


def state_from_dict(d, m: int, n: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Read ``state`` (and optional ``prices``) from a state or solution document."""
    if not isinstance(d, dict) or "state" not in d:
        raise SchemaError("state document needs a 'state' matrix")
    _version(d, "state")
    x = _matrix(d["state"], m, n, "state")
    p = None
    if d.get("prices") is not None:
        p = _matrix(d["prices"], m, n, "prices")
    return x, p


def solution_to_dict(trace, scenario: Scenario) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "method": trace.method,
        "status": trace.status,
        "experimental": trace.experimental,
        "state": trace.state.tolist(),
        "prices": np.asarray(trace.prices).tolist(),
        "lambda": trace.clearing.lam.tolist(),
        "gap": trace.gap,
        "iterations": trace.iterations,
        "stages": trace.stages,
        "max_balance_violation": trace.max_balance_violation,
        "max_window_violation": trace.max_window_violation,
        "m": scenario.m,
        "n": scenario.n,
    }
