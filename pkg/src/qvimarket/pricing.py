"""Price oracles over an agent's technology polytope.

The feasible price set of an agent is the standard simplex cut by one
inequality per supply commodity ``j``::

    sum_{s in demand} a[s, j] * v[s] - v[j] >= 0

Two price maps live on top of it.  The set-valued LP map returns the argmax
face of ``<v, x_i>``; its optimal value ``mu_i`` is the support function of
the polytope, so the argmax is the subdifferential of ``mu_i``.  The
regularized map returns the unique maximizer of
``<v, x_i> - 0.5 * beta_i * ||v - ref_i||^2``, which by completing the square
is the Euclidean projection of ``ref_i + x_i / beta_i`` onto the polytope; its
optimal value ``eta_i`` is convex and differentiable with gradient equal to
the price.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EmptyPolytope, NumericalFailure, WrongPricingMode
from .model import (AgentSpec, LPSetValued, Regularized, Scenario, TechnologySpec,
                    check_price_set_nonempty)
from .simplex import LPInfeasible, StandardFormLP

PRICE_TOL = 1e-9
PROJECTION_GAP = 1e-10


class PricePolytope:
    """``{v in simplex : rows @ v >= 0}`` with a cached simplex phase one."""

    def __init__(self, n: int, rows=None):
        self.n = int(n)
        rows = np.zeros((0, self.n)) if rows is None else np.array(rows, dtype=float, ndmin=2)
        if rows.size == 0:
            rows = np.zeros((0, self.n))
        if rows.shape[1] != self.n:
            raise ValueError("technology rows must have %d columns" % self.n)
        rows.setflags(write=False)
        self.rows = rows
        k = rows.shape[0]
        A = np.zeros((k + 1, self.n + k))
        A[:k, :self.n] = rows
        A[:k, self.n:] = -np.eye(k)
        A[k, :self.n] = 1.0
        b = np.zeros(k + 1)
        b[k] = 1.0
        try:
            self._lp = StandardFormLP(A, b)
        except LPInfeasible:
            raise EmptyPolytope("technology inequalities leave no price vector on the simplex")

    @classmethod
    def from_technology(cls, tech: TechnologySpec, n: int) -> "PricePolytope":
        return _polytope_cached(tech, int(n))

    def __repr__(self):
        return "PricePolytope(n=%d, rows=%d)" % (self.n, self.rows.shape[0])

    def violation(self, v) -> float:
        v = np.asarray(v, dtype=float)
        worst = max(abs(v.sum() - 1.0), float(np.max(-v, initial=0.0)))
        if self.rows.shape[0]:
            worst = max(worst, float(np.max(-(self.rows @ v), initial=0.0)))
        return worst

    def contains(self, v, tol: float = PRICE_TOL) -> bool:
        return self.violation(v) <= tol

    def argmax(self, c, tiebreak: bool = True):
        """Optimal vertex of ``max <c, v>``, and whether it is the only maximizer."""
        c = np.asarray(c, dtype=float).reshape(-1)
        if c.size != self.n:
            raise ValueError("objective must have length %d" % self.n)
        full = np.zeros(self._lp.n_cols)
        full[:self.n] = c
        coords = range(self.n)
        sol = self._lp.maximize(full, lex="min" if tiebreak else None, coords=coords)
        v = np.maximum(sol.x[:self.n], 0.0)
        unique = sol.unique
        if tiebreak and not unique:
            other = self._lp.maximize(full, lex="max", coords=coords)
            unique = bool(np.allclose(other.x[:self.n], v, rtol=0.0, atol=1e-12))
        return v, unique

    def vertices(self) -> np.ndarray:
        """All vertices by brute-force enumeration, sorted lexicographically.

        Each vertex is the solution of the simplex equality plus ``n - 1``
        active inequalities; intended for small ``n`` (cross-checks, oracles).
        """
        n = self.n
        G = np.vstack([np.eye(n), self.rows])
        found = []
        for active in itertools.combinations(range(G.shape[0]), n - 1):
            M = np.vstack([G[list(active)], np.ones(n)])
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            v = np.linalg.solve(M, np.r_[np.zeros(n - 1), 1.0])
            if np.all(G @ v >= -1e-12):
                v = np.where(np.abs(v) < 1e-14, 0.0, v)
                if not any(np.allclose(v, w, atol=1e-10) for w in found):
                    found.append(v)
        if not found:
            raise EmptyPolytope("no vertices found")
        return np.array(sorted(found, key=tuple))


@lru_cache(maxsize=1024)
def _polytope_cached(tech: TechnologySpec, n: int) -> PricePolytope:
    check_price_set_nonempty(tech, n)
    rows = []
    for j in tech.supply:
        g = np.zeros(n)
        g[j] = -1.0
        for s, jj, a in tech.coeff:
            if jj == j:
                g[s] += a
        rows.append(g)
    return PricePolytope(n, rows if rows else None)


@dataclass(frozen=True)
class ValueReport:
    value: float
    gradient_or_subgradient: np.ndarray
    tight: bool


def lp_max(V: PricePolytope, c) -> tuple[np.ndarray, float]:
    """Maximize ``<c, v>`` over the polytope.

    Returns the lexicographically smallest optimal vertex and the optimal
    value (the support function of ``V`` at ``c``).
    """
    v, _ = V.argmax(c)
    return v, float(np.dot(c, v))


def _polytope_of(agent: AgentSpec) -> PricePolytope:
    return PricePolytope.from_technology(agent.technology, agent.n)


def price_set_vertex(agent: AgentSpec, x_row, V: PricePolytope | None = None) -> np.ndarray:
    if not isinstance(agent.pricing, LPSetValued):
        raise WrongPricingMode("agent uses regularized pricing, not the LP price set")
    V = V or _polytope_of(agent)
    return lp_max(V, np.asarray(x_row, dtype=float))[0]


def mu_value(agent: AgentSpec, x_row, V: PricePolytope | None = None) -> float:
    if not isinstance(agent.pricing, LPSetValued):
        raise WrongPricingMode("agent uses regularized pricing, not the LP price set")
    V = V or _polytope_of(agent)
    return lp_max(V, np.asarray(x_row, dtype=float))[1]


def mu_report(agent: AgentSpec, x_row, V: PricePolytope | None = None) -> ValueReport:
    if not isinstance(agent.pricing, LPSetValued):
        raise WrongPricingMode("agent uses regularized pricing, not the LP price set")
    V = V or _polytope_of(agent)
    x_row = np.asarray(x_row, dtype=float)
    v, unique = V.argmax(x_row)
    return ValueReport(value=float(x_row @ v), gradient_or_subgradient=v, tight=unique)


def _require_mode(scenario: Scenario, kind) -> None:
    for i, a in enumerate(scenario.agents):
        if not isinstance(a.pricing, kind):
            raise WrongPricingMode("agent %d uses %s pricing" % (i, a.pricing.mode))


def mu_subgradient(x, scenario: Scenario) -> np.ndarray:
    """Stack the LP price vertices of all agents; an element of the subdifferential of mu."""
    _require_mode(scenario, LPSetValued)
    x = np.asarray(x, dtype=float)
    return np.array([lp_max(V, x[i])[0] for i, V in enumerate(scenario.polytopes())])


def mu_total(x, scenario: Scenario) -> float:
    _require_mode(scenario, LPSetValued)
    x = np.asarray(x, dtype=float)
    return float(sum(lp_max(V, x[i])[1] for i, V in enumerate(scenario.polytopes())))


# ---------------------------------------------------------------------------
# regularized prices


def _affine_minimizer(S: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Barycentric weights of the point of ``aff(S)`` closest to ``z``."""
    if len(S) == 1:
        return np.ones(1)
    D = (S[1:] - S[0]).T
    t, *_ = np.linalg.lstsq(D, z - S[0], rcond=None)
    return np.r_[1.0 - t.sum(), t]


def project_polytope(V: PricePolytope, z, tol: float = PROJECTION_GAP,
                     max_iter: int = 1000) -> np.ndarray:
    """Euclidean projection of ``z`` onto ``V`` by conditional gradient steps.

    This is Wolfe's minimum-norm-point scheme: each major step calls the LP
    oracle for the vertex minimizing the linearized distance, and each minor
    step takes the exact line search along the segment towards the affine
    minimizer of the current vertex set, dropping vertices whose weight
    reaches zero.  Stops when the duality gap ``<x - z, x - v>`` is at most
    ``tol`` (scaled up for large ``|z|``); the final affine solve makes the
    result exact up to rounding once the optimal face has been identified.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    tol = tol * max(1.0, float(z @ z))
    v0, _ = V.argmax(z, tiebreak=False)
    S = v0[None, :]
    w = np.ones(1)
    x = v0
    for _ in range(max_iter):
        g = x - z
        v, _ = V.argmax(-g, tiebreak=False)
        gap = float(g @ (x - v))
        if gap <= tol:
            return x
        if np.any(np.all(np.abs(S - v) <= 1e-14, axis=1)):
            # oracle returned a vertex already in the corral: no progress possible
            if gap <= 1e3 * tol:
                return x
            raise NumericalFailure("projection stalled with gap %.3e" % gap)
        S = np.vstack([S, v])
        w = np.r_[w, 0.0]
        for _minor in range(len(S) + 2):
            mu = _affine_minimizer(S, z)
            if np.all(mu > 1e-15):
                w = mu
                break
            down = mu < w
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.where(down & (mu <= 1e-15), w / (w - mu), np.inf)
            theta = float(np.min(steps))
            if not np.isfinite(theta):
                w = np.clip(mu, 0.0, None)
                w /= w.sum()
                break
            w = w + theta * (mu - w)
            keep = w > 1e-15
            S, w = S[keep], w[keep] / w[keep].sum()
        x = w @ S
    raise NumericalFailure("projection did not converge in %d iterations" % max_iter)


def regularized_price(agent: AgentSpec, x_row, V: PricePolytope | None = None) -> np.ndarray:
    """Unique maximizer of ``<p, x> - 0.5 beta ||p - ref||^2`` over the price set."""
    if not isinstance(agent.pricing, Regularized):
        raise WrongPricingMode("agent uses LP pricing, not the regularized map")
    V = V or _polytope_of(agent)
    reg = agent.pricing
    z = reg.reference + np.asarray(x_row, dtype=float) / reg.weight
    return project_polytope(V, z)


def _eta_from_price(agent: AgentSpec, x_row, p) -> float:
    reg = agent.pricing
    diff = p - reg.reference
    return float(np.dot(p, x_row) - 0.5 * reg.weight * np.dot(diff, diff))


def eta_value(agent: AgentSpec, x_row, V: PricePolytope | None = None) -> float:
    x_row = np.asarray(x_row, dtype=float)
    return _eta_from_price(agent, x_row, regularized_price(agent, x_row, V))


def eta_gradient(x, scenario: Scenario) -> np.ndarray:
    _require_mode(scenario, Regularized)
    x = np.asarray(x, dtype=float)
    return np.array([regularized_price(a, x[i], V)
                     for i, (a, V) in enumerate(zip(scenario.agents, scenario.polytopes()))])


def eta_total(x, scenario: Scenario) -> float:
    _require_mode(scenario, Regularized)
    x = np.asarray(x, dtype=float)
    return float(sum(eta_value(a, x[i], V)
                     for i, (a, V) in enumerate(zip(scenario.agents, scenario.polytopes()))))


# ---------------------------------------------------------------------------
# scenario-level oracle used by the solvers and certificates


def agent_price(agent: AgentSpec, V: PricePolytope, x_row) -> np.ndarray:
    if isinstance(agent.pricing, Regularized):
        return regularized_price(agent, x_row, V)
    return lp_max(V, x_row)[0]


def agent_objective(agent: AgentSpec, x_row, p) -> float:
    """``mu_i`` or ``eta_i`` evaluated from an already computed price row."""
    if isinstance(agent.pricing, Regularized):
        return _eta_from_price(agent, x_row, p)
    return float(np.dot(p, x_row))


def prices(x, scenario: Scenario, mapper=map) -> np.ndarray:
    """Price matrix of all agents at state ``x`` (each agent uses its own mode).

    ``mapper`` may be an executor's ordered ``map`` for per-agent concurrency.
    """
    x = np.asarray(x, dtype=float)
    rows = mapper(agent_price, scenario.agents, scenario.polytopes(), list(x))
    return np.array(list(rows))


def objective(x, scenario: Scenario, p) -> float:
    x = np.asarray(x, dtype=float)
    return float(sum(agent_objective(a, x[i], p[i]) for i, a in enumerate(scenario.agents)))
