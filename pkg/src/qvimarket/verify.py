"""Equilibrium certificates and brute-force reference oracles.

The oracles here deliberately take routes different from the solvers they
check: vertex enumeration plus an epigraph LP for the set-valued case,
plain projected gradient for the regularized case, and an active-set
enumeration of the price QP instead of the min-norm-point projection.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .balance import ClearingPrices, lmo_market, project_market
from .errors import (OracleNotConverged, StateOutsideGlobalBox, TooLargeForOracle,
                     WrongPricingMode)
from .model import (LPSetValued, Regularized, Scenario, balance_residual, box_violation,
                    random_states, state_windows)
from .pricing import PricePolytope, eta_total, mu_total, objective, prices
from .simplex import StandardFormLP

ORACLE_MAX_N = 4


@dataclass
class CertificateReport:
    feasibility_violation: float
    qvi_gap: float
    clearing: ClearingPrices
    partial_violations: np.ndarray
    partial_residuals: np.ndarray
    prices: np.ndarray
    price_source: list[str]
    eps: float
    bound_tol: float

    @property
    def max_partial_violation(self) -> float:
        return float(self.partial_violations.max(initial=0.0))

    @property
    def passed(self) -> bool:
        return (self.feasibility_violation <= self.eps and self.qvi_gap <= self.eps
                and self.max_partial_violation <= self.eps)

    def to_dict(self) -> dict:
        out = {
            "passed": self.passed,
            "eps": self.eps,
            "bound_tol": self.bound_tol,
            "feasibility_violation": self.feasibility_violation,
            "qvi_gap": self.qvi_gap,
            "max_partial_violation": self.max_partial_violation,
            "partial_violations": self.partial_violations.tolist(),
            "prices": self.prices.tolist(),
            "price_source": list(self.price_source),
            "lambda_degenerate": [bool(v) for v in self.clearing.degenerate],
        }
        out.update(self.clearing.to_dict())
        return out


def _select_prices(x, scenario: Scenario, supplied, eps: float):
    """Oracle prices, replaced by supplied rows where those are admissible.

    For set-valued pricing any element of the argmax face is a legitimate
    price, so a supplied row is accepted when it lies in the price set and
    is ``eps``-optimal for the agent's support function.
    """
    p = prices(x, scenario)
    source = ["oracle"] * scenario.m
    if supplied is None:
        return p, source
    supplied = np.asarray(supplied, dtype=float)
    if supplied.shape != p.shape:
        raise ValueError("supplied prices must have shape %s" % (p.shape,))
    for i, (agent, V) in enumerate(zip(scenario.agents, scenario.polytopes())):
        if not isinstance(agent.pricing, LPSetValued):
            continue
        row = supplied[i]
        if V.contains(row, eps) and float(row @ x[i]) >= float(p[i] @ x[i]) - eps:
            p[i] = row
            source[i] = "supplied"
    return p, source


def partial_violations(x, p, lam, lower, upper, bound_tol: float) -> np.ndarray:
    """Per-agent, per-commodity residual of the branch conditions.

    A coordinate within ``bound_tol`` of its lower window bound must have
    ``p >= lam``, at the upper bound ``p <= lam``; an interior coordinate
    must have ``p == lam``.  A degenerate window (both bounds) is exempt.
    """
    x = np.asarray(x, dtype=float)
    diff = np.asarray(p, dtype=float) - np.asarray(lam, dtype=float)[None, :]
    at_lo = np.abs(x - lower) <= bound_tol
    at_hi = np.abs(x - upper) <= bound_tol
    out = np.abs(diff)
    out = np.where(at_lo, np.maximum(0.0, -diff), out)
    out = np.where(at_hi, np.maximum(0.0, diff), out)
    return np.where(at_lo & at_hi, 0.0, out)


def check_qvi_solution(x, scenario: Scenario, eps: float = 1e-4, prices_hint=None,
                       mapper=map, bound_tol: float | None = None) -> CertificateReport:
    """Certificate for a candidate equilibrium ``x``; report only, never raises on bad ``x``.

    ``qvi_gap = <p, x - y>`` with ``y`` from the linear oracle over ``D(x)``
    and ``lam`` from that oracle's balance multipliers.  ``prices_hint`` may
    carry a price selection for set-valued agents (see
    :func:`_select_prices`).  ``partial_residuals`` are the terms
    ``(p_ij - lam_j)(x_ij - y_ij)``; they sum to the gap because both ``x``
    and ``y`` are balanced.

    A point with gap ``eps`` may still sit a distance of order ``eps / |p - lam|``
    from a bound it is converging to, so the "at bound" test uses its own
    tolerance, ``sqrt(eps)`` unless given.
    """
    x = np.asarray(x, dtype=float)
    glo, ghi = scenario.lower, scenario.upper
    feas = max(balance_residual(x), box_violation(x, glo, ghi))
    xc = np.clip(x, glo, ghi)
    try:
        lo, hi = state_windows(scenario, xc)
    except StateOutsideGlobalBox:
        lo, hi = glo, ghi
    feas = max(feas, box_violation(x, lo, hi))
    p, source = _select_prices(xc, scenario, prices_hint, eps)
    y, lam, _ = lmo_market(p, lo, hi, mapper)
    qgap = float(np.sum(p * (x - y)))
    if bound_tol is None:
        bound_tol = float(np.sqrt(eps))
    viol = partial_violations(x, p, lam.lam, lo, hi, bound_tol)
    resid = (p - lam.lam[None, :]) * (x - y)
    return CertificateReport(feasibility_violation=float(feas), qvi_gap=qgap, clearing=lam,
                             partial_violations=viol, partial_residuals=resid, prices=p,
                             price_source=source, eps=eps, bound_tol=bound_tol)


# ---------------------------------------------------------------------------
# reference optima


def brute_force_mu_optimum(scenario: Scenario) -> tuple[float, np.ndarray]:
    """Exact ``min mu`` over the stationary balanced box via an epigraph LP.

    Variables are the shifted volumes ``a = x - lower`` with box slacks, the
    split epigraph values ``t = t+ - t-`` and one slack per (agent, vertex)
    cut ``<v, x_i> <= t_i``.
    """
    m, n = scenario.m, scenario.n
    if n > ORACLE_MAX_N:
        raise TooLargeForOracle("vertex enumeration guarded to n <= %d (got %d)" % (ORACLE_MAX_N, n))
    if not all(isinstance(a.pricing, LPSetValued) for a in scenario.agents):
        raise WrongPricingMode("the epigraph oracle needs LP pricing for every agent")
    lower, upper = scenario.lower, scenario.upper
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise TooLargeForOracle("the epigraph oracle needs finite boxes")
    verts = [V.vertices() for V in scenario.polytopes()]
    mn = m * n
    n_cuts = sum(len(v) for v in verts)
    # columns: a (mn) | box slack (mn) | t+ (m) | t- (m) | cut slack (n_cuts)
    ncol = 2 * mn + 2 * m + n_cuts
    rows, rhs = [], []
    for k in range(mn):
        r = np.zeros(ncol)
        r[k] = 1.0
        r[mn + k] = 1.0
        rows.append(r)
        rhs.append(upper.flat[k] - lower.flat[k])
    for j in range(n):
        r = np.zeros(ncol)
        r[[i * n + j for i in range(m)]] = 1.0
        rows.append(r)
        rhs.append(-lower[:, j].sum())
    c_idx = 2 * mn + 2 * m
    for i in range(m):
        for v in verts[i]:
            r = np.zeros(ncol)
            r[i * n:(i + 1) * n] = v
            r[2 * mn + i] = -1.0
            r[2 * mn + m + i] = 1.0
            r[c_idx] = 1.0
            c_idx += 1
            rows.append(r)
            rhs.append(-float(v @ lower[i]))
    c = np.zeros(ncol)
    c[2 * mn:2 * mn + m] = -1.0
    c[2 * mn + m:2 * mn + 2 * m] = 1.0
    sol = StandardFormLP(np.array(rows), np.array(rhs)).maximize(c)
    x = lower + sol.x[:mn].reshape(m, n)
    return -sol.value, x


def brute_force_eta_optimum(scenario: Scenario, tol: float = 1e-10,
                            max_iter: int = 1_000_000, x0=None) -> tuple[float, np.ndarray]:
    """Projected gradient on ``eta`` over the stationary balanced box.

    Each price block is a projection composed with an affine map of slope
    ``1/weight``, so a fixed step of half the smallest weight is safe.  Stops
    when the gradient mapping norm drops to ``tol``.
    """
    if not all(isinstance(a.pricing, Regularized) for a in scenario.agents):
        raise WrongPricingMode("the projected-gradient oracle needs regularized pricing")
    step = min(a.pricing.weight for a in scenario.agents) / 2
    lo, hi = scenario.lower, scenario.upper
    x = np.zeros((scenario.m, scenario.n)) if x0 is None else np.asarray(x0, dtype=float)
    x, _ = project_market(x, lo, hi)
    for _ in range(max_iter):
        p = prices(x, scenario)
        x_new, _ = project_market(x - step * p, lo, hi)
        norm = float(np.linalg.norm(x_new - x)) / step
        x = x_new
        if norm <= tol:
            return eta_total(x, scenario), x
    raise OracleNotConverged("gradient mapping norm %.3e after %d iterations" % (norm, max_iter))


def kkt_price_oracle(V: PricePolytope, x_row, reference, weight: float) -> np.ndarray:
    """Maximize ``<p, x> - 0.5 w ||p - ref||^2`` over ``V`` by active-set enumeration.

    Every subset of the inequalities ``p >= 0`` and ``rows @ p >= 0`` is
    tried as the active set; the equality-constrained QP is solved from its
    KKT system and kept when primal feasible with nonnegative multipliers.
    Exponential in the number of inequalities; meant for tiny ``n``.
    """
    n = V.n
    G = np.vstack([np.eye(n), V.rows])
    q = np.asarray(x_row, dtype=float) + weight * np.asarray(reference, dtype=float)
    best, best_val = None, -np.inf
    for size in range(0, n):
        for active in itertools.combinations(range(G.shape[0]), size):
            E = np.vstack([np.ones(n), G[list(active)]]) if active else np.ones((1, n))
            k = E.shape[0]
            K = np.zeros((n + k, n + k))
            K[:n, :n] = weight * np.eye(n)
            K[:n, n:] = -E.T
            K[n:, :n] = E
            rhs = np.r_[q, 1.0, np.zeros(k - 1)]
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            pvec, mult = sol[:n], sol[n:]
            if np.any(G @ pvec < -1e-10) or np.any(mult[1:] < -1e-10):
                continue
            val = float(pvec @ q - 0.5 * weight * pvec @ pvec)
            if val > best_val:
                best, best_val = pvec, val
    if best is None:
        raise OracleNotConverged("no KKT point found")
    return best


# ---------------------------------------------------------------------------
# numerical cross-checks


def _interior_points(scenario: Scenario, count: int, rng, shrink: float = 0.5):
    lo, hi = scenario.lower, scenario.upper
    mid_lo, mid_hi = shrink * lo, shrink * hi
    for _ in range(count):
        z = rng.uniform(mid_lo, mid_hi)
        x, _ = project_market(z, mid_lo, mid_hi)
        yield x


def gradient_check(scenario: Scenario, points: int = 50, h: float = 1e-6, seed: int = 0) -> float:
    """Max relative error between central differences of ``eta`` and its gradient."""
    if not all(isinstance(a.pricing, Regularized) for a in scenario.agents):
        raise WrongPricingMode("gradient check applies to regularized pricing")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in _interior_points(scenario, points, rng):
        g = prices(x, scenario)
        fd = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            e = np.zeros_like(x)
            e[idx] = h
            fd[idx] = (eta_total(x + e, scenario) - eta_total(x - e, scenario)) / (2 * h)
        err = float(np.max(np.abs(fd - g))) / max(float(np.max(np.abs(g))), 1e-12)
        worst = max(worst, err)
    return worst


def convexity_check(function: str, scenario: Scenario, pairs: int = 100, seed: int = 0) -> float:
    """Max of ``f(mid) - f(a)/2 - f(b)/2`` over random feasible pairs (``mu`` or ``eta``)."""
    fn = {"mu": mu_total, "eta": eta_total}.get(function)
    if fn is None:
        raise ValueError("function must be 'mu' or 'eta'")
    rng = np.random.default_rng(seed)
    pts = list(random_states(scenario, 2 * pairs, rng))
    worst = -np.inf
    for a, b in zip(pts[::2], pts[1::2]):
        worst = max(worst, fn(0.5 * (a + b), scenario) - 0.5 * fn(a, scenario) - 0.5 * fn(b, scenario))
    return float(worst)


def objective_at(x, scenario: Scenario) -> float:
    return objective(x, scenario, prices(x, scenario))
