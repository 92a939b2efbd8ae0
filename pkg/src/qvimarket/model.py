"""Scenario data model: agents, boxes, local windows and assumption checks.

A market state ``x`` is an ``m x n`` array, one row per agent and one column
per commodity; positive entries are sales, negative entries purchases.  Each
agent has a fixed global box ``[lower, upper]`` and a window radius per
commodity.  The feasible transaction interval at state ``x`` is the box
intersected with ``[x - radius, x + radius]``; an infinite radius gives the
stationary case where the feasible set does not move.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import EmptyPolytope, InvalidParams, ScenarioError, StateOutsideGlobalBox

FEAS_TOL = 1e-9


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dimensions:
    m: int
    n: int

    def __post_init__(self):
        if int(self.m) < 1 or int(self.n) < 1:
            raise ScenarioError("need at least one agent and one commodity, got m=%r n=%r"
                                % (self.m, self.n))


@dataclass(frozen=True)
class TechnologySpec:
    """Linear technology of one agent.

    ``supply`` and ``demand`` are disjoint commodity index sets.  ``coeff``
    maps ``(s, j)`` with ``s`` in ``demand`` and ``j`` in ``supply`` to the
    amount of commodity ``s`` consumed per unit of ``j`` produced.
    """

    supply: tuple[int, ...] = ()
    demand: tuple[int, ...] = ()
    coeff: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "supply", tuple(sorted(int(j) for j in self.supply)))
        object.__setattr__(self, "demand", tuple(sorted(int(j) for j in self.demand)))
        object.__setattr__(self, "coeff",
                           tuple((int(s), int(j), float(a)) for s, j, a in self.coeff))
        if len(set(self.supply)) != len(self.supply) or len(set(self.demand)) != len(self.demand):
            raise ScenarioError("technology index sets contain duplicates")
        if set(self.supply) & set(self.demand):
            raise ScenarioError("supply and demand index sets overlap: %s"
                                % sorted(set(self.supply) & set(self.demand)))
        seen = set()
        for s, j, a in self.coeff:
            if s not in self.demand or j not in self.supply:
                raise ScenarioError("coefficient (%d, %d) must pair a demand index with a "
                                    "supply index" % (s, j))
            if not (a >= 0.0 and math.isfinite(a)):
                raise ScenarioError("technology coefficient a[%d,%d]=%r must be finite and >= 0"
                                    % (s, j, a))
            if (s, j) in seen:
                raise ScenarioError("duplicate coefficient (%d, %d)" % (s, j))
            seen.add((s, j))

    def indices(self) -> set[int]:
        return set(self.supply) | set(self.demand)


@dataclass(frozen=True)
class LPSetValued:
    """Agent prices are the whole argmax face of the technology LP."""

    mode = "lp"


@dataclass(frozen=True)
class Regularized:
    """Agent prices are the proximal choice around a reference vector."""

    reference: np.ndarray
    weight: float
    mode = "regularized"

    def __post_init__(self):
        object.__setattr__(self, "reference", _frozen(self.reference))
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise ScenarioError("regularization weight must be positive, got %r" % self.weight)
        if np.any(self.reference < 0) or not np.all(np.isfinite(self.reference)):
            raise ScenarioError("reference price vector must be finite and nonnegative")

    def __eq__(self, other):
        return (isinstance(other, Regularized) and self.weight == other.weight
                and np.array_equal(self.reference, other.reference))

    def __hash__(self):
        return hash((self.weight, self.reference.tobytes()))


PricingMode = LPSetValued | Regularized


@dataclass(frozen=True, eq=False)
class AgentSpec:
    lower: np.ndarray
    upper: np.ndarray
    radius: np.ndarray
    technology: TechnologySpec = field(default_factory=TechnologySpec)
    pricing: PricingMode = field(default_factory=LPSetValued)

    def __post_init__(self):
        for name in ("lower", "upper", "radius"):
            object.__setattr__(self, name, _frozen(getattr(self, name)).reshape(-1))
        n = self.lower.size
        if self.upper.size != n or self.radius.size != n:
            raise ScenarioError("agent bound vectors have inconsistent lengths")
        if np.any(np.isnan(self.radius)) or np.any(self.radius < 0):
            raise ScenarioError("window radii must be >= 0")
        if isinstance(self.pricing, Regularized) and self.pricing.reference.size != n:
            raise ScenarioError("reference price vector must have length %d" % n)
        bad = [j for j in self.technology.indices() if not 0 <= j < n]
        if bad:
            raise ScenarioError("technology index %d outside 0..%d" % (bad[0], n - 1))

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def stationary(self) -> bool:
        return bool(np.all(np.isinf(self.radius)))


@dataclass(frozen=True, eq=False)
class Scenario:
    dims: Dimensions
    agents: tuple[AgentSpec, ...]
    solver: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) != self.dims.m:
            raise ScenarioError("scenario declares m=%d but lists %d agents"
                                % (self.dims.m, len(self.agents)))
        for i, a in enumerate(self.agents):
            if a.n != self.dims.n:
                raise ScenarioError("agent %d has %d commodities, expected %d"
                                    % (i, a.n, self.dims.n))
        if int(self.seed) < 0:
            raise ScenarioError("seed must be nonnegative")
        object.__setattr__(self, "_lower", _frozen([a.lower for a in self.agents]))
        object.__setattr__(self, "_upper", _frozen([a.upper for a in self.agents]))
        object.__setattr__(self, "_radius", _frozen([a.radius for a in self.agents]))
        object.__setattr__(self, "_polytopes", None)

    @property
    def m(self) -> int:
        return self.dims.m

    @property
    def n(self) -> int:
        return self.dims.n

    @property
    def lower(self) -> np.ndarray:
        return self._lower

    @property
    def upper(self) -> np.ndarray:
        return self._upper

    @property
    def radius(self) -> np.ndarray:
        return self._radius

    @property
    def stationary(self) -> bool:
        return bool(np.all(np.isinf(self._radius)))

    def polytopes(self):
        """Price polytopes of all agents, built once per scenario."""
        if self._polytopes is None:
            from .pricing import PricePolytope

            object.__setattr__(self, "_polytopes", tuple(
                PricePolytope.from_technology(a.technology, self.n) for a in self.agents))
        return self._polytopes

    def replace(self, **changes) -> "Scenario":
        kw = dict(dims=self.dims, agents=self.agents, solver=self.solver, seed=self.seed)
        kw.update(changes)
        return Scenario(**kw)


def window_bounds(lower, upper, radius, x) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``alpha(x) = max(lower, x - r)``, ``beta(x) = min(upper, x + r)``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        lo = np.maximum(lower, x - radius)
        hi = np.minimum(upper, x + radius)
    return lo, hi


def feasible_window(agent: AgentSpec, x_row, tol: float = FEAS_TOL) -> list[tuple[float, float]]:
    """Per-commodity feasible interval of one agent at its current volumes."""
    x_row = np.asarray(x_row, dtype=float).reshape(-1)
    if x_row.size != agent.n:
        raise ValueError("state row has length %d, expected %d" % (x_row.size, agent.n))
    out = np.flatnonzero((x_row < agent.lower - tol) | (x_row > agent.upper + tol))
    if out.size:
        j = int(out[0])
        raise StateOutsideGlobalBox("x[%d]=%r outside global box [%r, %r]"
                                    % (j, x_row[j], agent.lower[j], agent.upper[j]))
    lo, hi = window_bounds(agent.lower, agent.upper, agent.radius, x_row)
    return [(float(a), float(b)) for a, b in zip(lo, hi)]


def state_windows(scenario: Scenario, x, tol: float = FEAS_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Window bounds of all agents at state ``x``, as two ``m x n`` arrays."""
    x = np.asarray(x, dtype=float)
    if x.shape != (scenario.m, scenario.n):
        raise ValueError("state has shape %s, expected %s" % (x.shape, (scenario.m, scenario.n)))
    bad = np.argwhere((x < scenario.lower - tol) | (x > scenario.upper + tol))
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise StateOutsideGlobalBox("x[%d,%d]=%r outside global box [%r, %r]" % (
            i, j, x[i, j], scenario.lower[i, j], scenario.upper[i, j]))
    return window_bounds(scenario.lower, scenario.upper, scenario.radius, x)


def balance_residual(y) -> float:
    return float(np.abs(np.asarray(y, dtype=float).sum(axis=0)).max())


def box_violation(y, lower, upper) -> float:
    y = np.asarray(y, dtype=float)
    return float(max(np.max(lower - y, initial=0.0), np.max(y - upper, initial=0.0), 0.0))


def is_balanced_feasible(y, lower, upper, tol: float = FEAS_TOL) -> bool:
    """Membership in the balanced box set: zero column sums and box bounds, to ``tol``."""
    y = np.asarray(y, dtype=float)
    if y.shape != np.shape(lower) or y.shape != np.shape(upper):
        raise ValueError("state and bounds have different shapes")
    return balance_residual(y) <= tol and box_violation(y, lower, upper) <= tol


# ---------------------------------------------------------------------------
# assumption validation


@dataclass(frozen=True)
class Finding:
    assumption: str
    message: str


@dataclass(frozen=True)
class AssumptionReport:
    mode: str
    checked: tuple[str, ...]
    violations: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "mode %s: all assumptions hold (%s)" % (self.mode, ", ".join(self.checked))
        return "; ".join("%s: %s" % (f.assumption, f.message) for f in self.violations)


def balanced_box_nonempty(lower, upper) -> np.ndarray:
    """Per-commodity test that some balanced point lies in the box.

    With ``lower <= upper`` the column sums of the box cover exactly the
    interval ``[sum lower, sum upper]``, so the test is exact.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return (lower.sum(axis=0) <= FEAS_TOL) & (upper.sum(axis=0) >= -FEAS_TOL)


def validate_assumptions(s: Scenario, mode: str) -> AssumptionReport:
    """Check the scenario against assumption group ``A``, ``B`` or ``C``.

    Group A is the general existence setting (compact boxes, nonempty price
    sets, the current state inside its own window, nonempty balanced set).
    Group B adds stationary boxes and LP pricing; group C requires the
    regularized single-valued price map.
    """
    mode = mode.upper()
    if mode not in ("A", "B", "C"):
        raise ValueError("mode must be one of A, B, C")
    found: list[Finding] = []
    # assumption label for each kind of finding, per group
    compact = {"A": "A1", "B": "B1'", "C": "C1'"}[mode]
    feasible_set = windows = {"A": "A2'", "B": "B1'", "C": "C3"}[mode]
    prices = {"A": "A1", "B": "B2", "C": "C2"}[mode]

    lo, hi = s.lower, s.upper
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        found.append(Finding(compact, "global box bounds must be finite (compactness)"))
    inverted = np.argwhere(lo > hi)
    for i, j in inverted[:5]:
        found.append(Finding(compact, "agent %d commodity %d has lower %g > upper %g"
                             % (i, j, lo[i, j], hi[i, j])))
    if not inverted.size:
        empty = np.flatnonzero(~balanced_box_nonempty(lo, hi))
        for j in empty:
            found.append(Finding(feasible_set, "balanced set empty for commodity %d: column "
                                 "bounds sum to [%g, %g], which excludes 0"
                                 % (j, lo[:, j].sum(), hi[:, j].sum())))
    if np.any(np.isnan(s.radius)) or np.any(s.radius < 0):
        found.append(Finding(windows, "window radii must be nonnegative"))
    for i, agent in enumerate(s.agents):
        try:
            check_price_set_nonempty(agent.technology, s.n)
        except EmptyPolytope as exc:
            found.append(Finding(prices, "agent %d: %s" % (i, exc)))

    if mode == "B":
        for i, agent in enumerate(s.agents):
            if not isinstance(agent.pricing, LPSetValued):
                found.append(Finding("B2", "agent %d uses regularized pricing; the subgradient "
                                     "method needs LP (set-valued) pricing" % i))
            if not agent.stationary:
                found.append(Finding("B1'", "agent %d has finite window radii; the stationary "
                                     "setting needs radius = inf" % i))
    elif mode == "C":
        for i, agent in enumerate(s.agents):
            if not isinstance(agent.pricing, Regularized):
                found.append(Finding("C2", "agent %d uses LP pricing; the conditional gradient "
                                     "method needs a regularized single-valued price map" % i))
    checked = {"A": ("A1", "A2'"), "B": ("B1'", "B2"), "C": ("C1'", "C2", "C3")}[mode]
    return AssumptionReport(mode=mode, checked=checked, violations=tuple(found))


def check_price_set_nonempty(tech: TechnologySpec, n: int) -> None:
    """Raise :class:`EmptyPolytope` when the technology leaves no feasible price.

    A unit vector ``e_j`` with ``j`` outside the supply set satisfies every
    technology row (coefficients are nonnegative), and when every commodity is
    a supply commodity the demand set is empty and all prices are forced to
    zero.  So the set is empty exactly when ``supply`` covers all commodities.
    """
    if len(tech.supply) == n:
        raise EmptyPolytope("price set empty: all %d commodities are supply commodities, "
                            "which forces every price to zero (commodity %d cannot be priced)"
                            % (n, tech.supply[0]))


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class GeneratorParams:
    mode: str = "lp"
    radius: float | None = None
    bound_scale: float = 1.0
    weight_range: tuple[float, float] = (0.5, 2.0)
    coeff_range: tuple[float, float] = (0.2, 2.0)
    reference_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("lp", "regularized"):
            raise InvalidParams("mode must be 'lp' or 'regularized', got %r" % (self.mode,))
        if self.radius is not None and not self.radius >= 0:
            raise InvalidParams("radius must be >= 0")
        if not self.bound_scale > 0:
            raise InvalidParams("bound_scale must be positive")
        lo, hi = self.weight_range
        if not 0 < lo <= hi:
            raise InvalidParams("weight_range must satisfy 0 < lo <= hi")
        lo, hi = self.coeff_range
        if not 0 < lo <= hi:
            raise InvalidParams("coeff_range must satisfy 0 < lo <= hi")
        if not self.reference_scale > 0:
            raise InvalidParams("reference_scale must be positive")

    @property
    def window(self) -> float:
        if self.radius is not None:
            return float(self.radius)
        return math.inf if self.mode == "lp" else 0.5


def _random_technology(rng: np.random.Generator, n: int, params: GeneratorParams) -> TechnologySpec:
    if n == 1:
        return TechnologySpec()
    used = np.flatnonzero(rng.random(n) < 0.75)
    if used.size < 2:
        used = np.sort(rng.choice(n, size=2, replace=False))
    roles = rng.random(used.size) < 0.5
    # at least one demand commodity keeps the price set nonempty
    if roles.all():
        roles[rng.integers(used.size)] = False
    supply = tuple(int(j) for j in used[roles])
    demand = tuple(int(j) for j in used[~roles])
    lo, hi = params.coeff_range
    coeff = []
    for j in supply:
        for s in demand:
            if rng.random() < 0.7:
                coeff.append((s, j, float(rng.uniform(lo, hi))))
    return TechnologySpec(supply=supply, demand=demand, coeff=tuple(coeff))


def random_scenario(seed: int, m: int, n: int, params: GeneratorParams | None = None,
                    solver: dict | None = None) -> Scenario:
    """Deterministic random scenario whose boxes all straddle zero."""
    if params is None:
        params = GeneratorParams()
    if int(m) < 2:
        raise InvalidParams("need at least two agents to trade, got m=%r" % (m,))
    if int(n) < 1:
        raise InvalidParams("need at least one commodity, got n=%r" % (n,))
    if int(seed) < 0:
        raise InvalidParams("seed must be nonnegative")
    rng = np.random.default_rng(int(seed))
    scale = params.bound_scale
    agents = []
    for _ in range(m):
        lower = -scale * rng.uniform(0.2, 1.0, size=n)
        upper = scale * rng.uniform(0.2, 1.0, size=n)
        radius = np.full(n, params.window)
        tech = _random_technology(rng, n, params)
        if params.mode == "regularized":
            ref = params.reference_scale * rng.dirichlet(np.ones(n))
            weight = float(rng.uniform(*params.weight_range))
            pricing: PricingMode = Regularized(reference=ref, weight=weight)
        else:
            pricing = LPSetValued()
        agents.append(AgentSpec(lower=lower, upper=upper, radius=radius,
                                technology=tech, pricing=pricing))
    if solver is None:
        solver = {"method": "sgp" if params.mode == "lp" else "pcgm"}
    return Scenario(dims=Dimensions(m, n), agents=tuple(agents), solver=dict(solver),
                    seed=int(seed))


def declared_mode(s: Scenario) -> str:
    """Assumption group a scenario is meant for: B (LP, stationary), C (regularized), else A."""
    if all(isinstance(a.pricing, Regularized) for a in s.agents):
        return "C"
    if all(isinstance(a.pricing, LPSetValued) for a in s.agents) and s.stationary:
        return "B"
    return "A"


def random_states(scenario: Scenario, count: int, rng: np.random.Generator) -> Iterable[np.ndarray]:
    """Uniform samples from the global box (not necessarily balanced)."""
    lo, hi = scenario.lower, scenario.upper
    for _ in range(count):
        yield lo + (hi - lo) * rng.random(lo.shape)


def as_state(x, m: int, n: int) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.shape != (m, n):
        raise ValueError("state must be %d x %d, got %s" % (m, n, arr.shape))
    if not np.all(np.isfinite(arr)):
        raise ValueError("state entries must be finite")
    return arr
