"""Dynamic processes driving the market state toward equilibrium.

* :func:`solve_sgp` - subgradient projection on the stationary balanced box
  for set-valued (LP) prices, step ``theta0 / (k + 1)``.
* :func:`solve_pcgm` - staged conditional gradient method on moving
  feasible sets for regularized prices, with restarts at geometrically
  shrinking gap tolerances and a step-size schedule per stage.
* :func:`solve_fpi` - projection iteration on the moving window (no
  convergence guarantee, kept for experiments).

All three return a :class:`ConvergenceTrace`.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .balance import ClearingPrices, lmo_market, project_market
from .errors import AssumptionViolation, NumericalFailure
from .model import (LPSetValued, Scenario, balance_residual, box_violation,
                    state_windows, validate_assumptions)
from .pricing import objective, prices

TRACE_COLUMNS = ("stage", "iter", "l", "objective", "gap", "theta", "accepted", "restart")


@dataclass(frozen=True)
class SGPConfig:
    theta0: float = 1.0
    max_iter: int = 200_000
    target_gap: float | None = 1e-4

    def __post_init__(self):
        if not self.theta0 > 0:
            raise ValueError("theta0 must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.target_gap is not None and not self.target_gap > 0:
            raise ValueError("target_gap must be positive (or None to disable)")

    def theta(self, k: int) -> float:
        return self.theta0 / (k + 1)


@dataclass(frozen=True)
class PCGMConfig:
    beta: float = 0.5
    delta0: float = 1.0
    delta_decay: float = 0.5
    tau0: float = 0.5
    tau_decay: float = 0.5
    delta_min: float = 1e-5
    stage_cap: int = 200
    iter_cap: int = 100_000

    def __post_init__(self):
        for name in ("beta", "delta_decay", "tau0", "tau_decay"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError("%s must lie in (0, 1), got %r" % (name, v))
        if not (self.delta0 > 0 and self.delta_min > 0):
            raise ValueError("delta0 and delta_min must be positive")
        if self.stage_cap < 1 or self.iter_cap < 1:
            raise ValueError("stage_cap and iter_cap must be at least 1")

    def delta(self, s: int) -> float:
        """Gap tolerance of stage ``s``; the last stage is clamped to ``delta_min``."""
        return max(self.delta0 * self.delta_decay ** s, self.delta_min)

    def tau(self, l: int) -> float:
        return self.tau0 * self.tau_decay ** l


@dataclass(frozen=True)
class TraceRecord:
    stage: int
    iter: int
    l: int
    objective: float
    gap: float
    theta: float
    accepted: bool
    restart: bool
    delta: float = math.nan


@dataclass
class ConvergenceTrace:
    method: str
    records: list[TraceRecord]
    state: np.ndarray
    clearing: ClearingPrices
    prices: np.ndarray
    gap: float
    status: str
    experimental: bool = False
    max_balance_violation: float = 0.0
    max_box_violation: float = 0.0
    max_window_violation: float = 0.0
    restarts: list[np.ndarray] = field(default_factory=list)
    iterates: list[np.ndarray] | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def iterations(self) -> int:
        return sum(1 for r in self.records if not r.restart)

    @property
    def stages(self) -> int:
        return sum(1 for r in self.records if r.restart)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([r.stage, r.iter, r.l, "%.17g" % r.objective, "%.17g" % r.gap,
                        "%.17g" % r.theta, int(r.accepted), int(r.restart)])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def read_trace_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for r in rows:
        out.append({"stage": int(r["stage"]), "iter": int(r["iter"]), "l": int(r["l"]),
                    "objective": float(r["objective"]), "gap": float(r["gap"]),
                    "theta": float(r["theta"]), "accepted": r["accepted"] == "1",
                    "restart": r["restart"] == "1"})
    return out


def _require(scenario: Scenario, mode: str) -> None:
    report = validate_assumptions(scenario, mode)
    if not report.ok:
        raise AssumptionViolation(report.summary(), report.violations)


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericalFailure("%s became non-finite" % what)
    return value


def _start(scenario: Scenario, x0) -> np.ndarray:
    """Starting point in the global balanced box (projected there if needed)."""
    lo, hi = scenario.lower, scenario.upper
    x = np.zeros((scenario.m, scenario.n)) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (scenario.m, scenario.n):
        raise ValueError("x0 must have shape (%d, %d)" % (scenario.m, scenario.n))
    if balance_residual(x) > 1e-12 or box_violation(x, lo, hi) > 0:
        x, _ = project_market(x, lo, hi)
    return x


def gap(x, scenario: Scenario, mapper=map, p=None) -> tuple[float, np.ndarray]:
    """Gap ``<p(x), x - y>`` with ``y`` from the linear oracle over ``D(x)``.

    For set-valued pricing ``p`` defaults to the oracle's deterministic
    subgradient selection.
    """
    x = np.asarray(x, dtype=float)
    if p is None:
        p = prices(x, scenario, mapper)
    lo, hi = state_windows(scenario, x)
    y, _, _ = lmo_market(p, lo, hi, mapper)
    return float(np.sum(p * (x - y))), y


class _PriceAverage:
    """Averaged subgradients over a doubling window.

    The average restarts whenever the iteration count reaches a power of two,
    so it covers the most recent half of the run.  Each row stays inside the
    agent's price set, which makes ``mu(x) - min_y <avg, y>`` a valid upper
    bound on ``mu(x) - min mu``.
    """

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.count = 0
        self.reset_at = 1

    def add(self, k: int, p: np.ndarray) -> np.ndarray:
        if k >= self.reset_at:
            self.total[:] = 0.0
            self.count = 0
            self.reset_at *= 2
        self.total += p
        self.count += 1
        return self.total / self.count


def _lp_pricing(scenario: Scenario) -> bool:
    return all(isinstance(a.pricing, LPSetValued) for a in scenario.agents)


def _projection_loop(scenario: Scenario, config: SGPConfig, x0, *, moving: bool,
                     method: str, mapper=map, keep_iterates: bool = False) -> ConvergenceTrace:
    glo, ghi = scenario.lower, scenario.upper
    x = _start(scenario, x0)
    lp = _lp_pricing(scenario)
    avg = _PriceAverage(x.shape) if lp else None
    records: list[TraceRecord] = []
    iterates = [x.copy()] if keep_iterates else None
    max_bal = balance_residual(x)
    max_box = box_violation(x, glo, ghi)
    max_win = 0.0
    clearing = None
    status = "max_iter"
    for k in range(config.max_iter):
        p = prices(x, scenario, mapper)
        f = _finite(objective(x, scenario, p), "objective")
        if moving:
            lo, hi = state_windows(scenario, x)
        else:
            lo, hi = glo, ghi
        if lp:
            # duality certificate from averaged subgradients
            cert = avg.add(k, p)
            _, lmo_lam, low = lmo_market(cert, lo, hi, mapper)
            g = f - low
        else:
            cert = p
            y, lmo_lam, _ = lmo_market(p, lo, hi, mapper)
            g = float(np.sum(p * (x - y)))
        g = _finite(g, "gap")
        theta = config.theta(k)
        if config.target_gap is not None and g <= config.target_gap:
            records.append(TraceRecord(0, k, 0, f, g, theta, False, False))
            status = "converged"
            if clearing is None:
                clearing = lmo_lam
            break
        records.append(TraceRecord(0, k, 0, f, g, theta, True, False))
        x, proj = project_market(x - theta * p, lo, hi, mapper)
        if not np.all(np.isfinite(x)):
            raise NumericalFailure("iterate became non-finite at step %d" % k)
        # multipliers of y = clip(z - lam) in price units
        clearing = ClearingPrices(lam=-proj.lam / theta, lower=-proj.upper / theta,
                                  upper=-proj.lower / theta)
        max_bal = max(max_bal, balance_residual(x))
        max_box = max(max_box, box_violation(x, glo, ghi))
        if moving:
            max_win = max(max_win, box_violation(x, lo, hi))
        if keep_iterates:
            iterates.append(x.copy())
    else:
        # state after the last step has not been evaluated yet
        p = prices(x, scenario, mapper)
        cert = avg.add(config.max_iter, p) if lp else p
    final_gap = records[-1].gap if status == "converged" else _final_gap(x, scenario, cert, lp, moving, mapper)
    return ConvergenceTrace(method=method, records=records, state=x, clearing=clearing,
                            prices=cert, gap=final_gap, status=status,
                            experimental=method == "fpi", max_balance_violation=max_bal,
                            max_box_violation=max_box, max_window_violation=max_win,
                            iterates=iterates)


def _final_gap(x, scenario, cert, lp, moving, mapper) -> float:
    if moving:
        lo, hi = state_windows(scenario, x)
    else:
        lo, hi = scenario.lower, scenario.upper
    _, _, low = lmo_market(cert, lo, hi, mapper)
    if lp:
        return float(objective(x, scenario, prices(x, scenario, mapper)) - low)
    return float(np.sum(cert * x) - low)


def solve_sgp(scenario: Scenario, config: SGPConfig | None = None, x0=None, *,
              mapper=map, keep_iterates: bool = False, validate: bool = True) -> ConvergenceTrace:
    """Subgradient projection ``x <- P[x - theta_k p(x)]`` onto the balanced box.

    With set-valued prices the recorded gap is the duality bound
    ``mu(x) - min_y <P, y>`` where ``P`` averages recent subgradients; it
    bounds ``mu(x) - min mu`` from above and goes to zero along the run,
    whereas the gap of a single subgradient need not vanish at a kink.
    """
    config = config or SGPConfig()
    if validate:
        _require(scenario, "B")
    return _projection_loop(scenario, config, x0, moving=False, method="sgp",
                            mapper=mapper, keep_iterates=keep_iterates)


def solve_fpi(scenario: Scenario, config: SGPConfig | None = None, x0=None, *,
              mapper=map, keep_iterates: bool = False, validate: bool = True) -> ConvergenceTrace:
    """Projection iteration onto the moving window ``D(x)``; experimental.

    Nothing guarantees convergence, so the gap sequence is only recorded.
    With infinite radii the iteration is the same computation as
    :func:`solve_sgp`.
    """
    config = config or SGPConfig()
    if validate:
        _require(scenario, "C")
    return _projection_loop(scenario, config, x0, moving=True, method="fpi",
                            mapper=mapper, keep_iterates=keep_iterates)


def solve_pcgm(scenario: Scenario, config: PCGMConfig | None = None, w0=None, *,
               mapper=map, keep_iterates: bool = False, validate: bool = True) -> ConvergenceTrace:
    """Staged conditional gradient method on moving feasible sets.

    Stage ``s`` works with gap tolerance ``delta_s``.  Each inner step takes
    ``y`` from the linear oracle over the current window ``D(x)``; when the
    gap ``<p, x - y>`` drops below ``delta_s`` the point is kept as restart
    point ``w_s`` and the next stage begins.  Otherwise ``x`` moves to
    ``x + theta d`` with ``d = y - x`` (kept whether or not the descent test
    passes); the test ``<p(x+), d> <= beta <p(x), d>`` either lets theta grow
    (doubling, capped by ``tau_l``) or advances ``l`` and caps theta by the
    smaller ``tau_{l+1}``.  A stage that hits ``iter_cap`` stops the run with
    status ``"stage_cap"``; the partial trace is still returned.
    """
    config = config or PCGMConfig()
    if validate:
        _require(scenario, "C")
    glo, ghi = scenario.lower, scenario.upper
    x = _start(scenario, w0)
    records: list[TraceRecord] = []
    restarts: list[np.ndarray] = []
    iterates = [x.copy()] if keep_iterates else None
    max_bal = balance_residual(x)
    max_box = box_violation(x, glo, ghi)
    max_win = 0.0
    status = "max_stages"
    p = prices(x, scenario, mapper)
    f = _finite(objective(x, scenario, p), "objective")
    for s in range(config.stage_cap):
        delta = config.delta(s)
        l = 0
        theta = config.tau(0)
        k = 0
        while True:
            lo, hi = state_windows(scenario, x)
            max_win = max(max_win, box_violation(x, lo, hi))
            y, lam, _ = lmo_market(p, lo, hi, mapper)
            g = _finite(float(np.sum(p * (x - y))), "gap")
            if g < delta:
                records.append(TraceRecord(s, k, l, f, g, theta, False, True, delta))
                restarts.append(x.copy())
                break
            if k >= config.iter_cap:
                status = "stage_cap"
                break
            d = y - x
            x_new = x + theta * d
            p_new = prices(x_new, scenario, mapper)
            f_new = _finite(objective(x_new, scenario, p_new), "objective")
            ok = float(np.sum(p_new * d)) <= config.beta * float(np.sum(p * d))
            records.append(TraceRecord(s, k, l, f, g, theta, ok, False, delta))
            if ok:
                theta = min(2.0 * theta, config.tau(l))
            else:
                l += 1
                theta = min(theta, config.tau(l))
            x, p, f = x_new, p_new, f_new
            k += 1
            max_bal = max(max_bal, balance_residual(x))
            max_box = max(max_box, box_violation(x, glo, ghi))
            if keep_iterates:
                iterates.append(x.copy())
        if status == "stage_cap":
            break
        if delta <= config.delta_min:
            status = "converged"
            break
    return ConvergenceTrace(method="pcgm", records=records, state=x, clearing=lam,
                            prices=p, gap=g, status=status, max_balance_violation=max_bal,
                            max_box_violation=max_box, max_window_violation=max_win,
                            restarts=restarts, iterates=iterates)


def certified_decrease_violations(trace: ConvergenceTrace, beta: float, tol: float = 1e-10) -> list[int]:
    """Indices of accepted PCGM steps whose objective drop misses ``beta*theta*delta``.

    Uses only the trace: the objective after step ``k`` is the objective of
    the next record (an inner step or the restart record of the stage).
    """
    bad = []
    recs = trace.records
    for idx, r in enumerate(recs[:-1]):
        if r.restart or not r.accepted:
            continue
        nxt = recs[idx + 1]
        if nxt.objective > r.objective - beta * r.theta * r.delta + tol:
            bad.append(idx)
    return bad


def config_from_dict(method: str, block: dict | None):
    """Build the solver config for ``method`` from a scenario's solver block."""
    block = dict(block or {})
    cls = PCGMConfig if method == "pcgm" else SGPConfig
    known = {f.name for f in fields(cls)}
    unknown = set(block) - known
    if unknown:
        raise ValueError("unknown %s options: %s" % (method, ", ".join(sorted(unknown))))
    return cls(**block)
