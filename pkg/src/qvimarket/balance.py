"""Exact algorithms on box-plus-balance sets.

For one commodity the feasible volumes of the ``m`` agents form

    D_j = { y in R^m : sum(y) = 0, lower <= y <= upper }.

Projection onto ``D_j`` and linear minimization over it both reduce to a
scalar search for the multiplier of the balance equation, which plays the
role of the clearing price.  Sign conventions:

* projection: ``y = clip(z - lam, lower, upper)``, i.e. the Lagrangian
  ``0.5 ||y - z||^2 + lam * sum(y)``;
* linear minimization: ``L(y, lam) = <p, y> - lam * sum(y)``, so agents whose
  price is below ``lam`` buy up to their upper bound, those above sell down
  to their lower bound, and an interior agent has ``p_i = lam``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyBalanceSet, InfeasibleMarket, InfeasiblePoint

BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class ClearingPrices:
    """Balance multipliers per commodity.

    ``lam`` is the reported value; ``lower``/``upper`` bracket the interval of
    multipliers consistent with the same solution (equal unless degenerate).
    """

    lam: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return ~np.isclose(self.lower, self.upper, rtol=1e-12, atol=1e-12)

    def to_dict(self) -> dict:
        return {"lambda": [float(v) for v in self.lam],
                "bracket": [[_finite_or_str(a), _finite_or_str(b)]
                            for a, b in zip(self.lower, self.upper)]}


def _finite_or_str(v: float):
    return float(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _check_box(lower, upper, m=None):
    lower = np.asarray(lower, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    if lower.shape != upper.shape or (m is not None and lower.size != m):
        raise ValueError("box bounds have inconsistent lengths")
    if np.any(lower > upper):
        raise EmptyBalanceSet("box has lower > upper")
    scale = max(1.0, float(np.abs(lower).max(initial=0.0)), float(np.abs(upper).max(initial=0.0)))
    if lower.sum() > BALANCE_TOL * scale or upper.sum() < -BALANCE_TOL * scale:
        raise EmptyBalanceSet("balanced set empty: bounds sum to [%g, %g]"
                              % (lower.sum(), upper.sum()))
    return lower, upper


def _pick(lo: float, hi: float) -> float:
    if math.isfinite(lo) and math.isfinite(hi):
        return 0.5 * (lo + hi)
    if math.isfinite(lo):
        return lo
    if math.isfinite(hi):
        return hi
    return 0.0


def _projection_multiplier(z, lower, upper):
    """Zero set ``[lo, hi]`` of ``phi(lam) = sum clip(z - lam, lower, upper)``.

    ``phi`` is continuous, piecewise linear and nonincreasing; its kinks are
    the ``2m`` breakpoints ``z - upper`` (coordinate leaves its upper bound)
    and ``z - lower`` (coordinate reaches its lower bound).  One sorted sweep
    evaluates ``phi`` at every breakpoint; the zero set is then read off by
    linear interpolation.
    """
    pts = np.concatenate([z - upper, z - lower])
    dslope = np.concatenate([-np.ones(z.size), np.ones(z.size)])
    order = np.argsort(pts, kind="stable")
    pts, dslope = pts[order], dslope[order]
    vals = np.empty(pts.size)
    slope = np.concatenate([[0.0], np.cumsum(dslope)[:-1]])
    vals[0] = upper.sum()
    vals[1:] = vals[0] + np.cumsum(slope[1:] * np.diff(pts))
    # clamp the sweep to the exact end values to absorb cancellation
    vals[-1] = lower.sum()

    k = int(np.argmax(vals <= 0.0))
    if k == 0:
        lo = -math.inf
    else:
        a, b = vals[k - 1], vals[k]
        lo = pts[k] if a == b else pts[k - 1] + a * (pts[k] - pts[k - 1]) / (a - b)
    nonneg = np.flatnonzero(vals >= 0.0)
    k = int(nonneg[-1])
    if k == pts.size - 1:
        hi = math.inf
    else:
        a, b = vals[k], vals[k + 1]
        hi = pts[k] if a == b else pts[k] + a * (pts[k + 1] - pts[k]) / (a - b)
    return lo, max(lo, hi)


def project_balanced_full(z, lower, upper):
    z = np.asarray(z, dtype=float).reshape(-1)
    lower, upper = _check_box(lower, upper, z.size)
    lo, hi = _projection_multiplier(z, lower, upper)
    lam = _pick(lo, hi)
    y = np.clip(z - lam, lower, upper)
    free = (y > lower) & (y < upper)
    resid = y.sum()
    if resid != 0.0 and free.any():
        # one Newton correction on the active linear piece
        lam2 = lam + resid / free.sum()
        y2 = np.clip(z - lam2, lower, upper)
        if abs(y2.sum()) < abs(resid):
            lam, y = lam2, y2
            if lo == hi or not (math.isfinite(lo) and math.isfinite(hi)):
                lo = hi = lam
    return y, lam, lo, hi


def project_balanced(z, lower, upper) -> tuple[np.ndarray, float]:
    """Euclidean projection of ``z`` onto ``{sum(y) = 0, lower <= y <= upper}``.

    Returns ``(y, lam)`` with ``y = clip(z - lam, lower, upper)``.  When the
    multiplier is not unique (every coordinate pinned at a bound) the midpoint
    of the admissible interval is reported.
    """
    y, lam, _, _ = project_balanced_full(z, lower, upper)
    return y, lam


def lmo_balanced_full(p, lower, upper):
    p = np.asarray(p, dtype=float).reshape(-1)
    lower, upper = _check_box(lower, upper, p.size)
    y = lower.copy()
    remaining = -lower.sum()
    cap = upper - lower
    order = np.argsort(p, kind="stable")
    split = None
    last_full = None
    for i in order:
        if remaining <= 0.0:
            break
        if cap[i] <= 0.0:
            continue
        if cap[i] <= remaining:
            y[i] = upper[i]
            remaining -= cap[i]
            last_full = i
        else:
            y[i] += remaining
            remaining = 0.0
            split = i
    if remaining > 0.0:
        # rounding: sum(upper) was within tolerance of zero
        y = upper.copy()
    if split is not None and (y[split] > lower[split]):
        lo = hi = float(p[split])
    else:
        at_upper = (cap > 0) & (y >= upper)
        at_lower = (cap > 0) & (y <= lower)
        lo = float(p[at_upper].max()) if at_upper.any() else -math.inf
        hi = float(p[at_lower].min()) if at_lower.any() else math.inf
        if last_full is not None and lo > hi:
            lo = hi = float(p[last_full])
    lam = _pick(lo, hi)
    return y, lam, lo, hi


def lmo_balanced(p, lower, upper) -> tuple[np.ndarray, float, float]:
    """Minimize ``<p, y>`` over ``{sum(y) = 0, lower <= y <= upper}``.

    Arrangement algorithm: start everyone at the lower bound, then hand out
    the missing volume ``-sum(lower)`` to the cheapest agents first.  Ties in
    price are served in agent order, so the lowest index absorbs a
    fractional split.  Returns ``(y, lam, value)``.
    """
    y, lam, _, _ = lmo_balanced_full(p, lower, upper)
    return y, lam, float(np.dot(p, y))


def _columns(fn, a, lower, upper, mapper):
    a = np.asarray(a, dtype=float)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), a.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), a.shape)

    def run(j):
        try:
            return fn(a[:, j], lower[:, j], upper[:, j])
        except EmptyBalanceSet as exc:
            raise EmptyBalanceSet("commodity %d: %s" % (j, exc), commodity=j) from None

    return list(mapper(run, range(a.shape[1])))


def project_market(z, lower, upper, mapper=map) -> tuple[np.ndarray, ClearingPrices]:
    """Project every commodity column of ``z`` onto its balanced box."""
    cols = _columns(project_balanced_full, z, lower, upper, mapper)
    y = np.column_stack([c[0] for c in cols])
    return y, ClearingPrices(lam=np.array([c[1] for c in cols]),
                             lower=np.array([c[2] for c in cols]),
                             upper=np.array([c[3] for c in cols]))


def lmo_market(p, lower, upper, mapper=map) -> tuple[np.ndarray, ClearingPrices, float]:
    """Column-wise linear minimization; ``y`` minimizes ``<p, y>`` over the product set."""
    cols = _columns(lmo_balanced_full, p, lower, upper, mapper)
    y = np.column_stack([c[0] for c in cols])
    lam = ClearingPrices(lam=np.array([c[1] for c in cols]),
                         lower=np.array([c[2] for c in cols]),
                         upper=np.array([c[3] for c in cols]))
    return y, lam, float(np.sum(np.asarray(p, dtype=float) * y))


# ---------------------------------------------------------------------------
# single-commodity market with affine prices


@dataclass(frozen=True)
class Trader:
    """Offer price ``g(x) = mu + rho * x`` on the capacity segment ``[lower, upper]``."""

    mu: float
    rho: float
    lower: float
    upper: float


@dataclass(frozen=True)
class Buyer:
    """Bid price ``h(y) = nu - sigma * y`` on the capacity segment ``[lower, upper]``."""

    nu: float
    sigma: float
    lower: float
    upper: float


@dataclass(frozen=True)
class AffinePriceSpec:
    traders: tuple[Trader, ...]
    buyers: tuple[Buyer, ...]

    def __post_init__(self):
        object.__setattr__(self, "traders", tuple(self.traders))
        object.__setattr__(self, "buyers", tuple(self.buyers))
        for t in self.traders:
            if t.rho < 0 or t.lower > t.upper:
                raise InfeasibleMarket("trader needs rho >= 0 and lower <= upper: %r" % (t,))
        for b in self.buyers:
            if b.sigma < 0 or b.lower > b.upper:
                raise InfeasibleMarket("buyer needs sigma >= 0 and lower <= upper: %r" % (b,))

    def trader_prices(self, x) -> np.ndarray:
        return np.array([t.mu + t.rho * xi for t, xi in zip(self.traders, x)])

    def buyer_prices(self, y) -> np.ndarray:
        return np.array([b.nu - b.sigma * yj for b, yj in zip(self.buyers, y)])


@dataclass(frozen=True)
class SingleEquilibrium:
    x: np.ndarray
    y: np.ndarray
    lam: float
    lam_interval: tuple[float, float]
    tie: bool


def _trader_response(t: Trader, lam: float) -> tuple[float, float]:
    if t.rho > 0:
        v = min(max((lam - t.mu) / t.rho, t.lower), t.upper)
        return v, v
    if lam < t.mu:
        return t.lower, t.lower
    if lam > t.mu:
        return t.upper, t.upper
    return t.lower, t.upper


def _buyer_response(b: Buyer, lam: float) -> tuple[float, float]:
    if b.sigma > 0:
        v = min(max((b.nu - lam) / b.sigma, b.lower), b.upper)
        return v, v
    if lam < b.nu:
        return b.upper, b.upper
    if lam > b.nu:
        return b.lower, b.lower
    return b.lower, b.upper


def _excess(spec: AffinePriceSpec, lam: float) -> tuple[float, float]:
    """Range ``[lo, hi]`` of aggregate supply minus demand at price ``lam``."""
    s = np.array([_trader_response(t, lam) for t in spec.traders]).reshape(-1, 2).sum(axis=0)
    d = np.array([_buyer_response(b, lam) for b in spec.buyers]).reshape(-1, 2).sum(axis=0)
    return s[0] - d[1], s[1] - d[0]


def _bisect(pred, lo: float, hi: float, snaps=()) -> tuple[float, float]:
    """Shrink ``[lo, hi]`` with ``pred(lo)`` false and ``pred(hi)`` true.

    Halving stops at a relative width of a few ulps; breakpoints listed in
    ``snaps`` that fall inside the final bracket are then tried exactly, so a
    crossing located at a price jump is returned without rounding error.
    """
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= 4e-16 * max(abs(lo), abs(hi)):
            break
        if pred(mid):
            hi = mid
        else:
            lo = mid
    for b in sorted(snaps):
        if lo <= b <= hi:
            if pred(b):
                hi = b
            else:
                lo = b
    return lo, hi


def _fill(lo: np.ndarray, hi: np.ndarray, total: float) -> np.ndarray:
    """Volumes in ``[lo, hi]`` summing to ``total`` (clamped to the feasible range),
    lowest index filled first."""
    v = lo.copy()
    rest = min(max(total, lo.sum()), hi.sum()) - v.sum()
    for k in range(v.size):
        if rest <= 0:
            break
        room = hi[k] - lo[k]
        if room <= rest:
            v[k] = hi[k]
            rest -= room
        else:
            v[k] += rest
            rest = 0.0
    return v


def single_commodity_equilibrium(spec: AffinePriceSpec) -> SingleEquilibrium:
    """Clearing price and volumes of a one-commodity market with affine prices.

    Aggregate supply is nondecreasing and aggregate demand nonincreasing in
    the price, so the clearing set ``{lam : 0 in supply(lam) - demand(lam)}``
    is an interval found by two bisections on the monotone excess.  Zero
    slopes (``rho = 0`` or ``sigma = 0``) are step functions whose jump
    covers the whole capacity segment.  When the clearing price or the
    volumes are not unique the result is flagged as a tie; the midpoint price
    and the smallest balanced trade volume are reported.
    """
    if not spec.traders or not spec.buyers:
        raise InfeasibleMarket("need at least one trader and one buyer")
    a1 = sum(t.lower for t in spec.traders)
    b1 = sum(t.upper for t in spec.traders)
    a2 = sum(b.lower for b in spec.buyers)
    b2 = sum(b.upper for b in spec.buyers)
    if a1 > b2 or a2 > b1:
        raise InfeasibleMarket("offer range [%g, %g] and bid range [%g, %g] do not overlap"
                               % (a1, b1, a2, b2))
    pts = []
    for t in spec.traders:
        pts += [t.mu + t.rho * t.lower, t.mu + t.rho * t.upper]
    for b in spec.buyers:
        pts += [b.nu - b.sigma * b.lower, b.nu - b.sigma * b.upper]
    width = max(1.0, max(pts) - min(pts))
    L, U = min(pts) - width, max(pts) + width

    if _excess(spec, L)[1] >= 0:
        lam_a = -math.inf
    else:
        lam_a = _bisect(lambda v: _excess(spec, v)[1] >= 0, L, U, pts)[1]
    if _excess(spec, U)[0] <= 0:
        lam_b = math.inf
    else:
        lam_b = _bisect(lambda v: _excess(spec, v)[0] > 0, L, U, pts)[0]
    if lam_a > lam_b:
        # both bisections bracket the same crossing; rounding may invert them
        lam_a = lam_b = 0.5 * (lam_a + lam_b)
    lam = _pick(lam_a, lam_b)
    lam_tie = not (math.isfinite(lam_a) and math.isfinite(lam_b)) or \
        lam_b - lam_a > 1e-9 * max(1.0, abs(lam))

    tr = np.array([_trader_response(t, lam) for t in spec.traders], dtype=float)
    br = np.array([_buyer_response(b, lam) for b in spec.buyers], dtype=float)
    t_lo = max(tr[:, 0].sum(), br[:, 0].sum())
    t_hi = min(tr[:, 1].sum(), br[:, 1].sum())
    total = t_lo if t_lo <= t_hi else 0.5 * (t_lo + t_hi)
    vol_tie = t_hi - t_lo > 1e-12 * max(1.0, abs(total))
    x = _fill(tr[:, 0], tr[:, 1], total)
    y = _fill(br[:, 0], br[:, 1], total)
    return SingleEquilibrium(x=x, y=y, lam=lam, lam_interval=(lam_a, lam_b),
                             tie=bool(lam_tie or vol_tie))


@dataclass(frozen=True)
class SingleCheckReport:
    max_violation: float
    trader_violations: np.ndarray
    buyer_violations: np.ndarray
    balance_residual: float
    passed: bool = field(default=False)


def _branch(v, lo, hi, price, lam, eps, seller: bool) -> float:
    at_lo = abs(v - lo) <= eps
    at_hi = abs(v - hi) <= eps
    if at_lo and at_hi:
        return 0.0
    if at_lo:
        return max(0.0, lam - price) if seller else max(0.0, price - lam)
    if at_hi:
        return max(0.0, price - lam) if seller else max(0.0, lam - price)
    return abs(price - lam)


def check_single_equilibrium(x, y, lam: float, trader_prices, buyer_prices,
                             trader_bounds: Sequence, buyer_bounds: Sequence,
                             eps: float = 1e-8) -> SingleCheckReport:
    """Residuals of the complementarity conditions at a candidate equilibrium.

    ``trader_bounds``/``buyer_bounds`` are ``(lower, upper)`` array pairs.  A
    volume within ``eps`` of a bound is treated as sitting on it.  Interior
    participants must price at ``lam``; a trader at its lower bound must ask
    at least ``lam`` and at its upper bound at most ``lam``, buyers the
    other way round.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tl, tu = (np.asarray(b, dtype=float) for b in trader_bounds)
    bl, bu = (np.asarray(b, dtype=float) for b in buyer_bounds)
    resid = abs(x.sum() - y.sum())
    if resid > eps or np.any(x < tl - eps) or np.any(x > tu + eps) \
            or np.any(y < bl - eps) or np.any(y > bu + eps):
        raise InfeasiblePoint("volumes violate balance (%.3e) or capacity bounds" % resid)
    g = np.asarray(trader_prices, dtype=float)
    h = np.asarray(buyer_prices, dtype=float)
    tv = np.array([_branch(x[i], tl[i], tu[i], g[i], lam, eps, True) for i in range(x.size)])
    bv = np.array([_branch(y[j], bl[j], bu[j], h[j], lam, eps, False) for j in range(y.size)])
    worst = float(max(tv.max(initial=0.0), bv.max(initial=0.0)))
    return SingleCheckReport(max_violation=worst, trader_violations=tv, buyer_violations=bv,
                             balance_residual=resid, passed=worst <= eps)


def check_affine_equilibrium(spec: AffinePriceSpec, eq: SingleEquilibrium,
                             eps: float = 1e-8) -> SingleCheckReport:
    """Run :func:`check_single_equilibrium` with prices evaluated from ``spec``."""
    return check_single_equilibrium(
        eq.x, eq.y, eq.lam, spec.trader_prices(eq.x), spec.buyer_prices(eq.y),
        ([t.lower for t in spec.traders], [t.upper for t in spec.traders]),
        ([b.lower for b in spec.buyers], [b.upper for b in spec.buyers]), eps)
