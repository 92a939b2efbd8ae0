"""Acceptance suite: one test per criterion, each prints a PASS/FAIL line.

The lines are collected in RESULTS and repeated in the pytest terminal
summary (see conftest.py), so they show up even with output capture on.
"""
import itertools
import time

import numpy as np
import pytest

from qvimarket.balance import (AffinePriceSpec, Buyer, Trader, check_affine_equilibrium,
                               lmo_balanced, project_balanced, single_commodity_equilibrium)
from qvimarket.errors import InfeasibleMarket
from qvimarket.model import GeneratorParams, box_violation, random_scenario, state_windows
from qvimarket.pricing import mu_total, regularized_price
from qvimarket.solvers import (PCGMConfig, SGPConfig, certified_decrease_violations, gap,
                               solve_fpi, solve_pcgm, solve_sgp)
from qvimarket.verify import brute_force_mu_optimum, gradient_check, kkt_price_oracle

from conftest import PCGM_SCENARIOS, shipped

RESULTS = []


def report(num, name, ok, detail):
    line = "criterion %2d %-34s %s  %s" % (num, name, "PASS" if ok else "FAIL", detail)
    RESULTS.append(line)
    print(line)
    assert ok, line


def _random_box(rng, m):
    lower = -rng.uniform(0.0, 2.0, size=m)
    upper = rng.uniform(0.0, 2.0, size=m)
    pinned = rng.random(m) < 0.15
    lower[pinned] = upper[pinned] = 0.0
    return lower, upper


def _bisection_projection(z, lower, upper, iters=200):
    lo, hi = float(np.min(z - upper)) - 1.0, float(np.max(z - lower)) + 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.clip(z - mid, lower, upper).sum() > 0:
            lo = mid
        else:
            hi = mid
    return np.clip(z - 0.5 * (lo + hi), lower, upper)


def _balance_vertices(lower, upper):
    m = lower.size
    out = []
    for free in range(m):
        others = [k for k in range(m) if k != free]
        for choice in itertools.product((0, 1), repeat=m - 1):
            y = np.empty(m)
            for k, c in zip(others, choice):
                y[k] = upper[k] if c else lower[k]
            y[free] = -y[others].sum()
            if lower[free] - 1e-12 <= y[free] <= upper[free] + 1e-12:
                out.append(y)
    return np.array(out)


def test_c1_projection_oracle_equivalence():
    rng = np.random.default_rng(2024)
    cases = []
    for _ in range(200):
        m = int(rng.integers(1, 9))
        lower, upper = _random_box(rng, m)
        cases.append((rng.normal(scale=2.0, size=m), lower, upper))
    t0 = time.perf_counter()
    worst_oracle = worst_kkt = 0.0
    for z, lower, upper in cases:
        y, lam = project_balanced(z, lower, upper)
        worst_oracle = max(worst_oracle, float(np.max(np.abs(y - _bisection_projection(z, lower, upper)))))
        worst_kkt = max(worst_kkt, float(np.max(np.abs(y - np.clip(z - lam, lower, upper)))))
    elapsed = time.perf_counter() - t0
    ok = worst_oracle <= 1e-8 and worst_kkt <= 1e-12 and elapsed < 1.0
    report(1, "projection oracle equivalence", ok,
           "oracle %.1e, kkt %.1e, %.2f s" % (worst_oracle, worst_kkt, elapsed))


def test_c2_lmo_exactness():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 6))
        lower, upper = _random_box(rng, m)
        p = rng.normal(size=m)
        _, _, val = lmo_balanced(p, lower, upper)
        worst = max(worst, abs(val - float((_balance_vertices(lower, upper) @ p).min())))
    report(2, "LMO exactness", worst <= 1e-10, "max |value - enum| %.1e" % worst)


def test_c3_sgp_convergence():
    s = shipped("sgp_seed7.json")
    mu_star, _ = brute_force_mu_optimum(s)
    t0 = time.perf_counter()
    tr = solve_sgp(s, SGPConfig(max_iter=200000))
    elapsed = time.perf_counter() - t0
    err = mu_total(tr.state, s) - mu_star
    ok = err <= 1e-3 and tr.iterations <= 200000 and elapsed < 10.0
    report(3, "SGP convergence", ok,
           "mu - mu* %.1e, K %d, %.2f s" % (err, tr.iterations, elapsed))


def test_c4_pcgm_certified_decrease():
    total = bad = 0
    for name in PCGM_SCENARIOS:
        cfg = PCGMConfig()
        tr = solve_pcgm(shipped(name), cfg)
        total += sum(1 for r in tr.records if r.accepted)
        bad += len(certified_decrease_violations(tr, cfg.beta, tol=1e-10))
    report(4, "PCGM certified decrease", bad == 0,
           "%d accepted steps, %d violations" % (total, bad))


def test_c5_pcgm_stages_and_restarts():
    worst_stage, worst_slack, fails = 0, -np.inf, []
    for name in PCGM_SCENARIOS:
        s = shipped(name)
        cfg = PCGMConfig(iter_cap=100000)
        t0 = time.perf_counter()
        tr = solve_pcgm(s, cfg)
        elapsed = time.perf_counter() - t0
        if tr.status != "converged":
            fails.append(name)
        for r in tr.records:
            worst_stage = max(worst_stage, r.iter)
        rows = [r for r in tr.records if r.restart]
        for w, r in zip(tr.restarts, rows):
            g, _ = gap(w, s)
            worst_slack = max(worst_slack, g - r.delta)
        if name == "pcgm_seed11.json":
            seed11 = (tr.gap, elapsed)
    ok = (not fails and worst_stage < 100000 and worst_slack <= 1e-10
          and seed11[0] <= 1e-5 and seed11[1] < 10.0)
    report(5, "PCGM stage finiteness and restarts", ok,
           "max stage length %d, restart slack %.1e, seed-11 gap %.1e in %.2f s"
           % (worst_stage, worst_slack, seed11[0], seed11[1]))


def test_c6_gradient_identity():
    err = gradient_check(shipped("pcgm_seed11.json"), points=50)
    report(6, "gradient identity", err <= 1e-5, "max relative error %.1e" % err)


def test_c7_completed_square():
    rng = np.random.default_rng(7)
    worst, count, seed = 0.0, 0, 0
    while count < 100:
        s = random_scenario(seed, 2, int(rng.integers(2, 5)), GeneratorParams(mode="regularized"))
        seed += 1
        for a, V in zip(s.agents, s.polytopes()):
            x = rng.normal(size=s.n)
            p = regularized_price(a, x, V)
            q = kkt_price_oracle(V, x, a.pricing.reference, a.pricing.weight)
            worst = max(worst, float(np.max(np.abs(p - q))))
            count += 1
    report(7, "completed-square identity", worst <= 1e-8, "max |wolfe - kkt| %.1e" % worst)


def test_c8_single_commodity_equilibrium():
    spec = AffinePriceSpec([Trader(1.0, 1.0, 0.0, 10.0)], [Buyer(7.0, 2.0, 0.0, 10.0)])
    eq = single_commodity_equilibrium(spec)
    closed = max(abs(eq.x[0] - 2.0), abs(eq.y[0] - 2.0), abs(eq.lam - 3.0))
    viol = check_affine_equilibrium(spec, eq, 1e-8).max_violation
    rng = np.random.default_rng(8)
    passed = done = 0
    while done < 500:
        traders = [Trader(rng.uniform(0, 8), rng.uniform(0, 3) * (rng.random() > 0.3), 0.0,
                          rng.uniform(0.5, 5)) for _ in range(int(rng.integers(1, 5)))]
        buyers = [Buyer(rng.uniform(0, 8), rng.uniform(0, 3) * (rng.random() > 0.3), 0.0,
                        rng.uniform(0.5, 5)) for _ in range(int(rng.integers(1, 5)))]
        sp = AffinePriceSpec(traders, buyers)
        try:
            e = single_commodity_equilibrium(sp)
        except InfeasibleMarket:
            continue
        done += 1
        passed += check_affine_equilibrium(sp, e, 1e-8).passed
    ok = closed <= 1e-9 and viol == 0.0 and passed == 500
    report(8, "single-commodity equilibrium", ok,
           "closed-form err %.1e, checker %.1e, random %d/500" % (closed, viol, passed))


def test_c9_balance_conservation():
    worst_bal, worst_win = 0.0, 0.0
    runs = [(solve_sgp, "sgp_seed7.json", SGPConfig(max_iter=2000, target_gap=None)),
            (solve_fpi, "pcgm_seed11.json", SGPConfig(theta0=0.5, max_iter=500, target_gap=None))]
    runs += [(solve_pcgm, name, PCGMConfig()) for name in PCGM_SCENARIOS]
    for solver, name, cfg in runs:
        s = shipped(name)
        tr = solver(s, cfg, keep_iterates=True)
        for x in tr.iterates:
            worst_bal = max(worst_bal, float(np.max(np.abs(x.sum(axis=0)))))
        if solver is solve_pcgm:
            worst_win = max(worst_win, tr.max_window_violation)
            for x in tr.iterates:
                lo, hi = state_windows(s, x)
                worst_win = max(worst_win, box_violation(x, lo, hi))
    ok = worst_bal <= 1e-9 and worst_win == 0.0
    report(9, "balance conservation", ok,
           "max column sum %.1e, window violation %.1e" % (worst_bal, worst_win))


def test_c10_determinism():
    runs = [(solve_sgp, "sgp_seed7.json", SGPConfig(max_iter=3000, target_gap=None)),
            (solve_fpi, "pcgm_seed9.json", SGPConfig(theta0=0.5, max_iter=500, target_gap=None)),
            (solve_pcgm, "pcgm_seed11.json", PCGMConfig())]
    same = all(solver(shipped(n), c).to_csv().encode() == solver(shipped(n), c).to_csv().encode()
               for solver, n, c in runs)
    report(10, "determinism", same, "byte-identical traces for sgp, fpi, pcgm")
