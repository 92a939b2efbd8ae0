import numpy as np
import pytest
from scipy.optimize import linprog

from qvimarket.balance import project_market
from qvimarket.errors import TooLargeForOracle, WrongPricingMode
from qvimarket.model import (AgentSpec, Dimensions, GeneratorParams, Scenario, random_scenario,
                             random_states)
from qvimarket.pricing import eta_total, mu_total
from qvimarket.solvers import PCGMConfig, SGPConfig, solve_pcgm, solve_sgp
from qvimarket.verify import (brute_force_eta_optimum, brute_force_mu_optimum, check_qvi_solution,
                              convexity_check, gradient_check)

from conftest import box_scenario, identical_reference_scenario, shipped


def _scipy_mu_optimum(s):
    # min sum t_i s.t. <v, x_i> <= t_i for all vertices, columns sum to zero, box
    m, n = s.m, s.n
    verts = [V.vertices() for V in s.polytopes()]
    nv = m * n + m
    A, b = [], []
    for i, vs in enumerate(verts):
        for v in vs:
            r = np.zeros(nv)
            r[i * n:(i + 1) * n] = v
            r[m * n + i] = -1
            A.append(r)
            b.append(0.0)
    Aeq = np.zeros((n, nv))
    for j in range(n):
        Aeq[j, [i * n + j for i in range(m)]] = 1
    c = np.r_[np.zeros(m * n), np.ones(m)]
    bounds = list(zip(s.lower.ravel(), s.upper.ravel())) + [(None, None)] * m
    res = linprog(c, A_ub=np.array(A), b_ub=b, A_eq=Aeq, b_eq=np.zeros(n), bounds=bounds,
                  method="highs")
    return res.fun


def test_identical_references_certify_zero():
    s = identical_reference_scenario()
    rep = check_qvi_solution(np.zeros((3, 2)), s)
    assert rep.passed and abs(rep.qvi_gap) <= 1e-15
    np.testing.assert_allclose(rep.clearing.lam, [0.4, 0.6], atol=1e-14)


def test_pcgm_output_passes_and_perturbation_fails():
    s = shipped("pcgm_seed11.json")
    tr = solve_pcgm(s)
    rep = check_qvi_solution(tr.state, s)
    assert rep.passed and rep.qvi_gap <= 1e-5
    assert np.sum(rep.partial_residuals) == pytest.approx(rep.qvi_gap, abs=1e-12)
    bad = tr.state.copy()
    bad[0, 0] += 0.1
    bad[1, 0] -= 0.1
    assert not check_qvi_solution(bad, s).passed


def test_unbalanced_point_reports_feasibility():
    s = identical_reference_scenario()
    x = np.zeros((3, 2))
    x[0, 0] = 0.2
    rep = check_qvi_solution(x, s)
    assert rep.feasibility_violation == pytest.approx(0.2)
    assert not rep.passed


def test_agent_permutation_keeps_gap():
    s = shipped("pcgm_seed9.json")
    x = solve_pcgm(s, PCGMConfig(delta_min=1e-3)).state
    perm = [2, 0, 1]
    sp = Scenario(dims=s.dims, agents=tuple(s.agents[k] for k in perm))
    a = check_qvi_solution(x, s).qvi_gap
    b = check_qvi_solution(x[perm], sp).qvi_gap
    assert a == pytest.approx(b, abs=1e-12)


def test_sgp_output_checked_with_supplied_prices():
    s = shipped("sgp_seed7.json")
    tr = solve_sgp(s)
    rep = check_qvi_solution(tr.state, s, prices_hint=tr.prices)
    assert rep.qvi_gap <= 1e-4
    assert all(src == "supplied" for src in rep.price_source)


@pytest.mark.parametrize("seed", [7, 3, 21])
def test_mu_oracle_matches_scipy(seed):
    s = random_scenario(seed, 4, 2, GeneratorParams(mode="lp"))
    mu_star, x = brute_force_mu_optimum(s)
    assert mu_star == pytest.approx(_scipy_mu_optimum(s), abs=1e-9)
    assert mu_total(x, s) == pytest.approx(mu_star, abs=1e-9)


def test_mu_oracle_is_a_lower_bound():
    s = random_scenario(7, 4, 2, GeneratorParams(mode="lp"))
    mu_star, _ = brute_force_mu_optimum(s)
    rng = np.random.default_rng(0)
    for z in random_states(s, 1000, rng):
        x, _ = project_market(z, s.lower, s.upper)
        assert mu_total(x, s) >= mu_star - 1e-10


def test_mu_oracle_scales_with_box():
    s = box_scenario(3, 2, lo=-1, hi=1, techs=None)
    s2 = box_scenario(3, 2, lo=-2, hi=2, techs=None)
    a, _ = brute_force_mu_optimum(s)
    b, _ = brute_force_mu_optimum(s2)
    assert b == pytest.approx(2 * a, abs=1e-12)
    assert a <= 1e-12


def test_mu_oracle_guards():
    with pytest.raises(WrongPricingMode):
        brute_force_mu_optimum(identical_reference_scenario())
    with pytest.raises(TooLargeForOracle):
        brute_force_mu_optimum(box_scenario(2, 5))


def test_eta_oracle_matches_stationary_pcgm():
    s = shipped("pcgm_stationary_seed11.json")
    eta_star, x_star = brute_force_eta_optimum(s)
    tr = solve_pcgm(s)
    assert eta_total(tr.state, s) - eta_star <= 1e-4
    assert eta_total(tr.state, s) >= eta_star - 1e-10
    perm = [1, 2, 0]
    sp = Scenario(dims=s.dims, agents=tuple(s.agents[k] for k in perm))
    assert brute_force_eta_optimum(sp)[0] == pytest.approx(eta_star, abs=1e-9)


def test_gradient_check_and_step_halving():
    s = shipped("pcgm_seed11.json")
    err = gradient_check(s, points=50)
    assert err <= 1e-5
    # central differences of a piecewise-smooth function: smaller steps do not blow up
    assert gradient_check(s, points=10, h=5e-7) <= 1e-5


@pytest.mark.parametrize("fn,name", [("mu", "sgp_seed7.json"), ("eta", "pcgm_seed11.json")])
def test_convexity(fn, name):
    assert convexity_check(fn, shipped(name), pairs=200) <= 1e-12


def test_check_lambda_matches_last_sgp_projection():
    # full-simplex prices tie at the origin; every lex-min subgradient is e_last
    lo = [[-1, -2], [-0.5, -1], [-3, -0.2]]
    hi = [[2, 1], [0.3, 0.4], [1, 3]]
    s = Scenario(dims=Dimensions(3, 2), agents=tuple(
        AgentSpec(lower=l, upper=h, radius=[np.inf, np.inf]) for l, h in zip(lo, hi)))
    tr = solve_sgp(s, SGPConfig(max_iter=20, target_gap=None))
    rep = check_qvi_solution(tr.state, s)
    np.testing.assert_allclose(rep.clearing.lam, tr.clearing.lam, atol=1e-8)
    assert rep.passed
