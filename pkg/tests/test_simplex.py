import numpy as np
import pytest
from scipy.optimize import linprog

from qvimarket.simplex import LPInfeasible, LPUnbounded, StandardFormLP, simplex_max


def test_matches_scipy_on_random_bounded_lps():
    rng = np.random.default_rng(0)
    for _ in range(150):
        k, n = rng.integers(1, 5), rng.integers(2, 8)
        A = rng.uniform(0.0, 2.0, size=(k, n))
        b = rng.uniform(0.5, 3.0, size=k)
        c = rng.normal(size=n)
        # inequality A x <= b via slacks keeps the region bounded and nonempty
        sol = simplex_max(np.hstack([A, np.eye(k)]), b, np.r_[c, np.zeros(k)])
        ref = linprog(-c, A_ub=A, b_ub=b, bounds=[(0, None)] * n, method="highs")
        assert sol.value == pytest.approx(-ref.fun, abs=1e-9)
        assert np.all(A @ sol.x[:n] <= b + 1e-9)


def test_lexicographic_extremes_of_optimal_face():
    # every point of the simplex is optimal for c = 0
    lp = StandardFormLP(np.ones((1, 3)), [1.0])
    lo = lp.maximize(np.zeros(3), lex="min")
    hi = lp.maximize(np.zeros(3), lex="max")
    np.testing.assert_allclose(lo.x, [0, 0, 1])
    np.testing.assert_allclose(hi.x, [1, 0, 0])
    assert not lo.unique


def test_unique_flag_for_strict_optimum():
    sol = simplex_max(np.ones((1, 3)), [1.0], [5.0, 1.0, 3.0])
    np.testing.assert_allclose(sol.x, [1, 0, 0])
    assert sol.unique and sol.value == 5.0


def test_infeasible_and_unbounded():
    with pytest.raises(LPInfeasible):
        StandardFormLP([[1.0, 1.0]], [-1.0])
    with pytest.raises(LPUnbounded):
        simplex_max([[1.0, -1.0]], [0.0], [1.0, 0.0])


def test_redundant_rows_are_dropped():
    A = np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]])
    sol = simplex_max(A, [1.0, 2.0], [0.0, 2.0, 1.0])
    assert sol.value == pytest.approx(2.0)
