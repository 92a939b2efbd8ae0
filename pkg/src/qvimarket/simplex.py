"""Dense tableau simplex for small standard-form LPs.

Problems are ``max c.x  s.t.  A x = b, x >= 0``.  Pivoting follows Bland's
rule, so degenerate problems terminate without a perturbation scheme.  The
sizes handled here are tiny (price polytopes with a handful of rows, oracle
LPs with a few dozen), so a dense tableau is the simplest robust choice.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure, QVIMarketError

PIVOT_TOL = 1e-11
COST_TOL = 1e-11
FACE_TOL = 1e-10
MAX_PIVOTS = 10_000


class LPInfeasible(QVIMarketError, ValueError):
    pass


class LPUnbounded(QVIMarketError, ValueError):
    pass


@dataclass(frozen=True)
class LPSolution:
    x: np.ndarray
    value: float
    basis: tuple[int, ...]
    reduced_costs: np.ndarray
    unique: bool
    pivots: int


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _reduced_costs(T: np.ndarray, basis: list[int], c: np.ndarray) -> np.ndarray:
    return c - c[basis] @ T[:, :-1]


def _optimize(T, basis, c, allowed, max_pivots):
    """Run primal simplex iterations in place; return (reduced costs, pivots)."""
    pivots = 0
    while True:
        d = _reduced_costs(T, basis, c)
        d[basis] = 0.0
        candidates = np.flatnonzero(allowed & (d > COST_TOL))
        if candidates.size == 0:
            return d, pivots
        j = int(candidates[0])
        col = T[:, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            raise LPUnbounded("objective unbounded along column %d" % j)
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(min(ties, key=lambda t: basis[t]))
        _pivot(T, r, j)
        basis[r] = j
        np.maximum(T[:, -1], 0.0, out=T[:, -1])
        pivots += 1
        if pivots > max_pivots:
            raise NumericalFailure("simplex pivot limit exceeded (%d)" % max_pivots)


class StandardFormLP:
    """Feasible region ``{x >= 0 : A x = b}`` with a cached phase-one basis.

    The phase-one tableau is computed once; every :meth:`maximize` call works
    on a private copy, so instances can be shared between threads.
    """

    def __init__(self, A, b, max_pivots: int = MAX_PIVOTS):
        A = np.array(A, dtype=float, ndmin=2)
        b = np.array(b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise ValueError("A and b disagree on the number of rows")
        self.n_cols = A.shape[1]
        self.max_pivots = max_pivots
        self._T, self._basis = self._phase_one(A, b)
        self._T.setflags(write=False)

    def _phase_one(self, A, b):
        m, n = A.shape
        flip = b < 0
        A = np.where(flip[:, None], -A, A)
        b = np.abs(b)
        T = np.zeros((m, n + m + 1))
        T[:, :n] = A
        T[:, n:n + m] = np.eye(m)
        T[:, -1] = b
        basis = list(range(n, n + m))
        c = np.zeros(n + m)
        c[n:] = -1.0
        allowed = np.ones(n + m, dtype=bool)
        _optimize(T, basis, c, allowed, self.max_pivots)
        infeas = float(T[:, -1] @ (np.asarray(basis) >= n))
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))
        if infeas > 1e-9 * scale:
            raise LPInfeasible("equality system has no nonnegative solution")
        # drive remaining artificials out of the basis or drop redundant rows
        keep = []
        for r in range(m):
            if basis[r] < n:
                keep.append(r)
                continue
            cand = np.flatnonzero(np.abs(T[r, :n]) > 1e-9)
            if cand.size:
                _pivot(T, r, int(cand[0]))
                basis[r] = int(cand[0])
                keep.append(r)
        T = T[keep][:, list(range(n)) + [n + m]]
        basis = [basis[r] for r in keep]
        T[:, -1] = np.maximum(T[:, -1], 0.0)
        return T, basis

    def maximize(self, c, *, lex: str | None = None, coords=None) -> LPSolution:
        """Maximize ``c.x``; optionally pick the lexicographic extreme optimum.

        ``lex`` is ``"min"`` or ``"max"``; ``coords`` lists the coordinates
        used for the lexicographic order (default: all columns).  The extreme
        point of the optimal face is reached by successive optimizations;
        after each one, columns with strictly negative reduced cost are
        pinned at zero, which keeps every earlier optimum exact instead of
        adding equality rows.
        """
        c = np.asarray(c, dtype=float).reshape(-1)
        if c.size != self.n_cols:
            raise ValueError("objective has wrong length")
        T = self._T.copy()
        basis = list(self._basis)
        allowed = np.ones(self.n_cols, dtype=bool)
        d, pivots = _optimize(T, basis, c, allowed, self.max_pivots)
        nonbasic = np.ones(self.n_cols, dtype=bool)
        nonbasic[basis] = False
        unique = bool(np.all(d[nonbasic] < -FACE_TOL))
        if lex is not None and not unique:
            sign = -1.0 if lex == "min" else 1.0
            allowed &= ~(d < -FACE_TOL)
            order = range(self.n_cols) if coords is None else coords
            for k in order:
                e = np.zeros(self.n_cols)
                e[k] = sign
                dk, p = _optimize(T, basis, e, allowed, self.max_pivots)
                pivots += p
                allowed &= ~(dk < -FACE_TOL)
        x = np.zeros(self.n_cols)
        x[basis] = T[:, -1]
        return LPSolution(
            x=x,
            value=float(c @ x),
            basis=tuple(basis),
            reduced_costs=d,
            unique=unique,
            pivots=pivots,
        )


def simplex_max(A, b, c, *, lex: str | None = None) -> LPSolution:
    """One-shot convenience wrapper around :class:`StandardFormLP`."""
    return StandardFormLP(A, b).maximize(c, lex=lex)
