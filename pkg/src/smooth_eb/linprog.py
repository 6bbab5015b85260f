"""Dense phase-1 simplex for box-constrained mixture-weight feasibility.

The only question asked of this module is whether there is a probability
vector ``h`` (``h >= 0``, ``sum(h) == 1``) with ``lower <= A @ h <= upper``.
Rows whose bound is infinite are dropped.  The solver minimises the total
mass on artificial variables.  Entering columns are chosen by most negative
reduced cost; after a run of degenerate pivots the rule falls back to
Bland's smallest-index choice, which rules out cycling.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, Numerics

_PIVOT_EPS = 1e-11
_COST_EPS = 1e-12
_BLAND_AFTER = 50


@dataclass(frozen=True)
class FeasibilityProblem:
    """``lower <= A h <= upper`` with ``h`` on the probability simplex."""

    A: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape[0] != A.shape[0] or upper.shape[0] != A.shape[0]:
            raise DataError("bound vectors must have one entry per row of A")
        if not np.all(np.isfinite(A)):
            raise DataError("constraint matrix has non-finite entries")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise DataError("bounds contain NaN")
        if np.any(lower > upper):
            raise DataError("lower bound exceeds upper bound")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def shape(self):
        return self.A.shape

    def violation(self, h):
        """Largest constraint violation of ``h`` (0 when feasible)."""
        h = np.asarray(h, dtype=float)
        Ah = self.A @ h
        parts = [
            np.max(self.lower - Ah, initial=0.0),
            np.max(Ah - self.upper, initial=0.0),
            np.max(-h, initial=0.0),
            abs(h.sum() - 1.0),
        ]
        return float(max(parts))


def _build_tableau(p):
    A, lower, upper = p.A, p.lower, p.upper
    n, m = A.shape
    rows, rhs, slack_sign = [], [], []
    for i in range(n):
        if np.isfinite(upper[i]):
            rows.append(A[i])
            rhs.append(upper[i])
            slack_sign.append(1.0)
        if np.isfinite(lower[i]):
            rows.append(A[i])
            rhs.append(lower[i])
            slack_sign.append(-1.0)
    k = len(rows)
    R = k + 1
    M = np.zeros((R, m + k))
    if k:
        M[:k, :m] = np.asarray(rows)
        M[np.arange(k), m + np.arange(k)] = slack_sign
    M[k, :m] = 1.0
    b = np.asarray(rhs + [1.0])

    flip = b < 0
    M[flip] *= -1.0
    b[flip] *= -1.0

    # a slack whose coefficient is +1 after sign normalisation can start basic
    basis = np.full(R, -1, dtype=int)
    for i in range(k):
        if M[i, m + i] > 0:
            basis[i] = m + i
    need_art = np.nonzero(basis < 0)[0]
    n_art = need_art.size
    ncols = m + k + n_art
    T = np.zeros((R + 1, ncols + 1))
    T[:R, : m + k] = M
    T[:R, -1] = b
    T[need_art, m + k + np.arange(n_art)] = 1.0
    basis[need_art] = m + k + np.arange(n_art)
    # phase-1 objective: minimise the artificial mass
    T[R, : m + k] = -M[need_art].sum(axis=0)
    # the objective row holds minus the current artificial mass
    T[R, -1] = -b[need_art].sum()
    return T, basis, m + k


def _phase_one(T, basis, n_real, max_iter, bland_after=_BLAND_AFTER):
    R = T.shape[0] - 1
    it = 0
    degenerate = 0
    while True:
        cost = T[R, :n_real]
        if degenerate < bland_after:
            col = int(np.argmin(cost))
            if cost[col] >= -_COST_EPS:
                return it
        else:
            candidates = np.nonzero(cost < -_COST_EPS)[0]
            if candidates.size == 0:
                return it
            col = int(candidates[0])
        if it >= max_iter:
            raise Numerics(f"phase-1 simplex exceeded {max_iter} pivots")
        column = T[:R, col]
        pos = column > _PIVOT_EPS
        if not np.any(pos):
            # the phase-1 objective is bounded below, so this is breakdown
            raise Numerics("unbounded ray in phase-1 simplex")
        ratios = np.full(R, np.inf)
        ratios[pos] = T[:R, -1][pos] / column[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))[0]
        row = ties[np.argmin(basis[ties])]
        degenerate = degenerate + 1 if best <= _COST_EPS else 0
        T[row] /= T[row, col]
        factor = T[:, col].copy()
        factor[row] = 0.0
        T -= np.outer(factor, T[row])
        basis[row] = col
        it += 1


def feasible(problem, tol=1e-9, max_iter=None):
    """Decide feasibility of ``problem`` by phase-1 simplex.

    Parameters
    ----------
    problem : FeasibilityProblem
    tol : float
        The instance is declared feasible when the minimal artificial mass
        is at most ``tol``.
    max_iter : int, optional
        Pivot cap; defaults to ``50 * (n + m)``.

    Returns
    -------
    (bool, ndarray or None)
        The answer and, when feasible, a witness ``h`` satisfying every
        constraint within ``10 * tol``.
    """
    n, m = problem.shape
    if max_iter is None:
        max_iter = 50 * (n + m)
    T, basis, n_real = _build_tableau(problem)
    _phase_one(T, basis, n_real, max_iter)
    R = T.shape[0] - 1
    if -T[R, -1] > tol:
        return False, None
    z = np.zeros(T.shape[1] - 1)
    z[basis] = T[:R, -1]
    h = np.clip(z[:m], 0.0, None)
    s = h.sum()
    if s <= 0:
        return False, None
    h = h / s
    if problem.violation(h) > 10 * tol:
        raise Numerics(
            f"simplex witness violates constraints by {problem.violation(h):.3g}"
        )
    return True, h


def feasible_rowgen(problem, tol=1e-9, initial_rows=60, batch=25, max_rounds=200):
    """Feasibility by row generation for tall problems.

    A subset of rows is solved first; rows violated by the witness are
    added in batches until the witness satisfies every row.  A relaxation
    that is infeasible proves the full problem infeasible, so the answer
    is exact.

    Returns
    -------
    (bool, ndarray or None)
        Same contract as :func:`feasible`.
    """
    n, _ = problem.shape
    if n <= initial_rows:
        return feasible(problem, tol=tol)
    active = np.zeros(n, dtype=bool)
    active[np.unique(np.linspace(0, n - 1, initial_rows).round().astype(int))] = True
    A, lo, hi = problem.A, problem.lower, problem.upper
    for _ in range(max_rounds):
        sub = FeasibilityProblem(A[active], lo[active], hi[active])
        ok, h = feasible(sub, tol=tol)
        if not ok:
            return False, None
        Ah = A @ h
        viol = np.maximum(lo - Ah, Ah - hi)
        viol[active] = -np.inf
        worst = np.argsort(viol)[::-1][:batch]
        worst = worst[viol[worst] > 10 * tol]
        if worst.size == 0:
            return True, h
        active[worst] = True
    raise Numerics(f"row generation did not settle in {max_rounds} rounds")


def brute_force_feasible(problem, step=1e-3, tol=1e-9):
    """Exhaustive lattice search over the simplex (for ``m <= 3`` only)."""
    A = problem.A
    m = A.shape[1]
    if m > 3:
        raise ValueError("lattice search is only tractable for m <= 3")
    k = int(round(1.0 / step))
    if m == 1:
        H = np.ones((1, 1))
    elif m == 2:
        a = np.arange(k + 1) / k
        H = np.column_stack([a, 1 - a])
    else:
        i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
        keep = i + j <= k
        a, b = i[keep] / k, j[keep] / k
        H = np.column_stack([a, b, 1 - a - b])
    Ah = H @ A.T
    ok = np.all(Ah >= problem.lower - tol, axis=1) & np.all(
        Ah <= problem.upper + tol, axis=1
    )
    return bool(ok.any())
