"""Dense two-phase simplex solver for the small LPs the geometry needs.

Solves   min c @ x   s.t.   A_ub x <= b_ub,  A_eq x = b_eq,  x free

by splitting x into positive/negative parts, adding slacks, and running a
tableau simplex with Bland's rule (smallest-index entering and leaving
variable), which cannot cycle.  Desk scale only: tens of rows/columns.
"""

from __future__ import annotations

import numpy as np

TOL = 1e-9


class SolverFailureError(RuntimeError):
    """The simplex iteration limit was hit before reaching a conclusion."""


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and abs(T[i, col]) > 0.0:
            T[i] -= T[i, col] * T[row]
    basis[row] = col


def _run_simplex(T: np.ndarray, basis: np.ndarray, ncols: int, max_iter: int) -> str:
    """Iterate to optimality on a tableau whose last row is the objective.

    Returns "optimal" or "unbounded".  Bland's rule throughout.
    """
    for _ in range(max_iter):
        obj = T[-1, :ncols]
        col = -1
        for j in range(ncols):
            if obj[j] < -TOL:
                col = j
                break
        if col < 0:
            return "optimal"
        row, best = -1, np.inf
        for i in range(T.shape[0] - 1):
            a = T[i, col]
            if a > TOL:
                ratio = T[i, -1] / a
                if ratio < best - TOL or (
                    abs(ratio - best) <= TOL and (row < 0 or basis[i] < basis[row])
                ):
                    best = ratio
                    row = i
        if row < 0:
            return "unbounded"
        _pivot(T, basis, row, col)
    raise SolverFailureError("simplex iteration limit exceeded")


def solve_lp(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    max_iter: int = 20000,
):
    """Minimize c @ x over free x. Returns (status, x, objective).

    status is "optimal", "infeasible" or "unbounded"; x and objective are
    None unless optimal.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # columns: x+ (n), x- (n), slacks (m_ub), artificials (m)
    A = np.vstack([np.hstack([A_ub, -A_ub]), np.hstack([A_eq, -A_eq])])
    b = np.concatenate([b_ub, b_eq])
    S = np.vstack([np.eye(m_ub), np.zeros((m_eq, m_ub))])
    neg = b < 0
    A[neg] *= -1.0
    b[neg] = -b[neg]
    S[neg] *= -1.0

    nx = 2 * n
    ncols = nx + m_ub + m
    T = np.zeros((m + 1, ncols + 1))
    T[:m, :nx] = A
    T[:m, nx : nx + m_ub] = S
    T[:m, nx + m_ub : ncols] = np.eye(m)
    T[:m, -1] = b
    basis = np.arange(nx + m_ub, nx + m_ub + m)

    # phase 1: minimize the artificial sum
    T[-1, nx + m_ub : ncols] = 1.0
    for i in range(m):
        T[-1] -= T[i]
    status = _run_simplex(T, basis, ncols, max_iter)
    if status != "optimal":  # phase-1 objective is bounded below by 0
        raise SolverFailureError("phase 1 did not converge")
    if T[-1, -1] < -TOL:
        return "infeasible", None, None

    # drive artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= nx + m_ub:
            for j in range(nx + m_ub):
                if abs(T[i, j]) > TOL:
                    _pivot(T, basis, i, j)
                    break

    # phase 2 on the original objective, artificial columns frozen
    T[:, nx + m_ub : ncols] = 0.0
    T[-1, :] = 0.0
    T[-1, :n] = c
    T[-1, n:nx] = -c
    for i in range(m):
        if basis[i] < nx + m_ub and abs(T[-1, basis[i]]) > 0.0:
            T[-1] -= T[-1, basis[i]] * T[i]
    status = _run_simplex(T, basis, nx + m_ub, max_iter)
    if status == "unbounded":
        return "unbounded", None, None

    x = np.zeros(nx + m_ub)
    for i in range(m):
        if basis[i] < nx + m_ub:
            x[basis[i]] = T[i, -1]
    sol = x[:n] - x[n:nx]
    return "optimal", sol, float(c @ sol)


def lp_feasible(A_ub=None, b_ub=None, A_eq=None, b_eq=None) -> bool:
    """Feasibility of {A_ub x <= b_ub, A_eq x = b_eq} at tolerance 1e-9."""
    ncols = 0
    for M in (A_ub, A_eq):
        if M is not None:
            ncols = np.asarray(M).shape[1]
            break
    status, _, _ = solve_lp(np.zeros(ncols), A_ub, b_ub, A_eq, b_eq)
    return status == "optimal"
