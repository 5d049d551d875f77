"""Dense two-phase primal simplex with dual extraction.

Intended for desk-scale models.  Entering columns follow Dantzig's rule and
switch to Bland's rule after a run of degenerate pivots, which rules out
cycling.
"""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from .model import Status

TOL = 1e-9
DEGENERATE_SWITCH = 50


def _pivot(T: np.ndarray, r: int, col: int) -> None:
    T[r] /= T[r, col]
    factor = T[:, col].copy()
    factor[r] = 0.0
    T -= np.outer(factor, T[r])


def _iterate(T, basis, n_enter, max_iter) -> Tuple[str, int]:
    """Run simplex pivots on tableau ``T``; columns >= n_enter may not enter."""
    m = T.shape[0] - 1
    degenerate = 0
    if n_enter == 0:
        return "optimal", 0
    for it in range(max_iter):
        rc = T[m, :n_enter]
        if degenerate >= DEGENERATE_SWITCH:
            candidates = np.nonzero(rc < -TOL)[0]
            if candidates.size == 0:
                return "optimal", it
            col = int(candidates[0])
        else:
            col = int(np.argmin(rc))
            if rc[col] >= -TOL:
                return "optimal", it
        column = T[:m, col]
        positive = column > TOL
        if not positive.any():
            return "unbounded", it
        ratios = np.full(m, math.inf)
        ratios[positive] = T[:m, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + TOL * (1.0 + abs(best)))[0]
        r = int(min(ties, key=lambda i: basis[i]))
        degenerate = degenerate + 1 if T[r, -1] <= TOL else 0
        _pivot(T, r, col)
        basis[r] = col
    raise RuntimeError("simplex iteration limit reached")


def simplex(c, A, senses, b, lb, ub, max_iter: int = 100_000):
    """Minimize ``c @ x`` subject to rows ``A x (sense) b`` and bounds.

    Returns ``(status, x, duals, objective)``; duals are the sensitivities of
    the optimal objective with respect to each row's right-hand side.
    """
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    m0, n0 = A.shape

    # x_j = offset_j + sum(sign * standard column)
    offset = np.zeros(n0)
    col_of = []  # (orig var, sign)
    bound_rows = []  # (std col, upper)
    for j in range(n0):
        lo, hi = lb[j], ub[j]
        if math.isfinite(lo):
            offset[j] = lo
            col_of.append((j, 1.0))
            if math.isfinite(hi):
                bound_rows.append((len(col_of) - 1, hi - lo))
        elif math.isfinite(hi):
            offset[j] = hi
            col_of.append((j, -1.0))
        else:
            col_of.append((j, 1.0))
            col_of.append((j, -1.0))
    n_std = len(col_of)
    n_slack = sum(1 for s in senses if s != "=") + len(bound_rows)
    m = m0 + len(bound_rows)
    n = n_std + n_slack

    M = np.zeros((m, n))
    rhs = np.zeros(m)
    cost = np.zeros(n)
    for k, (j, sign) in enumerate(col_of):
        M[:m0, k] = sign * A[:, j]
        cost[k] = sign * c[j]
    rhs[:m0] = b - A @ offset
    slack = n_std
    slack_of_row = [-1] * m
    for i, s in enumerate(senses):
        if s == "<=":
            M[i, slack] = 1.0
        elif s == ">=":
            M[i, slack] = -1.0
        else:
            continue
        slack_of_row[i] = slack
        slack += 1
    for r, (k, upper) in enumerate(bound_rows):
        i = m0 + r
        M[i, k] = 1.0
        M[i, slack] = 1.0
        rhs[i] = upper
        slack_of_row[i] = slack
        slack += 1
    flipped = rhs < 0
    M[flipped] *= -1.0
    rhs[flipped] *= -1.0

    # initial basis: +1 slacks where available, artificials elsewhere
    basis = [-1] * m
    art_rows = []
    for i in range(m):
        s = slack_of_row[i]
        if s >= 0 and M[i, s] > 0:
            basis[i] = s
        else:
            art_rows.append(i)
    n_art = len(art_rows)
    T = np.zeros((m + 1, n + n_art + 1))
    T[:m, :n] = M
    T[:m, -1] = rhs
    init_cols = list(basis)
    for k, i in enumerate(art_rows):
        T[i, n + k] = 1.0
        basis[i] = n + k
        init_cols[i] = n + k

    if n_art:
        T[m, :] = 0.0
        for i in art_rows:
            T[m, :n] -= T[i, :n]
            T[m, -1] -= T[i, -1]
        _iterate(T, basis, n, max_iter)
        if -T[m, -1] > 1e-7 * (1.0 + np.abs(rhs).max(initial=0.0)):
            return Status.INFEASIBLE, None, None, None
        for i in range(m):
            if basis[i] >= n:
                nz = np.nonzero(np.abs(T[i, :n]) > 1e-7)[0]
                if nz.size:
                    col = int(nz[0])
                    _pivot(T, i, col)
                    basis[i] = col

    T[m, :] = 0.0
    T[m, :n] = cost
    for i in range(m):
        cb = cost[basis[i]] if basis[i] < n else 0.0
        if cb != 0.0:
            T[m] -= cb * T[i]
    status, _ = _iterate(T, basis, n, max_iter)
    if status == "unbounded":
        return Status.UNBOUNDED, None, None, None

    x_std = np.zeros(n + n_art)
    for i in range(m):
        x_std[basis[i]] = T[i, -1]
    x = offset.copy()
    for k, (j, sign) in enumerate(col_of):
        x[j] += sign * x_std[k]
    # y = c_B B^{-1}; B^{-1} sits in the columns of the initial basis
    cb = np.array([cost[k] if k < n else 0.0 for k in basis])
    binv = T[:m, init_cols]
    y = cb @ binv
    y[flipped] *= -1.0
    duals = y[:m0]
    objective = float(c @ x)
    return Status.OPTIMAL, x, duals, objective
