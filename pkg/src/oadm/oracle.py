"""Exact small-n solver for l1-regularised quadratics by sign enumeration.

Minimises ``x^T P x / 2 - q^T x + lam ||x||_1``.  For every support S and
sign vector s on S the stationarity condition ``P_SS x_S = q_S - lam s`` gives
one candidate; the optimum is among the candidates, so the minimum objective
over all 3^n of them is exact.  Used as the comparator for tiny problems and
as the reference in tests.
"""

from __future__ import annotations

import itertools

import numpy as np

from .exceptions import ParameterError

MAX_N = 14


def _sign_matrix(k):
    return np.array(list(itertools.product((-1.0, 1.0), repeat=k))).T


def l1_quadratic_enumeration(P, q, lam):
    """Return ``(x, value)`` minimising ``x^T P x / 2 - q^T x + lam ||x||_1``."""
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    if n > MAX_N:
        raise ParameterError(f"enumeration limited to n <= {MAX_N}, got {n}")
    signs = {k: _sign_matrix(k) for k in range(1, n + 1)}
    best_x = np.zeros(n)
    best = 0.0
    for k in range(1, n + 1):
        S_all = np.array(list(itertools.combinations(range(n), k)))
        sg = signs[k]
        for S in S_all:
            PSS = P[np.ix_(S, S)]
            rhs = q[S][:, None] - lam * sg
            try:
                X = np.linalg.solve(PSS, rhs)
            except np.linalg.LinAlgError:
                X = np.linalg.pinv(PSS) @ rhs
            vals = 0.5 * np.einsum("ij,ij->j", X, PSS @ X) - q[S] @ X + lam * np.abs(X).sum(axis=0)
            j = int(np.argmin(vals))
            if vals[j] < best:
                best = float(vals[j])
                best_x = np.zeros(n)
                best_x[S] = X[:, j]
    return best_x, best


def genlasso_enumeration(loss, lam, D=None):
    """Exact minimiser of ``loss(x) + lam ||D x||_1`` for a quadratic loss.

    D must be square and invertible (identity when omitted); the problem is
    solved in v = D x and mapped back.  Returns ``(x, value)`` with ``value``
    evaluated on the original objective.
    """
    P, q = loss.quadratic()
    if D is None:
        x, _ = l1_quadratic_enumeration(P, q, lam)
    else:
        Dinv = np.linalg.inv(D.toarray())
        x_v, _ = l1_quadratic_enumeration(Dinv.T @ P @ Dinv, Dinv.T @ q, lam)
        x = Dinv @ x_v
    Dx = x if D is None else D.matvec(x)
    return x, float(loss.value(x) + lam * np.abs(Dx).sum())
