"""Structured linear algebra used by the per-round updates.

Everything here runs in O(n) for the structured operators (scaled identity,
the bidiagonal difference matrix) so an online round never pays more than a
handful of vector passes.  Dense operators are supported for small problems
and for the test oracles.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import ParameterError, StructureError

__all__ = [
    "Identity",
    "BidiagonalDifference",
    "DenseOperator",
    "as_operator",
    "SpectralInfo",
    "shrink",
    "rank_one_regularized_solve",
    "tridiagonal_solve",
    "dtd_solve",
    "shifted_dtd_solve",
    "d_solve",
    "dt_solve",
    "estimate_spectral",
    "power_iteration",
    "count_flops",
]


# ---------------------------------------------------------------------------
# flop accounting
# ---------------------------------------------------------------------------

_FLOPS: contextvars.ContextVar = contextvars.ContextVar("oadm_flops", default=None)


class FlopTally:
    def __init__(self):
        self.flops = 0

    def add(self, k):
        self.flops += int(k)


@contextlib.contextmanager
def count_flops():
    """Tally nominal floating point operations issued by the kernels.

    >>> with count_flops() as tally:
    ...     _ = d_solve(np.ones(4))
    >>> tally.flops
    4
    """
    tally = FlopTally()
    token = _FLOPS.set(tally)
    try:
        yield tally
    finally:
        _FLOPS.reset(token)


def _tally(k):
    tally = _FLOPS.get()
    if tally is not None:
        tally.add(k)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Identity:
    """``scale * I`` of size n.  ``Identity(n, -1.0)`` is the usual B = -I."""

    n: int
    scale: float = 1.0

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def invertible(self):
        return self.scale != 0.0

    def matvec(self, x):
        _tally(self.n)
        return self.scale * x

    def rmatvec(self, y):
        _tally(self.n)
        return self.scale * y

    def solve(self, v):
        if not self.invertible:
            raise StructureError("zero-scaled identity is singular")
        _tally(self.n)
        return v / self.scale

    def toarray(self):
        return self.scale * np.eye(self.n)


@dataclass(frozen=True)
class BidiagonalDifference:
    """Square upper bidiagonal D with 1 on the diagonal and -1 above it.

    ``D @ x = (x0 - x1, x1 - x2, ..., x_{n-2} - x_{n-1}, x_{n-1})``.  The last
    row keeps D square and invertible (det D = 1).
    """

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"dimension must be >= 1, got {self.n}")

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def invertible(self):
        return True

    def matvec(self, x):
        _tally(self.n)
        out = np.array(x, dtype=float, copy=True)
        out[:-1] -= x[1:]
        return out

    def rmatvec(self, y):
        _tally(self.n)
        out = np.array(y, dtype=float, copy=True)
        out[1:] -= y[:-1]
        return out

    def solve(self, v):
        return d_solve(v)

    def solve_transpose(self, v):
        return dt_solve(v)

    def toarray(self):
        return np.eye(self.n) - np.eye(self.n, k=1)


class DenseOperator:
    """Thin wrapper so dense matrices expose the same interface."""

    def __init__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        self.M = M
        self._lu = None

    @property
    def shape(self):
        return self.M.shape

    @property
    def n(self):
        return self.M.shape[1]

    @property
    def invertible(self):
        m, n = self.M.shape
        if m != n:
            return False
        s = np.linalg.svd(self.M, compute_uv=False)
        return bool(s[-1] > 1e-12 * max(s[0], 1.0))

    def matvec(self, x):
        _tally(2 * self.M.size)
        return self.M @ x

    def rmatvec(self, y):
        _tally(2 * self.M.size)
        return self.M.T @ y

    def solve(self, v):
        if not self.invertible:
            raise StructureError("dense operator is not square and invertible")
        if self._lu is None:
            self._lu = scipy.linalg.lu_factor(self.M)
        return scipy.linalg.lu_solve(self._lu, v)

    def toarray(self):
        return self.M.copy()

    def __repr__(self):
        return f"DenseOperator(shape={self.M.shape})"


def as_operator(obj):
    if isinstance(obj, (Identity, BidiagonalDifference, DenseOperator)):
        return obj
    return DenseOperator(obj)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def shrink(a, kappa):
    """Soft thresholding ``sign(a) * max(|a| - kappa, 0)``."""
    kappa = float(kappa)
    if not np.isfinite(kappa) or kappa < 0:
        raise ParameterError(f"shrinkage level must be finite and >= 0, got {kappa}")
    a = np.asarray(a, dtype=float)
    _tally(3 * a.size)
    return np.sign(a) * np.maximum(np.abs(a) - kappa, 0.0)


def rank_one_regularized_solve(a, v, sigma):
    """Solve ``(sigma I + a a^T) r = v`` with Sherman-Morrison in O(n)."""
    sigma = float(sigma)
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    a = np.asarray(a, dtype=float)
    v = np.asarray(v, dtype=float)
    if a.shape != v.shape:
        raise ParameterError(f"shape mismatch {a.shape} vs {v.shape}")
    _tally(14 * a.size)
    denom = sigma + a @ a
    r = (v - a * (a @ v) / denom) / sigma
    # one refinement sweep: the closed form loses digits when v is nearly
    # parallel to a and sigma << ||a||^2
    res = v - sigma * r - a * (a @ r)
    return r + (res - a * (a @ res) / denom) / sigma


def tridiagonal_solve(lower, diag, upper, rhs):
    """Thomas algorithm for a tridiagonal system without pivoting.

    ``lower`` and ``upper`` have length n-1.  Only safe for matrices where
    elimination without pivoting is stable (SPD or diagonally dominant),
    which covers every system built in this package.
    """
    diag = np.asarray(diag, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.size
    if rhs.shape != (n,):
        raise ParameterError(f"rhs has shape {rhs.shape}, expected ({n},)")
    _tally(8 * n)
    # elimination is sequential; python floats beat numpy scalar indexing here
    lo = np.asarray(lower, dtype=float).tolist()
    up = np.asarray(upper, dtype=float).tolist()
    dg = diag.tolist()
    rh = rhs.tolist()
    cp = [0.0] * max(n - 1, 0)
    dp = [0.0] * n
    beta = dg[0]
    dp[0] = rh[0] / beta
    for i in range(1, n):
        cp[i - 1] = up[i - 1] / beta
        beta = dg[i] - lo[i - 1] * cp[i - 1]
        dp[i] = (rh[i] - lo[i - 1] * dp[i - 1]) / beta
    for i in range(n - 2, -1, -1):
        dp[i] -= cp[i] * dp[i + 1]
    return np.array(dp)


def _dtd_bands(n, scale, shift):
    diag = np.full(n, 2.0 * scale + shift)
    diag[0] = scale + shift
    off = np.full(max(n - 1, 0), -scale)
    return off, diag, off


def shifted_dtd_solve(v, scale=1.0, shift=0.0):
    """Solve ``(scale * D^T D + shift * I) r = v`` for the difference matrix D.

    The system is SPD whenever scale > 0 and shift >= 0.  Without a shift the
    factorisation D^T D is already known, so two prefix sums do the job;
    otherwise the Thomas sweep runs on the explicit bands.  O(n) either way.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if not scale > 0 or shift < 0:
        raise ParameterError(f"need scale > 0 and shift >= 0, got {scale}, {shift}")
    if shift == 0.0:
        # D^T D r = v  <=>  D^T w = v, D r = w; both are prefix sums
        return d_solve(dt_solve(v)) / scale
    lower, diag, upper = _dtd_bands(n, scale, shift)
    return tridiagonal_solve(lower, diag, upper, v)


def dtd_solve(D, v):
    """Apply ``(D^T D)^{-1}`` to v without forming it."""
    n = D.n if isinstance(D, BidiagonalDifference) else int(D)
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ParameterError(f"vector has shape {v.shape}, expected ({n},)")
    return shifted_dtd_solve(v)


def d_solve(v):
    """Back substitution for ``D r = v``: r_i = sum_{j >= i} v_j."""
    v = np.asarray(v, dtype=float)
    _tally(v.size)
    return np.cumsum(v[::-1])[::-1].copy()


def dt_solve(v):
    """Forward substitution for ``D^T r = v``: r_i = sum_{j <= i} v_j."""
    v = np.asarray(v, dtype=float)
    _tally(v.size)
    return np.cumsum(v)


# ---------------------------------------------------------------------------
# spectral estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralInfo:
    lambda_max_BtB: float
    lambda_min_AAt: float = 0.0


def power_iteration(matvec, n, max_iters=1000, tol=1e-12, seed=0):
    """Largest eigenvalue of a symmetric PSD operator given by ``matvec``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = matvec(v)
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        resid = np.linalg.norm(w - lam_new * v)
        v = w / nw
        if resid <= tol * max(abs(lam_new), 1.0) and abs(lam_new - lam) <= tol * max(abs(lam_new), 1.0):
            lam = lam_new
            break
        lam = lam_new
    return lam


def _difference_extremes(n):
    """(lambda_min, lambda_max) of D^T D from its tridiagonal bands."""
    off, diag, _ = _dtd_bands(n, 1.0, 0.0)
    lo = scipy.linalg.eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, 0))[0]
    hi = scipy.linalg.eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(n - 1, n - 1))[0]
    return float(lo), float(hi)


def _lambda_min_AAt(A, seed):
    if isinstance(A, Identity):
        if A.scale == 0:
            raise StructureError("A is singular")
        return A.scale**2
    if isinstance(A, BidiagonalDifference):
        # D D^T and D^T D are similar for square D
        return _difference_extremes(A.n)[0]
    M = A.toarray()
    m, n = M.shape
    if m != n:
        raise StructureError(f"A must be square for lambda_min, got {M.shape}")
    if m <= 512:
        ev = np.linalg.eigvalsh(M @ M.T)
        if ev[0] <= 1e-12 * max(ev[-1], 1.0):
            raise StructureError("A is singular")
        return float(ev[0])
    s = scipy.linalg.svdvals(M)
    if s[-1] <= 1e-12 * max(s[0], 1.0):
        raise StructureError("A is singular")
    return float(s[-1] ** 2)


def estimate_spectral(A, B, want_min=False, seed=0):
    """Spectral constants of a constraint: lambda_max(B^T B), lambda_min(A A^T).

    Scaled identities and the difference matrix are handled exactly (the
    latter through its tridiagonal D^T D); anything else goes through power
    iteration on ``B^T B`` from a seeded random unit vector.
    ``lambda_min_AAt`` is only computed when
    ``want_min`` is set; a singular A raises :class:`StructureError`.
    """
    B = as_operator(B)
    nb = B.shape[1]
    if nb == 0:
        raise ParameterError("B is empty")
    if isinstance(B, Identity):
        lam_max = B.scale**2
    elif isinstance(B, BidiagonalDifference):
        # the top of the spectrum is tightly clustered, too slow for power iteration
        lam_max = _difference_extremes(B.n)[1]
    else:
        lam_max = power_iteration(lambda v: B.rmatvec(B.matvec(v)), nb, max_iters=2000, tol=1e-13, seed=seed)
    lam_min = 0.0
    if want_min:
        lam_min = _lambda_min_AAt(as_operator(A), seed)
    return SpectralInfo(lambda_max_BtB=float(lam_max), lambda_min_AAt=float(lam_min))
