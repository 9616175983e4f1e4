"""Regret bookkeeping for online runs and the closed-form bound checks.

Per round the ledger stores the played losses f_t(x_t), g(z_t), the
companion loss f_t(xhat_t), the post-update value f_t(x_{t+1}) + g(z_{t+1})
and the two squared residuals.  Regret needs the best fixed feasible point
in hindsight, which is computed once per horizon by :func:`comparator`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .batch import solve_high_accuracy
from .exceptions import ParameterError, UsageError
from .linalg import BidiagonalDifference, Identity
from .oracle import MAX_N, genlasso_enumeration
from .problem import L1Norm, LeastSquaresLoss, StronglyConvex

__all__ = [
    "RoundRecord",
    "RegretLedger",
    "Comparator",
    "BoundCertificate",
    "comparator",
    "certify",
    "certify_all",
]

CERT_RTOL = 1e-9


@dataclass(frozen=True)
class RoundRecord:
    t: int
    ft_xt: float
    g_zt: float
    post: float
    primal_sq: float
    dual_sq: float
    ft_xhat: float = float("nan")


@dataclass
class Comparator:
    x: np.ndarray
    z: np.ndarray
    value: float
    approximate: bool = False
    method: str = "batch"


class RegretLedger:
    """Append-only per-round record with O(1) running sums."""

    def __init__(self):
        self.records = []
        self.loss_sum = 0.0
        self.companion_sum = 0.0
        self.rc_sum = 0.0
        self.primal_sum = 0.0
        self.max_grad = 0.0
        self._grads = []
        self.comparator = None
        self.star = None

    @property
    def T(self):
        return len(self.records)

    def record_round(self, t, ft_xt, g_zt, post, primal_sq, dual_sq, ft_xhat=float("nan")):
        if self.records and t <= self.records[-1].t:
            raise UsageError(f"round {t} recorded after round {self.records[-1].t}")
        rec = RoundRecord(t, float(ft_xt), float(g_zt), float(post), float(primal_sq), float(dual_sq), float(ft_xhat))
        self.records.append(rec)
        self.loss_sum += rec.ft_xt + rec.g_zt
        self.companion_sum += rec.ft_xhat + rec.g_zt
        self.rc_sum += rec.primal_sq + rec.dual_sq
        self.primal_sum += rec.primal_sq
        return self

    def prefix(self, T):
        """New ledger holding rounds 1..T (no comparator attached).

        Valid for horizon-free schedules, where a shorter run is exactly the
        prefix of a longer one.
        """
        if not 0 <= T <= self.T:
            raise ParameterError(f"prefix length {T} outside 0..{self.T}")
        out = RegretLedger()
        for r in self.records[:T]:
            out.record_round(r.t, r.ft_xt, r.g_zt, r.post, r.primal_sq, r.dual_sq, r.ft_xhat)
        out.max_grad = self.max_grad if T == self.T else max(self._grads[:T], default=0.0)
        return out

    def note_gradient(self, norm):
        self._grads.append(float(norm))
        self.max_grad = max(self.max_grad, float(norm))

    def set_comparator(self, comp, star_values):
        star_values = np.asarray(star_values, dtype=float)
        if star_values.shape != (self.T,):
            raise ParameterError(f"need {self.T} per-round comparator values, got {star_values.shape}")
        self.comparator = comp
        self.star = star_values

    def _require_comparator(self):
        if self.comparator is None:
            raise UsageError("comparator not set")

    @property
    def R1(self):
        if self.T == 0:
            return 0.0
        self._require_comparator()
        return self.loss_sum - self.comparator.value

    @property
    def R2(self):
        if self.T == 0:
            return 0.0
        self._require_comparator()
        return self.companion_sum - self.comparator.value

    @property
    def Rc(self):
        """Cumulative squared primal residual plus squared dual surrogate."""
        return self.rc_sum

    @property
    def Rc_primal(self):
        """Cumulative squared primal residual alone."""
        return self.primal_sum

    @property
    def F_empirical(self):
        """Largest per-round deficit f_t(x*) + g(z*) - f_t(x_{t+1}) - g(z_{t+1}), floored at 0."""
        if self.T == 0:
            return 0.0
        self._require_comparator()
        post = np.array([r.post for r in self.records])
        return float(max(0.0, np.max(self.star - post)))

    def running(self):
        """Dict of per-round arrays including the running regrets."""
        cols = {
            "t": np.array([r.t for r in self.records], dtype=int),
            "ft_xt": np.array([r.ft_xt for r in self.records]),
            "g_zt": np.array([r.g_zt for r in self.records]),
            "ft_xhat": np.array([r.ft_xhat for r in self.records]),
            "primal_sq": np.array([r.primal_sq for r in self.records]),
            "dual_sq": np.array([r.dual_sq for r in self.records]),
        }
        star = self.star if self.star is not None else np.full(self.T, np.nan)
        cols["R1_running"] = np.cumsum(cols["ft_xt"] + cols["g_zt"] - star)
        cols["R2_running"] = np.cumsum(cols["ft_xhat"] + cols["g_zt"] - star)
        cols["Rc_running"] = np.cumsum(cols["primal_sq"] + cols["dual_sq"])
        return cols

    def to_csv(self, path):
        cols = self.running()
        names = ["t", "ft_xt", "g_zt", "ft_xhat", "primal_sq", "dual_sq", "R1_running", "R2_running", "Rc_running"]
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for i in range(self.T):
                vals = [str(cols["t"][i])] + ["%.17g" % cols[k][i] for k in names[1:]]
                fh.write(",".join(vals) + "\n")


# ---------------------------------------------------------------------------
# comparator
# ---------------------------------------------------------------------------


def _genlasso_parts(g, cons):
    """(lam, beta, D) when g is l1 (+ ridge) on z = D x; otherwise None."""
    if not (isinstance(cons.B, Identity) and cons.B.scale == -1.0 and not np.any(cons.c)):
        return None
    A = cons.A
    if not (isinstance(A, BidiagonalDifference) or (isinstance(A, Identity) and A.scale == 1.0)):
        return None
    beta = 0.0
    base = g
    if isinstance(g, StronglyConvex):
        beta, base = g.extra, g.base
    if not isinstance(base, L1Norm):
        return None
    return base.lam, beta, A


def _with_z_ridge(loss, beta, A):
    """Fold (beta/2)||A x||^2 into a least-squares loss for the x-space solve."""
    if not beta:
        return loss
    if isinstance(A, Identity):
        return LeastSquaresLoss(loss.rows, loss.targets, loss.weights, loss.ridge + beta)
    rows = np.vstack([loss.rows, A.toarray()])
    targets = np.concatenate([loss.targets, np.zeros(A.n)])
    weights = np.concatenate([loss.weights, np.full(A.n, beta / 2.0)])
    return LeastSquaresLoss(rows, targets, weights, loss.ridge)


def _polish(loss, lam, A, x):
    """Re-solve on the sign pattern of z = A x and check optimality.

    Returns ``(x, exact)``; ``exact`` is True when the re-solved point passes
    the l1 optimality conditions, in which case it replaces x.
    """
    P, q = loss.quadratic()
    Ainv = np.linalg.inv(A.toarray())
    Pv = Ainv.T @ P @ Ainv
    qv = Ainv.T @ q
    v = A.matvec(x)
    S = np.flatnonzero(v)
    s = np.sign(v[S])
    cand_v = np.zeros_like(v)
    if S.size:
        try:
            cand_v[S] = np.linalg.solve(Pv[np.ix_(S, S)], qv[S] - lam * s)
        except np.linalg.LinAlgError:
            return x, False
        if np.any(np.sign(cand_v[S]) != s):
            return x, False
    grad = Pv @ cand_v - qv
    off = np.ones(v.size, dtype=bool)
    off[S] = False
    if np.any(np.abs(grad[off]) > lam * (1 + 1e-9) + 1e-12):
        return x, False
    return A.solve(cand_v), True


def _auto_rho(loss, cons):
    quad = loss.quadratic()
    if quad is None:
        return 1.0
    scale = np.trace(quad[0]) / cons.n1
    return float(scale) if scale > 0 else 1.0


def comparator(stream, g, cons, T, rho=None, iters=100_000, enumerate_max_n=12):
    """Best fixed feasible (x*, z*) for ``sum_{t<=T} f_t(x) + g(z)`` in hindsight.

    Exact sign enumeration when the problem is a generalized lasso with
    n <= ``enumerate_max_n``; otherwise a long batch ADM run on the averaged
    objective, polished on the detected support.  The returned pair is made
    exactly feasible by solving for x (invertible A) or z (B = k I).
    ``rho=None`` picks the penalty from the average curvature of the loss.
    """
    if T < 1:
        raise ParameterError("need T >= 1")
    loss = stream.aggregate(T)
    parts = _genlasso_parts(g, cons)
    if parts is not None and cons.n1 <= min(enumerate_max_n, MAX_N):
        lam, beta, A = parts
        D = None if isinstance(A, Identity) else A
        x, _ = genlasso_enumeration(_with_z_ridge(loss, beta * T, A), lam * T, D)
        z = A.matvec(x)
        value = loss.value(x) + T * g.value(z)
        return Comparator(x, z, float(value), False, "enumeration")

    avg = loss.scaled(1.0 / T)
    if rho is None:
        rho = _auto_rho(avg, cons)
    state, converged = solve_high_accuracy(avg, g, cons, rho=rho, iters=iters)
    x, z = state.x, state.z
    if parts is not None:
        lam, beta, A = parts
        x, exact = _polish(_with_z_ridge(avg, beta, A), lam, A, A.solve(z))
        z = A.matvec(x)
        converged = converged or exact
    elif cons.A_invertible:
        x = cons.A.solve(cons.c - cons.B.matvec(z))
    elif isinstance(cons.B, Identity):
        z = cons.B.solve(cons.c - cons.A.matvec(x))
    value = loss.value(x) + T * g.value(z)
    return Comparator(x, z, float(value), not converged, "batch")


def comparator_round_values(stream, g, comp, T):
    gz = g.value(comp.z)
    return np.array([stream.loss(t).value(comp.x) + gz for t in range(1, T + 1)])


def attach_comparator(run, stream, g, cons, **kw):
    """Compute the horizon comparator for a finished run and load the ledger."""
    comp = comparator(stream, g, cons, run.T, **kw)
    run.ledger.set_comparator(comp, comparator_round_values(stream, g, comp, run.T))
    return comp


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundCertificate:
    regime: str
    quantity: str
    lhs: float
    rhs: float
    satisfied: bool
    margin: float
    marginal: bool = False
    details: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_values(cls, regime, quantity, lhs, rhs, **details):
        tol = CERT_RTOL * max(1.0, abs(rhs))
        margin = rhs - lhs
        return cls(regime, quantity, float(lhs), float(rhs), bool(lhs <= rhs + tol), float(margin),
                   bool(abs(margin) <= tol), details)

    def line(self):
        status = "PASS" if self.satisfied else "FAIL"
        return f"{status} {self.regime} {self.quantity}: lhs={self.lhs:.6g} rhs={self.rhs:.6g}"


_QUANTITIES = {"convex": ("R1", "Rc"), "strong": ("R1", "Rc"), "companion": ("R2", "Rc"), "companion_strong": ("R2", "Rc")}


def bound_rhs(regime, quantity, T, a, lam_B, lam_A=0.0, F=0.0):
    """Closed-form right-hand sides of the online regret bounds."""
    G, Dx, Dz, al, b1, b2 = a.G_f, a.D_x, a.D_z, a.alpha, a.beta1, a.beta2
    sT = math.sqrt(T)
    logT = math.log(T + 1)
    if regime == "convex":
        if quantity == "R1":
            return lam_B * Dz**2 * sT / 2 + math.sqrt(2) * G * Dx * sT / math.sqrt(al)
        return lam_B * Dz**2 + math.sqrt(2) * Dx * G / math.sqrt(al) + 2 * F * sT
    if regime == "strong":
        if quantity == "R1":
            return G**2 * logT / (2 * al * b1) + b2 * Dz**2 / 2 + b1 * Dx**2
        return 2 * F * lam_B * logT / b2 + lam_B * Dz**2 + 2 * b1 * lam_B * Dx**2 / b2
    if regime == "companion":
        if quantity == "R2":
            return G * Dz * math.sqrt(lam_B * T / lam_A)
        return lam_B * Dz**2 + 2 * F * Dz * math.sqrt(lam_A * lam_B * T) / G
    if regime == "companion_strong":
        if quantity == "R2":
            return G**2 * lam_B * logT / (2 * lam_A * b2) + b2 * Dz**2
        return lam_B * Dz**2 + 2 * F * lam_B * logT / b2
    raise ParameterError(f"unknown bound regime {regime!r}")


def certify(ledger, regime, assumptions, schedule, spectral, quantity=None):
    """Compare a ledger sum against the matching closed-form regret bound.

    ``quantity`` defaults to the objective regret of the regime (R1 or R2);
    pass ``"Rc"`` for the constraint-violation bound.  F defaults to the
    ledger's empirical per-round deficit unless the bundle pins one.
    """
    if regime not in _QUANTITIES:
        raise ParameterError(f"unknown bound regime {regime!r}")
    quantity = quantity or _QUANTITIES[regime][0]
    if quantity not in _QUANTITIES[regime]:
        raise ParameterError(f"{regime} bounds {_QUANTITIES[regime]}, not {quantity}")
    T = ledger.T
    if T == 0:
        return BoundCertificate.from_values(regime, quantity, 0.0, 0.0)
    if schedule.regime != regime:
        raise UsageError(f"run used schedule {schedule.regime!r}, cannot certify {regime}")
    if schedule.horizon is not None and schedule.horizon != T:
        raise UsageError(f"schedule horizon {schedule.horizon} != recorded rounds {T}")
    F = assumptions.F_bound if assumptions.F_bound else ledger.F_empirical
    lhs = {"R1": lambda: ledger.R1, "R2": lambda: ledger.R2, "Rc": lambda: ledger.Rc}[quantity]()
    rhs = bound_rhs(regime, quantity, T, assumptions, spectral.lambda_max_BtB, spectral.lambda_min_AAt, F)
    details = {"T": T, "F": F, "max_grad": ledger.max_grad, "G_f": assumptions.G_f}
    if ledger.comparator is not None:
        details["comparator_approximate"] = ledger.comparator.approximate
    return BoundCertificate.from_values(regime, quantity, lhs, rhs, **details)


def certify_all(ledger, regime, assumptions, schedule, spectral):
    return [certify(ledger, regime, assumptions, schedule, spectral, q) for q in _QUANTITIES[regime]]
