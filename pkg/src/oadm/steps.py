"""The three ADM updates shared by the batch and online solvers.

Batch ADM is the online iteration with a fixed loss and no proximal anchor,
so both solvers call the same functions here; that is what makes the
``eta = 0`` online run reproduce batch iterates bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import CapabilityError, ParameterError, StructureError
from .linalg import (
    BidiagonalDifference,
    DenseOperator,
    Identity,
    rank_one_regularized_solve,
    shifted_dtd_solve,
)
from .problem import LeastSquaresLoss, ZeroRegularizer


@dataclass
class SolverState:
    """Primal pair (x, z), unscaled dual y and the round counter."""

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, cons):
        return cls(np.zeros(cons.n1), np.zeros(cons.n2), np.zeros(cons.m), 0)

    def u(self, rho):
        """Scaled dual y / rho."""
        return self.y / rho

    def copy(self):
        return SolverState(self.x.copy(), self.z.copy(), self.y.copy(), self.t)


@dataclass(frozen=True)
class ResidualRecord:
    """Per-step residuals.

    primal          ||A x+ + B z+ - c||
    dual_surrogate  ||B z+ - B z||
    dual            rho ||A^T B (z+ - z)||, the stopping-rule dual residual
    objective       f(x+) + g(z+) for the loss used in the step
    """

    primal: float
    dual_surrogate: float
    dual: float = 0.0
    objective: float = float("nan")


@dataclass
class StepCounts:
    x_solves: int = 0
    z_proxes: int = 0
    dual_updates: int = 0


@dataclass
class StepResult:
    state: SolverState
    record: ResidualRecord
    counts: StepCounts = field(default=None, repr=False)


def _check_rho(rho):
    if not rho > 0:
        raise ParameterError(f"rho must be > 0, got {rho}")


def _dense(op):
    return op.toarray() if not isinstance(op, DenseOperator) else op.M


def x_update(f, cons, state, rho, eta=0.0):
    """Exact minimiser over x of

        f(x) + <y, Ax + Bz - c> + (rho/2)||Ax + Bz - c||^2 + (eta/2)||x - x_t||^2.
    """
    _check_rho(rho)
    if eta < 0:
        raise ParameterError(f"eta must be >= 0, got {eta}")
    A = cons.A
    rhs = -A.rmatvec(state.y + rho * (cons.B.matvec(state.z) - cons.c))
    if eta:
        rhs = rhs + eta * state.x

    if isinstance(f, LeastSquaresLoss) and f.rank_one and isinstance(A, (Identity, BidiagonalDifference)):
        w = f.weights[0]
        a = np.sqrt(2.0 * w) * f.rows[0]
        rhs = rhs + 2.0 * w * f.targets[0] * f.rows[0]
        shift = eta + f.ridge
        if isinstance(A, Identity):
            sigma = rho * A.scale**2 + shift
            return rank_one_regularized_solve(a, rhs, sigma)
        # (rho D^T D + shift I + a a^T)^{-1} by Sherman-Morrison on the
        # tridiagonal part
        r = shifted_dtd_solve(rhs, rho, shift)
        q = shifted_dtd_solve(a, rho, shift)
        return r - q * ((a @ r) / (1.0 + a @ q))

    quad = f.quadratic()
    if quad is not None:
        P, q = quad
        key = (id(A), float(rho), float(eta))
        factor = f._factors.get(key) if hasattr(f, "_factors") else None
        if factor is None:
            Ad = _dense(A)
            H = P + rho * (Ad.T @ Ad)
            if eta:
                H[np.diag_indices_from(H)] += eta
            try:
                factor = scipy.linalg.cho_factor(H)
            except np.linalg.LinAlgError as exc:
                raise StructureError("x-subproblem is not strictly convex") from exc
            if hasattr(f, "_factors"):
                f._factors[key] = factor
        return scipy.linalg.cho_solve(factor, q + rhs)

    if f.prox is not None and isinstance(A, Identity):
        # f(x) + (rho k^2/2)||x - v||^2 + (eta/2)||x - x_t||^2 with v = rhs part
        s = rho * A.scale**2 + eta
        return f.prox(rhs / s, s)

    raise CapabilityError(f"no closed form or prox for the x-subproblem of {f!r}")


def x_update_linearized(f, cons, state, rho, eta, anchor="x"):
    """Linearised x-step with a quadratic anchor of weight eta.

    ``anchor="x"`` linearises f and the augmented term at x_t.  ``anchor="z"``
    linearises at z_t instead, which needs the splitting x - z = 0.
    """
    if not eta > 0:
        raise ParameterError("linearised update needs eta > 0")
    if anchor == "x":
        p = state.x
    elif anchor == "z":
        if not cons.is_identity_form:
            raise CapabilityError("anchoring at z needs A = I, B = -I, c = 0")
        p = state.z
    else:
        raise ParameterError(f"unknown anchor {anchor!r}")
    A = cons.A
    r = A.matvec(p) + cons.B.matvec(state.z) - cons.c
    return p - (f.grad(p) + A.rmatvec(state.y + rho * r)) / eta


def z_update(g, cons, x, y, rho):
    """Exact minimiser over z of g(z) + <y, Ax + Bz - c> + (rho/2)||Ax + Bz - c||^2."""
    _check_rho(rho)
    B = cons.B
    w = cons.A.matvec(x) - cons.c + y / rho
    if isinstance(B, Identity):
        if B.scale == 0:
            raise StructureError("B is zero")
        return g.prox(-w / B.scale, rho * B.scale**2)
    if isinstance(g, ZeroRegularizer):
        Bd = _dense(B)
        return np.linalg.lstsq(Bd, -w, rcond=None)[0]
    raise CapabilityError("z-step needs B to be a scaled identity (or g = 0)")


def admm_round(state, f, g, cons, rho, eta=0.0, linearized=False, anchor="x", counts=None):
    """One pass of x-update, z-update and dual ascent.  Returns a StepResult."""
    if linearized:
        x = x_update_linearized(f, cons, state, rho, eta, anchor)
    else:
        x = x_update(f, cons, state, rho, eta)
    z = z_update(g, cons, x, state.y, rho)
    Bz_new = cons.B.matvec(z)
    Bz_old = cons.B.matvec(state.z)
    r = cons.A.matvec(x) + Bz_new - cons.c
    y = state.y + rho * r
    if counts is not None:
        counts.x_solves += 1
        counts.z_proxes += 1
        counts.dual_updates += 1
    dBz = Bz_new - Bz_old
    record = ResidualRecord(
        primal=float(np.linalg.norm(r)),
        dual_surrogate=float(np.linalg.norm(dBz)),
        dual=float(rho * np.linalg.norm(cons.A.rmatvec(dBz))),
        objective=float(f.value(x) + g.value(z)),
    )
    return StepResult(SolverState(x, z, y, state.t + 1), record, counts)
