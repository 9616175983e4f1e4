"""Batch ADM: iteration, stopping rule, and the bound certificates.

The certificates evaluate, on a finished trajectory, the two cumulative
bounds for objective gap and residuals, and the variational-inequality gap
of the averaged iterate against its O(1/T) bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError
from .steps import ResidualRecord, SolverState, admm_round

__all__ = [
    "StopCriteria",
    "BatchTrajectory",
    "admm_step",
    "run_batch",
    "solve_high_accuracy",
    "cumulative_bound_certificate",
    "VIGapReport",
    "vi_gap",
]


def admm_step(state, f, g, cons, rho):
    """One batch iteration; returns ``(new_state, ResidualRecord)``."""
    res = admm_round(state, f, g, cons, rho)
    return res.state, res.record


@dataclass(frozen=True)
class StopCriteria:
    eps_abs: float = 1e-4
    eps_rel: float = 1e-3
    max_iters: int = 1000

    def thresholds(self, cons, state):
        """(eps_pri, eps_dual) at the given iterate."""
        Ax = cons.A.matvec(state.x)
        Bz = cons.B.matvec(state.z)
        eps_pri = math.sqrt(cons.m) * self.eps_abs + self.eps_rel * max(
            np.linalg.norm(Ax), np.linalg.norm(Bz), np.linalg.norm(cons.c)
        )
        eps_dual = math.sqrt(cons.n1) * self.eps_abs + self.eps_rel * np.linalg.norm(cons.A.rmatvec(state.y))
        return float(eps_pri), float(eps_dual)


@dataclass
class BatchTrajectory:
    """States w_0 .. w_T (w_0 the start) and one record per step."""

    states: list = field(default_factory=list)
    records: list = field(default_factory=list)
    converged: bool = False
    rho: float = 1.0

    @property
    def iterations(self):
        return len(self.records)

    @property
    def final(self):
        return self.states[-1]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,objective,primal_residual,dual_residual\n")
            for i, r in enumerate(self.records, start=1):
                fh.write(f"{i},{r.objective:.17g},{r.primal:.17g},{r.dual:.17g}\n")


def run_batch(f, g, cons, rho, stop=StopCriteria(), start=None, keep_states=True):
    """Iterate until both residuals pass the Boyd-style tolerances or max_iters."""
    if stop.max_iters < 1:
        raise ParameterError("max_iters must be >= 1")
    state = start.copy() if start is not None else SolverState.zeros(cons)
    traj = BatchTrajectory(states=[state], rho=rho)
    for _ in range(stop.max_iters):
        state, rec = admm_step(state, f, g, cons, rho)
        traj.records.append(rec)
        if keep_states:
            traj.states.append(state)
        else:
            traj.states[-1:] = [state]
        eps_pri, eps_dual = stop.thresholds(cons, state)
        if rec.primal <= eps_pri and rec.dual <= eps_dual:
            traj.converged = True
            break
    return traj


def solve_high_accuracy(f, g, cons, rho=1.0, iters=100_000, tol=1e-12):
    """Long batch run for comparators; returns the final SolverState.

    Stops early once both residuals are below ``tol`` (relative to the
    iterate scale) for the objective values to have settled.
    """
    stop = StopCriteria(eps_abs=tol, eps_rel=tol, max_iters=iters)
    traj = run_batch(f, g, cons, rho, stop, keep_states=False)
    return traj.final, traj.converged


def cumulative_bound_certificate(traj, f, g, cons, x_star, z_star, y_star, rho, lambda_max_B=None):
    """Cumulative objective-gap and residual sums with their constant bounds.

    Returns ``(lhs6, rhs6, lhs7, rhs7)``:

      lhs6 = sum_t [f(x_{t+1}) + g(z_{t+1}) - f(x*) - g(z*)]
      rhs6 = lambda_max(B^T B) ||z*||^2 rho / 2
      lhs7 = sum_t ||A x_{t+1} + B z_{t+1} - c||^2 + ||B z_{t+1} - B z_t||^2
      rhs7 = lambda_max(B^T B) ||z*||^2 + ||y*||^2 / rho^2

    Needs the full state list (``keep_states=True``) starting at zero.
    """
    if not cons.is_feasible(x_star, z_star):
        raise ParameterError("comparator (x*, z*) violates A x + B z = c")
    lam = cons.spectral.lambda_max_BtB if lambda_max_B is None else lambda_max_B
    D_z2 = float(z_star @ z_star)
    D_y2 = float(y_star @ y_star)
    h_star = f.value(x_star) + g.value(z_star)
    lhs6 = 0.0
    lhs7 = 0.0
    for rec in traj.records:
        lhs6 += rec.objective - h_star
        lhs7 += rec.primal**2 + rec.dual_surrogate**2
    rhs6 = lam * D_z2 * rho / 2.0
    rhs7 = lam * D_z2 + D_y2 / rho**2
    return lhs6, rhs6, lhs7, rhs7


@dataclass
class VIGapReport:
    """Averaged iterate over rounds 1..T plus gap/bound evaluators."""

    x_bar: np.ndarray
    z_bar: np.ndarray
    y_bar: np.ndarray
    T: int
    rho: float
    f: object = field(repr=False)
    g: object = field(repr=False)
    cons: object = field(repr=False)

    @property
    def w_bar(self):
        return self.x_bar, self.z_bar, self.y_bar

    def F(self, x, z, y):
        cons = self.cons
        return (cons.A.rmatvec(y), cons.B.rmatvec(y), -cons.residual(x, z))

    def gap_at(self, w):
        """h(w_bar) - h(w) + (w_bar - w)^T F(w_bar)."""
        x, z, y = w
        xb, zb, yb = self.w_bar
        Fx, Fz, Fy = self.F(xb, zb, yb)
        h = (self.f.value(xb) - self.f.value(x)) + (self.g.value(zb) - self.g.value(z))
        return float(h + (xb - x) @ Fx + (zb - z) @ Fz + (yb - y) @ Fy)

    def bound_L(self, w):
        """(rho/2)||A x - c||^2 + ||y||^2 / (2 rho) at the probe."""
        x, _, y = w
        r = self.cons.A.matvec(x) - self.cons.c
        return float(0.5 * self.rho * (r @ r) + (y @ y) / (2.0 * self.rho))

    def bound(self, w):
        return self.bound_L(w) / self.T


def vi_gap(traj, f, g, cons, rho, T=None):
    """Average w_1..w_T of a trajectory (w_0 excluded) for the VI-gap check."""
    T = traj.iterations if T is None else T
    if T < 1:
        raise ParameterError("need T >= 1")
    if len(traj.states) < T + 1:
        raise ParameterError("trajectory does not hold T states (run with keep_states=True)")
    xs = np.mean([s.x for s in traj.states[1:T + 1]], axis=0)
    zs = np.mean([s.z for s in traj.states[1:T + 1]], axis=0)
    ys = np.mean([s.y for s in traj.states[1:T + 1]], axis=0)
    return VIGapReport(xs, zs, ys, T, rho, f, g, cons)
