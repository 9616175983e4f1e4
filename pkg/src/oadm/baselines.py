"""Online baselines: FOBOS, projected gradient and l1-RDA.

FOBOS takes a gradient step on f_t and then the prox of g.  With the
splitting x - z = 0 it coincides with linearised online ADM anchored at z_t
and rho = tau, which :func:`fobos_as_inexact_oadm_check` verifies round by
round.

For total variation the baselines work on the reformulated lasso in
v = D x: the row a_t becomes a_t D^{-1}, i.e. the vector D^{-T} a_t, which
is a cumulative sum, and x is recovered as D^{-1} v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CapabilityError, ParameterError
from .linalg import d_solve, dt_solve, shrink
from .problem import ConstraintSpec, LeastSquaresLoss, LossStream
from .steps import SolverState, admm_round

__all__ = [
    "FobosConfig",
    "RdaConfig",
    "fobos_step",
    "projected_gradient_step",
    "rda_step",
    "fobos_as_inexact_oadm_check",
    "projected_gradient_check",
    "BaselineRun",
    "run_fobos",
    "run_rda",
    "DifferenceReformulation",
]


@dataclass(frozen=True)
class FobosConfig:
    """Step scale tau_t; the gradient step is 1/tau_t.

    ``decay="sqrt"`` gives tau_t = tau sqrt(t), i.e. steps shrinking like
    1/sqrt(t); ``decay="none"`` keeps tau fixed.
    """

    tau: float = 1.0
    decay: str = "sqrt"

    def __post_init__(self):
        if not self.tau > 0 or not math.isfinite(self.tau):
            raise ParameterError(f"tau must be finite and > 0, got {self.tau}")
        if self.decay not in ("sqrt", "none"):
            raise ParameterError(f"unknown decay {self.decay!r}")

    def tau_of(self, t):
        return self.tau * math.sqrt(t) if self.decay == "sqrt" else self.tau


@dataclass(frozen=True)
class RdaConfig:
    gamma: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be > 0, got {self.gamma}")
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")


def fobos_step(z, f_t, g, tau):
    """z_{t+1} = prox_{g/tau}(z_t - f_t'(z_t) / tau)."""
    if not tau > 0:
        raise ParameterError(f"tau must be > 0, got {tau}")
    w = z - f_t.grad(z) / tau
    return g.prox(w, tau)


def projected_gradient_step(z, f_t, project, tau):
    """Gradient step of length 1/tau followed by Euclidean projection.

    ``project`` is a callable or any object with a ``project`` method
    (the box and ball indicators).
    """
    if not tau > 0:
        raise ParameterError(f"tau must be > 0, got {tau}")
    proj = project.project if hasattr(project, "project") else project
    return proj(z - f_t.grad(z) / tau)


def rda_step(avg_grad, t, cfg):
    """l1-RDA closed form with proximal strength gamma / sqrt(t).

    Minimises <g_bar, z> + lam ||z||_1 + (gamma / (2 sqrt t)) ||z||^2.
    """
    if t < 1:
        raise ParameterError(f"RDA needs t >= 1, got {t}")
    return -(math.sqrt(t) / cfg.gamma) * shrink(np.asarray(avg_grad, dtype=float), cfg.lam)


def fobos_as_inexact_oadm_check(stream, g, tau, T, n=None, cons=None):
    """Largest sup-norm gap between FOBOS and z-anchored linearised OADM.

    Both start from zero.  OADM runs with eta = rho = tau on x - z = 0 and
    keeps its own dual; the z iterates should agree up to rounding.
    """
    if cons is not None and not cons.is_identity_form:
        raise CapabilityError("FOBOS equivalence needs A = I, B = -I, c = 0")
    if cons is None:
        if n is None:
            n = stream.loss(1).n
        cons = ConstraintSpec.identity_form(n)
    z_fobos = np.zeros(cons.n2)
    state = SolverState.zeros(cons)
    gap = 0.0
    for t in range(1, T + 1):
        f_t = stream.loss(t)
        z_fobos = fobos_step(z_fobos, f_t, g, tau)
        state = admm_round(state, f_t, g, cons, tau, tau, linearized=True, anchor="z").state
        gap = max(gap, float(np.max(np.abs(z_fobos - state.z))))
    return gap


def projected_gradient_check(stream, region, tau, T, n=None):
    """Largest sup-norm gap between projected gradient and FOBOS with the indicator."""
    n = stream.loss(1).n if n is None else n
    a = np.zeros(n)
    b = np.zeros(n)
    gap = 0.0
    for t in range(1, T + 1):
        f_t = stream.loss(t)
        a = projected_gradient_step(a, f_t, region, tau)
        b = fobos_step(b, f_t, region, tau)
        gap = max(gap, float(np.max(np.abs(a - b))))
    return gap


class DifferenceReformulation(LossStream):
    """Least-squares stream rewritten in v = D x for the bidiagonal difference D."""

    def __init__(self, stream):
        self.stream = stream

    def loss(self, t):
        f = self.stream.loss(t)
        rows = np.vstack([dt_solve(r) for r in f.rows])
        return LeastSquaresLoss(rows, f.targets, f.weights, 0.0)

    @staticmethod
    def recover(v):
        return d_solve(v)


@dataclass
class BaselineRun:
    """Final iterate and optional per-round history of a baseline."""

    z: np.ndarray
    T: int
    played_losses: list = field(default_factory=list, repr=False)


def run_fobos(stream, g, cfg, T, n, callback=None):
    """FOBOS from zero.  ``callback(t, z_next, tau_t)`` after each step."""
    z = np.zeros(n)
    run = BaselineRun(z, T)
    for t in range(1, T + 1):
        f_t = stream.loss(t)
        run.played_losses.append(f_t.value(z) + g.value(z))
        tau = cfg.tau_of(t)
        z = fobos_step(z, f_t, g, tau)
        if callback is not None:
            callback(t, z, tau)
    run.z = z
    return run


def run_rda(stream, g, cfg, T, n, callback=None):
    """l1-RDA from zero with the running average of played gradients."""
    z = np.zeros(n)
    gbar = np.zeros(n)
    run = BaselineRun(z, T)
    for t in range(1, T + 1):
        f_t = stream.loss(t)
        run.played_losses.append(f_t.value(z) + g.value(z))
        gbar += (f_t.grad(z) - gbar) / t
        z = rda_step(gbar, t, cfg)
        if callback is not None:
            callback(t, z, cfg.gamma)
    run.z = z
    return run
