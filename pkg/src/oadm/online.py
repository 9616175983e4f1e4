"""Online ADM: one pass of the three updates per revealed loss.

Rounds are numbered t = 1, 2, ..., T.  Before round t the learner holds
(x_t, z_t, y_t), starting from zeros; it plays (x_t, z_t) (or the feasible
companion (xhat_t, z_t) when eta = 0), the loss f_t is revealed, and one
update with (eta_t, rho_t) produces round t+1's state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CapabilityError, ConfigError, ParameterError
from .ledger import RegretLedger
from .steps import SolverState, StepCounts, admm_round

__all__ = [
    "StepSchedule",
    "OadmConfig",
    "RoundOutput",
    "OnlineRun",
    "oadm_step_exact",
    "oadm_step_linearized",
    "feasible_companion",
    "run_online",
]


@dataclass(frozen=True)
class StepSchedule:
    """Affine-in-t step parameters: ``eta_t = eta0 + eta_slope t`` and the
    same for rho.  ``regime`` tags schedules built by the bound-specific factories
    so certificates can refuse mismatched runs.
    """

    kind: str = "constant"
    eta0: float = 0.0
    eta_slope: float = 0.0
    rho0: float = 1.0
    rho_slope: float = 0.0
    regime: str = None
    horizon: int = None

    def __post_init__(self):
        if self.kind not in ("constant", "sqrt_horizon", "linear_t"):
            raise ParameterError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "sqrt_horizon" and not self.horizon:
            raise ParameterError("sqrt_horizon schedules need the horizon T in advance")
        if min(self.eta0, self.eta_slope, self.rho0, self.rho_slope) < 0:
            raise ParameterError("schedule coefficients must be non-negative")
        if not self.rho0 + self.rho_slope > 0:
            raise ParameterError("rho_t must be > 0 for every t >= 1")

    def eta_of(self, t):
        return self.eta0 + self.eta_slope * t

    def rho_of(self, t):
        return self.rho0 + self.rho_slope * t

    @classmethod
    def constant(cls, eta, rho):
        return cls("constant", eta0=eta, rho0=rho)

    @classmethod
    def linear(cls, eta_slope, rho=1.0, rho_slope=0.0, eta0=0.0):
        return cls("linear_t", eta0=eta0, eta_slope=eta_slope, rho0=rho, rho_slope=rho_slope)

    @classmethod
    def horizon_tuned(cls, G_f, D_x, T, alpha=1.0):
        """eta = G_f sqrt(T) / (D_x sqrt(2 alpha)), rho = sqrt(T)."""
        eta = G_f * math.sqrt(T) / (D_x * math.sqrt(2.0 * alpha))
        return cls("sqrt_horizon", eta0=eta, rho0=math.sqrt(T), regime="convex", horizon=T)

    @classmethod
    def strongly_convex(cls, beta1, beta2, lambda_max_B):
        """eta_t = beta1 t, rho_t = beta2 t / lambda_max(B^T B)."""
        return cls("linear_t", eta_slope=beta1, rho0=0.0, rho_slope=beta2 / lambda_max_B, regime="strong")

    @classmethod
    def companion_horizon_tuned(cls, G_f, D_z, lambda_min_A, lambda_max_B, T):
        """eta = 0, rho = G_f sqrt(T) / (D_z sqrt(lambda_min_A lambda_max_B))."""
        rho = G_f * math.sqrt(T) / (D_z * math.sqrt(lambda_min_A * lambda_max_B))
        return cls("sqrt_horizon", rho0=rho, regime="companion", horizon=T)

    @classmethod
    def companion_strongly_convex(cls, beta2, lambda_max_B):
        """eta = 0, rho_t = beta2 t / lambda_max(B^T B)."""
        return cls("linear_t", rho0=0.0, rho_slope=beta2 / lambda_max_B, regime="companion_strong")


@dataclass(frozen=True)
class OadmConfig:
    schedule: StepSchedule
    scenario: str = "regularized"
    exact_x_update: bool = True
    assumptions: object = None
    anchor: str = "x"

    def __post_init__(self):
        if self.scenario not in ("regularized", "feasible_companion"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        s = self.schedule
        if self.scenario == "feasible_companion" and (s.eta0 or s.eta_slope):
            raise ConfigError("the feasible-companion scenario runs with eta = 0")
        if not self.exact_x_update and not s.eta0 + s.eta_slope > 0:
            raise ConfigError("the linearised x-update needs eta > 0")


@dataclass
class RoundOutput:
    x_next: np.ndarray
    z_next: np.ndarray
    y_next: np.ndarray
    x_hat: np.ndarray
    residual: object
    eta: float = 0.0
    rho: float = 1.0

    @property
    def state(self):
        return SolverState(self.x_next, self.z_next, self.y_next)


def _output(res, cons, eta, rho, companion):
    x_hat = feasible_companion(res.state.z, cons) if companion else None
    s = res.state
    return RoundOutput(s.x, s.z, s.y, x_hat, res.record, eta, rho)


def oadm_step_exact(state, f_t, g, cons, eta, rho, companion=False, counts=None):
    """x from the exact proximal subproblem, then the z-prox and dual step."""
    res = admm_round(state, f_t, g, cons, rho, eta, counts=counts)
    return _output(res, cons, eta, rho, companion)


def oadm_step_linearized(state, f_t, g, cons, eta, rho, anchor="x", counts=None):
    """x from one gradient step on the linearised augmented Lagrangian."""
    if not eta > 0:
        raise ParameterError("linearised OADM needs eta > 0")
    res = admm_round(state, f_t, g, cons, rho, eta, linearized=True, anchor=anchor, counts=counts)
    return _output(res, cons, eta, rho, False)


def feasible_companion(z, cons):
    """xhat with A xhat + B z = c; A must be square and invertible."""
    if not cons.A_invertible:
        raise CapabilityError("feasible companion needs a square invertible A")
    return cons.A.solve(cons.c - cons.B.matvec(z))


@dataclass
class OnlineRun:
    ledger: RegretLedger
    state: SolverState
    counts: StepCounts
    config: OadmConfig
    T: int
    outputs: list = field(default_factory=list, repr=False)


def run_online(stream, g, cons, config, T, callback=None, keep_outputs=False):
    """Play T rounds.  ``callback(t, output)`` is called after each update."""
    if T < 1:
        raise ParameterError("need T >= 1")
    companion = config.scenario == "feasible_companion"
    if companion and not cons.A_invertible:
        raise CapabilityError("feasible companion needs a square invertible A")
    sched = config.schedule
    state = SolverState.zeros(cons)
    x_hat = feasible_companion(state.z, cons) if companion else None
    ledger = RegretLedger()
    counts = StepCounts()
    run = OnlineRun(ledger, state, counts, config, T)
    g_z = g.value(state.z)
    for t in range(1, T + 1):
        f_t = stream.loss(t)
        ft_xt = f_t.value(state.x)
        ft_xhat = f_t.value(x_hat) if companion else float("nan")
        played = x_hat if companion else state.x
        ledger.note_gradient(np.linalg.norm(f_t.grad(played)))
        eta, rho = sched.eta_of(t), sched.rho_of(t)
        if config.exact_x_update:
            out = oadm_step_exact(state, f_t, g, cons, eta, rho, companion, counts)
        else:
            out = oadm_step_linearized(state, f_t, g, cons, eta, rho, config.anchor, counts)
        rec = out.residual
        g_next = g.value(out.z_next)
        ledger.record_round(
            t,
            ft_xt=ft_xt,
            g_zt=g_z,
            post=rec.objective,
            primal_sq=rec.primal**2,
            dual_sq=rec.dual_surrogate**2,
            ft_xhat=ft_xhat,
        )
        state = SolverState(out.x_next, out.z_next, out.y_next, t)
        g_z = g_next
        x_hat = out.x_hat
        if keep_outputs:
            run.outputs.append(out)
        if callback is not None:
            callback(t, out)
    run.state = state
    return run
