"""Solver runners and per-round metrics shared by the CLI and the scripts.

Each runner plays one solver over ``passes`` cyclic passes of an instance
and returns a :class:`SolverResult` holding one metrics row per recorded
round plus the final estimate.  Regret columns are filled in afterwards,
once the horizon comparator is known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import DifferenceReformulation, FobosConfig, RdaConfig, fobos_step, rda_step
from .batch import admm_step
from .exceptions import ConfigError, ParameterError
from .ledger import comparator, comparator_round_values
from .linalg import d_solve
from .online import OadmConfig, StepSchedule, run_online
from .problem import CyclicStream, DataGenConfig, GenLassoInstance, generate_lasso, generate_tv, objective
from .steps import SolverState

__all__ = [
    "NNZ_TOL",
    "METRIC_COLUMNS",
    "SolverSpec",
    "ExperimentConfig",
    "SolverResult",
    "make_instance",
    "run_solver",
    "attach_regret",
    "run_experiment",
    "split_instance",
    "heldout_objective",
    "tune_parameter",
    "loglog_slope",
]

NNZ_TOL = 1e-6
METRIC_COLUMNS = (
    "t", "solver", "objective", "nnz", "primal_residual", "dual_residual",
    "R1_running", "R2_running", "Rc_running", "eta_t", "rho_t",
)
SOLVERS = ("oadm", "admm", "fobos", "rda")
NAN = float("nan")


@dataclass(frozen=True)
class SolverSpec:
    """One solver and its knobs.

    oadm   eta_mode "constant" (eta_t = eta) or "linear" (eta_t = eta t), fixed rho;
           eta = 0 switches to the feasible-companion play
    admm   batch iterations, one per "round", penalty rho
    fobos  step scale tau, decay "sqrt" or "none"
    rda    gamma
    """

    name: str
    rho: float = 1.0
    eta: float = 0.0
    eta_mode: str = "constant"
    tau: float = 1.0
    tau_decay: str = "none"
    gamma: float = 1.0

    def __post_init__(self):
        if self.name not in SOLVERS:
            raise ConfigError(f"unknown solver {self.name!r} (expected one of {', '.join(SOLVERS)})")
        if self.eta_mode not in ("constant", "linear"):
            raise ConfigError(f"unknown eta mode {self.eta_mode!r}")
        if not self.rho > 0:
            raise ConfigError("rho must be > 0")
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")

    def schedule(self):
        if self.eta_mode == "linear":
            return StepSchedule.linear(self.eta, rho=self.rho)
        return StepSchedule.constant(self.eta, self.rho)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "lasso"
    datagen: DataGenConfig = field(default_factory=lambda: DataGenConfig(N=100, n=200, k=20))
    solvers: tuple = (SolverSpec("oadm"),)
    passes: int = 100
    q: float = 0.5
    lam: float = None
    loss_scale: float = 1.0
    every: int = 1

    def __post_init__(self):
        if self.problem not in ("lasso", "tv"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.passes < 1:
            raise ConfigError("passes must be >= 1")
        if self.every < 1:
            raise ConfigError("every must be >= 1")


@dataclass
class SolverResult:
    name: str
    rows: list
    x: np.ndarray
    z: np.ndarray
    estimate: np.ndarray
    played: np.ndarray = field(default=None, repr=False)
    played_hat: np.ndarray = field(default=None, repr=False)
    rc_increments: np.ndarray = field(default=None, repr=False)
    comparator: object = None

    @property
    def final(self):
        return self.rows[-1]


def make_instance(cfg):
    """Instance for an experiment config (q takes precedence unless lam is set)."""
    if cfg.problem == "lasso":
        inst = generate_lasso(cfg.datagen, q=cfg.q, lam=cfg.lam)
    else:
        lam = 0.001 if cfg.lam is None else cfg.lam
        inst = generate_tv(cfg.datagen, lam=lam)
    return inst.with_loss_scale(cfg.loss_scale)


def _nnz(v):
    return int(np.sum(np.abs(v) > NNZ_TOL))


def _row(t, name, objective, nnz, primal, dual, eta, rho):
    return {
        "t": t, "solver": name, "objective": objective, "nnz": nnz,
        "primal_residual": primal, "dual_residual": dual,
        "R1_running": NAN, "R2_running": NAN, "Rc_running": NAN,
        "eta_t": eta, "rho_t": rho,
    }


def _keep(t, T, every):
    return t % every == 0 or t == T


def _run_oadm(inst, spec, T, every):
    stream = CyclicStream(inst)
    g, cons = inst.regularizer(), inst.constraint()
    f = inst.batch_loss()
    companion = spec.eta == 0 and spec.eta_mode == "constant" and cons.A_invertible
    config = OadmConfig(spec.schedule(), scenario="feasible_companion" if companion else "regularized")
    rows = []

    def record(t, out):
        if _keep(t, T, every):
            rows.append(_row(t, spec.name, f.value(out.x_next) + g.value(out.z_next), _nnz(out.z_next),
                             out.residual.primal, out.residual.dual_surrogate, out.eta, out.rho))

    run = run_online(stream, g, cons, config, T, callback=record)
    cols = run.ledger.running()
    s = run.state
    estimate = cons.A.solve(s.z) if companion else s.x
    return SolverResult(
        spec.name, rows, s.x, s.z, estimate,
        played=cols["ft_xt"] + cols["g_zt"],
        played_hat=cols["ft_xhat"] + cols["g_zt"] if companion else None,
        rc_increments=cols["primal_sq"] + cols["dual_sq"],
    )


def _run_admm(inst, spec, T, every):
    f, g, cons = inst.batch_loss(), inst.regularizer(), inst.constraint()
    state = SolverState.zeros(cons)
    rows = []
    for t in range(1, T + 1):
        state, rec = admm_step(state, f, g, cons, spec.rho)
        if _keep(t, T, every):
            rows.append(_row(t, spec.name, rec.objective, _nnz(state.z), rec.primal, rec.dual_surrogate,
                             0.0, spec.rho))
    return SolverResult(spec.name, rows, state.x, state.z, state.x)


def _baseline_setup(inst):
    """Stream, regularizer and x-recovery for the single-variable baselines."""
    stream = CyclicStream(inst)
    if inst.kind == "tv":
        return DifferenceReformulation(stream), inst.regularizer(), d_solve
    return stream, inst.regularizer(), lambda v: v


def _run_first_order(inst, spec, T, every):
    stream, g, recover = _baseline_setup(inst)
    f = inst.batch_loss()
    n = inst.n
    v = np.zeros(n)
    gbar = np.zeros(n)
    fob = FobosConfig(spec.tau, spec.tau_decay) if spec.name == "fobos" else None
    rda = RdaConfig(spec.gamma, inst.lam) if spec.name == "rda" else None
    rows = []
    played = np.empty(T)
    for t in range(1, T + 1):
        f_t = stream.loss(t)
        played[t - 1] = f_t.value(v) + g.value(v)
        if fob is not None:
            tau = fob.tau_of(t)
            v_next = fobos_step(v, f_t, g, tau)
            eta = rho = tau
        else:
            gbar += (f_t.grad(v) - gbar) / t
            v_next = rda_step(gbar, t, rda)
            eta, rho = spec.gamma * math.sqrt(t), NAN
        if _keep(t, T, every):
            x = recover(v_next)
            rows.append(_row(t, spec.name, f.value(x) + g.value(v_next), _nnz(v_next), 0.0,
                             float(np.linalg.norm(v_next - v)), eta, rho))
        v = v_next
    x = recover(v)
    return SolverResult(spec.name, rows, x, v, x, played=played)


_RUNNERS = {"oadm": _run_oadm, "admm": _run_admm, "fobos": _run_first_order, "rda": _run_first_order}


def run_solver(inst, spec, passes, every=1):
    """Play ``passes`` cyclic passes (T = passes N rounds) of one solver."""
    if passes < 1:
        raise ParameterError("passes must be >= 1")
    with np.errstate(over="ignore", invalid="ignore"):
        return _RUNNERS[spec.name](inst, spec, passes * inst.N, every)


def attach_regret(result, inst, comp=None):
    """Fill the running regret columns from the horizon comparator.

    Batch ADM is not an online method and keeps NaN regret columns.
    """
    if result.played is None:
        return result
    T = result.played.size
    stream = CyclicStream(inst)
    g, cons = inst.regularizer(), inst.constraint()
    if comp is None:
        comp = comparator(stream, g, cons, T)
    star = comparator_round_values(stream, g, comp, T)
    r1 = np.cumsum(result.played - star)
    r2 = np.cumsum(result.played_hat - star) if result.played_hat is not None else None
    rc = np.cumsum(result.rc_increments) if result.rc_increments is not None else None
    for row in result.rows:
        i = row["t"] - 1
        row["R1_running"] = float(r1[i])
        if r2 is not None:
            row["R2_running"] = float(r2[i])
        if rc is not None:
            row["Rc_running"] = float(rc[i])
    result.comparator = comp
    return result


def run_experiment(cfg, inst=None, regret=True):
    """Run every configured solver on one instance; returns (inst, results)."""
    inst = make_instance(cfg) if inst is None else inst
    results = []
    comp = None
    for spec in cfg.solvers:
        res = run_solver(inst, spec, cfg.passes, cfg.every)
        if regret and res.played is not None:
            if comp is None:
                comp = comparator(CyclicStream(inst), inst.regularizer(), inst.constraint(), res.played.size)
            attach_regret(res, inst, comp)
        results.append(res)
    return inst, results


# ---------------------------------------------------------------------------
# held-out tuning
# ---------------------------------------------------------------------------


def split_instance(inst, frac=0.8, seed=0):
    """Random row split into (train, heldout) instances sharing lam and x0."""
    if not 0 < frac < 1:
        raise ParameterError("frac must be in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(inst.N)
    cut = max(1, min(inst.N - 1, int(round(frac * inst.N))))
    tr, ho = np.sort(perm[:cut]), np.sort(perm[cut:])

    def sub(idx):
        return GenLassoInstance(inst.A_data[idx], inst.b[idx], inst.kind, inst.lam, inst.seed, inst.x0, inst.q,
                                inst.loss_scale)

    return sub(tr), sub(ho)


def heldout_objective(heldout, x):
    """Held-out objective; non-finite estimates score +inf."""
    if not np.all(np.isfinite(x)):
        return math.inf
    with np.errstate(over="ignore", invalid="ignore"):
        val = objective(heldout, x)
    return val if math.isfinite(val) else math.inf


def tune_parameter(inst, spec, passes, grid=(0.01, 0.1, 1.0, 10.0, 100.0), frac=0.8, seed=0):
    """Pick the step parameter (rho for oadm/admm, tau for fobos, gamma for rda)
    minimising the held-out objective.  Returns ``(best_value, [(value, score), ...])``.
    """
    key = {"oadm": "rho", "admm": "rho", "fobos": "tau", "rda": "gamma"}[spec.name]
    train, heldout = split_instance(inst, frac, seed)
    scores = []
    for v in grid:
        res = run_solver(train, replace(spec, **{key: float(v)}), passes, every=max(1, passes * train.N))
        scores.append((float(v), heldout_objective(heldout, res.estimate)))
    best = min(scores, key=lambda p: (p[1], p[0]))[0]
    return best, scores


def loglog_slope(t, values):
    """Least-squares slope of log(values) against log(t) over positive entries."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = (t > 0) & (v > 0) & np.isfinite(v)
    if ok.sum() < 2:
        return NAN
    return float(np.polyfit(np.log(t[ok]), np.log(v[ok]), 1)[0])
