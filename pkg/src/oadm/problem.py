"""Problem model: losses, regularizers, the coupling constraint and the
generalized-lasso instances used in the experiments.

The composite problem is

    min  sum_t f_t(x) + g(z)   s.t.  A x + B z = c

with f_t revealed one round at a time.  Least-squares losses carry their rows
explicitly so the x-update can pick a structured closed form.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, ParameterError, StructureError
from .linalg import (
    BidiagonalDifference,
    Identity,
    SpectralInfo,
    as_operator,
    estimate_spectral,
    shrink,
)

# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


class LossTerm:
    """A convex loss f_t.  Subclasses provide ``value`` and ``grad``.

    The x-update needs more than a subgradient oracle: either a quadratic
    description (``quadratic()``) or a ``prox`` usable when A is the identity.
    """

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def quadratic(self):
        """Return (P, q) with f(x) = x^T P x / 2 - q^T x + const, or None."""
        return None

    prox = None

    def __call__(self, x):
        return self.value(x)


class LeastSquaresLoss(LossTerm):
    """``sum_i w_i (r_i . x - b_i)^2 + (ridge / 2) ||x||^2``.

    A single row with unit weight is the per-example term of the generalized
    lasso.  Several rows with weights 1/N give the batch average.  ``ridge``
    is the strong-convexity modulus added on top.
    """

    def __init__(self, rows, targets, weights=1.0, ridge=0.0):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        if rows.shape[0] != targets.shape[0]:
            raise ParameterError(f"{rows.shape[0]} rows but {targets.shape[0]} targets")
        w = np.broadcast_to(np.asarray(weights, dtype=float), targets.shape).copy()
        if np.any(w < 0) or ridge < 0:
            raise ParameterError("weights and ridge must be non-negative")
        self.rows = rows
        self.targets = targets
        self.weights = w
        self.ridge = float(ridge)
        self._quad = None
        self._factors = {}

    @property
    def n(self):
        return self.rows.shape[1]

    @property
    def rank_one(self):
        return self.rows.shape[0] == 1

    def residual(self, x):
        return self.rows @ x - self.targets

    def value(self, x):
        r = self.residual(x)
        out = float(self.weights @ (r * r))
        if self.ridge:
            out += 0.5 * self.ridge * float(x @ x)
        return out

    def grad(self, x):
        r = self.residual(x)
        g = 2.0 * (self.rows.T @ (self.weights * r))
        if self.ridge:
            g = g + self.ridge * x
        return g

    def quadratic(self):
        if self._quad is None:
            Rw = self.rows * self.weights[:, None]
            P = 2.0 * (self.rows.T @ Rw)
            if self.ridge:
                P[np.diag_indices_from(P)] += self.ridge
            q = 2.0 * (Rw.T @ self.targets)
            self._quad = (P, q)
        return self._quad

    def scaled(self, s):
        return LeastSquaresLoss(self.rows, self.targets, self.weights * s, self.ridge * s)

    def with_ridge(self, beta1):
        return LeastSquaresLoss(self.rows, self.targets, self.weights, self.ridge + beta1)

    def __repr__(self):
        return f"LeastSquaresLoss(rows={self.rows.shape[0]}, n={self.n}, ridge={self.ridge})"


def sum_losses(losses):
    """Stack least-squares terms into one loss equal to their sum."""
    losses = list(losses)
    if not losses:
        raise ParameterError("empty loss list")
    if not all(isinstance(f, LeastSquaresLoss) for f in losses):
        raise ParameterError("only least-squares terms can be aggregated")
    rows = np.vstack([f.rows for f in losses])
    targets = np.concatenate([f.targets for f in losses])
    weights = np.concatenate([f.weights for f in losses])
    ridge = sum(f.ridge for f in losses)
    return LeastSquaresLoss(rows, targets, weights, ridge)


# ---------------------------------------------------------------------------
# regularizers
# ---------------------------------------------------------------------------


class Regularizer:
    """g(z) with a prox ``argmin_z g(z) + (scale/2) ||z - v||^2``.

    ``beta2`` is the strong-convexity modulus (0 unless declared).
    """

    beta2 = 0.0

    def value(self, z):
        raise NotImplementedError

    def prox(self, v, scale):
        raise NotImplementedError

    def scaled(self, s):
        raise NotImplementedError

    def __call__(self, z):
        return self.value(z)


class ZeroRegularizer(Regularizer):
    def value(self, z):
        return 0.0

    def prox(self, v, scale):
        return np.array(v, dtype=float, copy=True)

    def scaled(self, s):
        return self

    def __repr__(self):
        return "ZeroRegularizer()"


class L1Norm(Regularizer):
    def __init__(self, lam):
        if lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {lam}")
        self.lam = float(lam)

    def value(self, z):
        return self.lam * float(np.abs(z).sum())

    def prox(self, v, scale):
        return shrink(v, self.lam / scale)

    def scaled(self, s):
        return L1Norm(self.lam * s)

    def __repr__(self):
        return f"L1Norm({self.lam!r})"


class BoxIndicator(Regularizer):
    """Indicator of ``[lo, hi]^n``; must contain the origin so g(0) = 0."""

    def __init__(self, lo=-1.0, hi=1.0):
        if not lo <= 0 <= hi:
            raise ParameterError("box must contain the origin")
        self.lo = lo
        self.hi = hi

    def value(self, z):
        inside = np.all(z >= self.lo - 1e-12) and np.all(z <= self.hi + 1e-12)
        return 0.0 if inside else math.inf

    def project(self, v):
        return np.clip(v, self.lo, self.hi)

    def prox(self, v, scale):
        return self.project(v)

    def scaled(self, s):
        return self

    def __repr__(self):
        return f"BoxIndicator({self.lo!r}, {self.hi!r})"


class BallIndicator(Regularizer):
    """Indicator of the centred Euclidean ball of the given radius."""

    def __init__(self, radius=1.0):
        if radius < 0:
            raise ParameterError("radius must be >= 0")
        self.radius = float(radius)

    def value(self, z):
        return 0.0 if np.linalg.norm(z) <= self.radius * (1 + 1e-12) else math.inf

    def project(self, v):
        nv = np.linalg.norm(v)
        if nv <= self.radius:
            return np.array(v, dtype=float, copy=True)
        return v * (self.radius / nv)

    def prox(self, v, scale):
        return self.project(v)

    def scaled(self, s):
        return self

    def __repr__(self):
        return f"BallIndicator({self.radius!r})"


class StronglyConvex(Regularizer):
    """``base(z) + (beta2 / 2) ||z||^2``."""

    def __init__(self, base, beta2):
        if beta2 < 0:
            raise ParameterError("beta2 must be >= 0")
        self.base = base
        self.extra = float(beta2)

    @property
    def beta2(self):
        return self.base.beta2 + self.extra

    def value(self, z):
        return self.base.value(z) + 0.5 * self.extra * float(z @ z)

    def prox(self, v, scale):
        s = scale + self.extra
        return self.base.prox(v * (scale / s), s)

    def scaled(self, s):
        return StronglyConvex(self.base.scaled(s), self.extra * s)

    def __repr__(self):
        return f"StronglyConvex({self.base!r}, {self.extra!r})"


# ---------------------------------------------------------------------------
# constraint and assumptions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintSpec:
    """Coupling ``A x + B z = c`` with cached spectral constants."""

    A: object
    B: object
    c: np.ndarray
    spectral: SpectralInfo = None

    def __post_init__(self):
        A = as_operator(self.A)
        B = as_operator(self.B)
        c = np.asarray(self.c, dtype=float)
        if A.shape[0] != B.shape[0] or c.shape != (A.shape[0],):
            raise ParameterError(f"inconsistent shapes A{A.shape} B{B.shape} c{c.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)
        if self.spectral is None:
            want_min = A.shape[0] == A.shape[1] and getattr(A, "invertible", False)
            object.__setattr__(self, "spectral", estimate_spectral(A, B, want_min=want_min))

    @classmethod
    def identity_form(cls, n):
        """x - z = 0 (A = I, B = -I, c = 0): the lasso splitting."""
        return cls(Identity(n), Identity(n, -1.0), np.zeros(n),
                   SpectralInfo(lambda_max_BtB=1.0, lambda_min_AAt=1.0))

    @classmethod
    def difference_form(cls, n):
        """D x - z = 0: the total-variation splitting."""
        D = BidiagonalDifference(n)
        return cls(D, Identity(n, -1.0), np.zeros(n),
                   estimate_spectral(D, Identity(n, -1.0), want_min=True))

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n1(self):
        return self.A.shape[1]

    @property
    def n2(self):
        return self.B.shape[1]

    @property
    def is_identity_form(self):
        return (isinstance(self.A, Identity) and self.A.scale == 1.0
                and isinstance(self.B, Identity) and self.B.scale == -1.0
                and not np.any(self.c))

    @property
    def A_invertible(self):
        return self.A.shape[0] == self.A.shape[1] and self.A.invertible

    def residual(self, x, z):
        return self.A.matvec(x) + self.B.matvec(z) - self.c

    def is_feasible(self, x, z, tol=1e-6):
        return float(np.linalg.norm(self.residual(x, z))) <= tol * (1.0 + float(np.linalg.norm(self.c)))


@dataclass(frozen=True)
class AssumptionBundle:
    """Constants appearing in the regret bounds (all upper bounds).

    ``D_x`` is defined through the quadratic Bregman term, ``D_x^2 =
    ||x*||^2 / 2``; ``D_z = ||z*||``; ``D_y = ||y*||``.
    """

    G_f: float
    D_x: float
    D_z: float
    D_y: float = 0.0
    alpha: float = 1.0
    beta1: float = 0.0
    beta2: float = 0.0
    F_bound: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError("alpha must be > 0")
        vals = (self.G_f, self.D_x, self.D_z, self.D_y, self.beta1, self.beta2, self.F_bound)
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ParameterError("assumption constants must be finite and non-negative")


# ---------------------------------------------------------------------------
# generalized lasso instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DataGenConfig:
    N: int
    n: int
    k: int = 10
    segments: int = 3
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.n < 1:
            raise ConfigError(f"need N >= 1 and n >= 1, got N={self.N} n={self.n}")
        if self.k > self.n or self.k < 0:
            raise ConfigError(f"nonzero count k={self.k} must lie in [0, n={self.n}]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")


@dataclass(frozen=True, eq=False)
class GenLassoInstance:
    """``(s/N) sum_t (a_t x - b_t)^2 + lam ||D x||_1`` with D = I or difference.

    ``loss_scale`` s is 1 by default; s = 1/2 gives the half-squared-error
    per example used by the closed-form online updates.  It is a modelling
    choice, not data, so instance files do not carry it.
    """

    A_data: np.ndarray
    b: np.ndarray
    kind: str
    lam: float
    seed: int = 0
    x0: np.ndarray = None
    q: float = None
    loss_scale: float = 1.0

    def __post_init__(self):
        if not self.loss_scale > 0:
            raise ParameterError("loss_scale must be > 0")
        if self.kind not in ("lasso", "tv"):
            raise ConfigError(f"unknown instance kind {self.kind!r}")
        if self.A_data.shape[0] != self.b.shape[0]:
            raise ParameterError("A_data and b disagree on N")
        if self.lam < 0:
            raise ParameterError("lambda must be >= 0")

    @property
    def N(self):
        return self.A_data.shape[0]

    @property
    def n(self):
        return self.A_data.shape[1]

    @property
    def D(self):
        return Identity(self.n) if self.kind == "lasso" else BidiagonalDifference(self.n)

    def constraint(self):
        if self.kind == "lasso":
            return ConstraintSpec.identity_form(self.n)
        return ConstraintSpec.difference_form(self.n)

    def batch_loss(self):
        return LeastSquaresLoss(self.A_data, self.b, self.loss_scale / self.N)

    def with_loss_scale(self, s):
        return replace(self, loss_scale=float(s))

    def regularizer(self):
        return L1Norm(self.lam)

    @property
    def x_true(self):
        """Coefficients generating the noiseless targets (x0 / N)."""
        return None if self.x0 is None else self.x0 / self.N

    def relative_mse(self, x):
        ref = self.x_true
        return float(np.sum((x - ref) ** 2) / np.sum(ref**2))


def lambda_from_q(A_data, b, q):
    N = A_data.shape[0]
    return float(q * np.max(np.abs(A_data.T @ b / N)))


def _design(rng, N, n):
    A = rng.standard_normal((N, n))
    A /= np.linalg.norm(A, axis=0)
    return A


def generate_lasso(cfg, q=0.5, lam=None):
    """Random lasso instance: unit-norm columns, k-sparse x0, b = A x0 / N + noise."""
    rng = np.random.default_rng(cfg.seed)
    A = _design(rng, cfg.N, cfg.n)
    x0 = np.zeros(cfg.n)
    support = rng.choice(cfg.n, size=cfg.k, replace=False)
    x0[support] = rng.standard_normal(cfg.k)
    b = A @ x0 / cfg.N + cfg.noise_sigma * rng.standard_normal(cfg.N)
    if lam is None:
        lam = lambda_from_q(A, b, q)
    else:
        q = None
    return GenLassoInstance(A, b, "lasso", float(lam), cfg.seed, x0, q)


def piecewise_constant(rng, n, segments):
    if segments < 1:
        raise ConfigError("need at least one segment")
    if segments > n:
        raise ConfigError(f"{segments} segments do not fit in n={n}")
    cuts = np.sort(rng.choice(np.arange(1, n), size=segments - 1, replace=False))
    levels = rng.standard_normal(segments)
    # consecutive levels must differ or a jump silently disappears
    for i in range(1, segments):
        while levels[i] == levels[i - 1]:
            levels[i] = rng.standard_normal()
    bounds = np.concatenate([[0], cuts, [n]])
    x0 = np.empty(n)
    for i in range(segments):
        x0[bounds[i]:bounds[i + 1]] = levels[i]
    return x0


def generate_tv(cfg, q=None, lam=0.001):
    """Random TV instance: x0 piecewise constant with ``cfg.segments`` pieces."""
    rng = np.random.default_rng(cfg.seed)
    A = _design(rng, cfg.N, cfg.n)
    x0 = piecewise_constant(rng, cfg.n, cfg.segments)
    b = A @ x0 / cfg.N + cfg.noise_sigma * rng.standard_normal(cfg.N)
    if q is not None:
        lam = lambda_from_q(A, b, q)
    return GenLassoInstance(A, b, "tv", float(lam), cfg.seed, x0, q)


def jump_count(x, tol=0.0):
    """Nonzeros of D x excluding the last row (which is x[-1] itself)."""
    return int(np.sum(np.abs(np.diff(x)) > tol))


def objective(inst, x):
    r = inst.A_data @ x - inst.b
    return inst.loss_scale * float(r @ r) / inst.N + inst.lam * float(np.abs(inst.D.matvec(x)).sum())


def cyclic_loss(inst, t):
    """Least-squares term for example ``t mod N`` (rounds wrap around)."""
    if t < 0:
        raise ParameterError("round index must be >= 0")
    i = t % inst.N
    return LeastSquaresLoss(inst.A_data[i:i + 1], inst.b[i:i + 1], inst.loss_scale)


def estimate_gradient_bound(inst, radius, ridge=0.0):
    """Bound on ||f_t'(x)|| over ||x|| <= radius for the per-example terms.

    ``||2 s a (a.x - b) + ridge x|| <= 2 s ||a|| (||a|| R + |b|) + ridge R``.
    """
    norms = np.linalg.norm(inst.A_data, axis=1)
    return float(np.max(2.0 * inst.loss_scale * norms * (norms * radius + np.abs(inst.b))) + ridge * radius)


# ---------------------------------------------------------------------------
# loss streams
# ---------------------------------------------------------------------------


class LossStream:
    """Sequence of loss terms; round t (1-based) reveals ``loss(t)``."""

    def loss(self, t):
        raise NotImplementedError

    def aggregate(self, T):
        """Single loss equal to ``sum_{t=1..T} loss(t)``."""
        return sum_losses(self.loss(t) for t in range(1, T + 1))


class ListStream(LossStream):
    def __init__(self, losses):
        self.losses = list(losses)

    def loss(self, t):
        return self.losses[(t - 1) % len(self.losses)]


@dataclass
class CyclicStream(LossStream):
    """Goes through the examples of an instance in order, wrapping around.

    Round t uses example ``(t - 1) mod N``.  ``ridge`` adds (beta1/2)||x||^2
    to every term.
    """

    inst: GenLassoInstance
    ridge: float = 0.0

    def loss(self, t):
        f = cyclic_loss(self.inst, t - 1)
        if self.ridge:
            f = f.with_ridge(self.ridge)
        return f

    def counts(self, T):
        N = self.inst.N
        return np.full(N, T // N) + (np.arange(N) < T % N)

    def aggregate(self, T):
        weights = self.inst.loss_scale * self.counts(T).astype(float)
        return LeastSquaresLoss(self.inst.A_data, self.inst.b, weights, self.ridge * T)


# ---------------------------------------------------------------------------
# instance files
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def _row(values):
    return ",".join(_FMT % v for v in values)


def dumps_instance(inst):
    buf = io.StringIO()
    buf.write(f"genlasso v1 {inst.N} {inst.n} {inst.kind} {_FMT % inst.lam} {inst.seed}\n")
    for row in inst.A_data:
        buf.write(_row(row) + "\n")
    buf.write(_row(inst.b) + "\n")
    x0 = inst.x0 if inst.x0 is not None else np.zeros(inst.n)
    buf.write(_row(x0) + "\n")
    return buf.getvalue()


def loads_instance(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise StructureError("empty instance file")
    head = lines[0].split()
    if len(head) != 7 or head[0] != "genlasso" or head[1] != "v1":
        raise StructureError(f"bad instance header: {lines[0]!r}")
    N, n, kind, lam, seed = int(head[2]), int(head[3]), head[4], float(head[5]), int(head[6])
    if len(lines) != N + 3:
        raise StructureError(f"expected {N + 3} lines, found {len(lines)}")

    def parse(line, width):
        vals = np.array([float(v) for v in line.split(",")])
        if vals.size != width:
            raise StructureError(f"row has {vals.size} values, expected {width}")
        return vals

    A = np.vstack([parse(lines[1 + i], n) for i in range(N)])
    b = parse(lines[N + 1], N)
    x0 = parse(lines[N + 2], n)
    return GenLassoInstance(A, b, kind, lam, seed, x0)


def save_instance(inst, path):
    Path(path).write_text(dumps_instance(inst))


def load_instance(path):
    return loads_instance(Path(path).read_text())
