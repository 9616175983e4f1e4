"""Online alternating direction method with regret accounting."""

from .batch import StopCriteria, admm_step, run_batch, cumulative_bound_certificate, vi_gap
from .exceptions import CapabilityError, ConfigError, ParameterError, StructureError, UsageError
from .ledger import BoundCertificate, RegretLedger, attach_comparator, certify, certify_all, comparator
from .linalg import (
    BidiagonalDifference,
    Identity,
    SpectralInfo,
    d_solve,
    dtd_solve,
    estimate_spectral,
    rank_one_regularized_solve,
    shrink,
)
from .online import OadmConfig, StepSchedule, feasible_companion, oadm_step_exact, oadm_step_linearized, run_online
from .problem import (
    AssumptionBundle,
    ConstraintSpec,
    CyclicStream,
    DataGenConfig,
    GenLassoInstance,
    L1Norm,
    LeastSquaresLoss,
    StronglyConvex,
    cyclic_loss,
    generate_lasso,
    generate_tv,
    objective,
)
from .steps import SolverState

__version__ = "0.1.0"
