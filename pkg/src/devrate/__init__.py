"""Nadaraya-Watson and semi-recursive kernel regression: estimators, deviation rate functions and Monte Carlo checks."""

from .errors import (
    ConfigurationError,
    DevrateError,
    DivergenceError,
    IndeterminateRateError,
    InputError,
    InsufficientDataError,
    NumericError,
)
from .kernels import Kernel, SignedIndicatorKernel, certify, kernel_from_spec, make_builtin, support_measures, verify_order
from .models import JointModel, build_model, sample
from .schedules import BandwidthSchedule, SpeedSequence, check_speed, hn, regvar_sum
from .estimators import EvalPoint, RecursiveState, bias_probe, eval_nw, eval_semirec, new_recursive, update_recursive
from .ratefn import (
    CumulantContext,
    QuadSettings,
    RateResult,
    RegressionRate,
    check_condition_c,
    conjugate,
    eval_lambda_n,
    eval_psi,
    eval_psi_grad,
    mdp_rate,
    origin_rate,
    phi_limit,
    regression_rate,
)
from .devlab import (
    DeviationCurve,
    ExperimentConfig,
    run_concentration_ratio,
    run_ldp_curve,
    run_linearized_error,
    run_mdp_variance,
)

__version__ = "0.1.0"
