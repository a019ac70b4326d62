"""Self-tuning instrumental variables estimation and finite-sample inference
for high-dimensional linear models with endogenous regressors.

The package provides the pivotal STIV estimator and its non-pivotal and
two-stage variants, data-driven sensitivity bounds on the scaled design,
finite-sample confidence intervals and thresholded variable selection,
detection of non-valid instruments, and a seeded simulation harness.
"""

__version__ = "0.1.0"

from .conic import (
    ConicProgram,
    LinearProgram,
    SecondOrderCone,
    SolveResult,
    Tolerances,
    solve_lp,
    solve_socp,
)
from .estimators import (
    SqrtLassoFit,
    StivConfig,
    StivFit,
    TwoStageConfig,
    TwoStageFit,
    default_sigma_weight,
    projection_instruments,
    sqrt_lasso,
    stiv_fit,
    stiv_nonpivotal,
    stiv_two_stage,
)
from .inference import (
    CiSpec,
    ConfidenceReport,
    approx_sparse_bound,
    confidence_intervals,
    slack_factor,
    support_estimate,
    threshold_select,
    thresholds,
)
from .model import (
    Dataset,
    RateConfig,
    RateResult,
    ScaledDesign,
    load_dataset,
    rate_r,
    scale_design,
)
from .nonvalid import (
    NvConfig,
    NvFit,
    moment_decomposition,
    nv_bhat_from_stiv,
    nv_bound_l1,
    nv_bound_v,
    nv_fit,
    nv_select_auto,
    nv_threshold_select,
)
from .sensitivity import (
    ConeSpec,
    SensitivityReport,
    SensitivitySet,
    coherence_bound,
    kappa_block,
    kappa_block_cert,
    kappa_coord,
    kappa_coord_cert,
    kappa_lp_norm_bounds,
    sensitivity_set,
)
from .sim import (
    DgpParams,
    McConfig,
    McSummary,
    generate_dgp,
    monte_carlo,
    nv_planted_params,
    preset_study,
    run_nv_replication,
    run_replication,
)
