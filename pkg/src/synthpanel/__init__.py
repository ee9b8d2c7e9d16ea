"""Synthetic control and synthetic difference-in-differences for annual panels."""

__version__ = "0.1.0"

from .errors import DataError, EstimationError, SynthPanelError, ValidationError
from .panel import (
    OUTCOME_GROWTH,
    OUTCOME_LEVEL,
    DiagnosticsReport,
    PanelDataset,
    build_panel,
    diagnose,
    exclude_units,
    growth_transform,
)
from .scm import (
    PredictorSpec,
    PredictorWeights,
    ScmFit,
    ScmOptions,
    average_effect,
    build_predictor_matrix,
    scm_fit,
    select_predictor_weights,
    solve_weights_fixed_v,
)
from .sdid import (
    SdidFit,
    did_estimate,
    regularization_zeta,
    sdid_estimate,
    sdid_tau_direct,
    solve_time_weights,
    solve_unit_weights,
)
from .inference import (
    EffectEstimate,
    PlaceboDistribution,
    effect_estimate,
    jackknife_se,
    mspe_ratio_test,
    placebo_se,
)
from .simplex import WeightVector, minimize_simplex_qp, project_to_simplex
from .simulate import DgpConfig, generate_panel, hull_violation_panel, run_replications
