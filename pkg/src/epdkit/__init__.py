"""Robust divergence-based estimation and model selection."""

from .divergence import (
    DiscreteDensity,
    NonConvergenceError,
    TuningTriple,
    UnivariateGaussian,
    discrete_samplewise_contribution,
    exp_component_integral,
    gaussian_power_integral,
    generating_fn,
    samplewise_contribution,
    weight_fn,
)
from .regression import (
    EstimatorKind,
    FitOptions,
    FitResult,
    ParamVector,
    RegressionProblem,
    SandwichMatrices,
    empirical_objective,
    fit,
    sandwich,
)
from .criteria import (
    CriterionKind,
    CriterionReport,
    GridSpec,
    boundedness_scan,
    criterion,
    influence_value,
)
from .gsm import TuningGrid, default_grid, select_tuning
from .simulate import Scheme, SimConfig, generate, run_study
from .subsets import (
    CandidateModel,
    consolidate,
    enumerate_and_rank,
    lasso_screen,
)
from .panel import PanelData, PanelParams, fit_panel, gls_coefficients
from .network import (
    ArchitectureSpec,
    ClassificationData,
    NetworkParams,
    TrainOptions,
    architecture_grid,
    epd_loss,
    forward,
    select_architecture,
    train,
)

__version__ = "0.1.0"
