"""Contextual bandits by reduction to online square-loss regression."""

from .environments import (
    BallEnvironment,
    LinearEnvironment,
    Noise,
    TabularEnvironment,
    make_finite_class_env,
    make_gap_family,
    make_misspecified_env,
)
from .glm import GLMtron, NewtonGLMtron, sigma_norm_projection
from .hilbert import hilbert_moments, hilbert_sample, run_squarecb_hilbert, tune_beta
from .oracles import (
    AggregatingOracle,
    EpochCoverOracle,
    OracleExample,
    OracleRegretBudget,
    ProjectedOGD,
    VAWForecaster,
)
from .reduction import (
    ExplorationParams,
    RegretLedger,
    inverse_gap_distribution,
    run_squarecb,
    tune_gamma_misspecified,
    tune_gamma_realizable,
)

__version__ = "0.1.0"
