"""Gaussian-process Bayesian optimization and ramp-schedule campaigns."""

from .campaign import (
    FIXED_TIME,
    FULL,
    PROTOCOLS,
    TAIL_ONLY,
    VARIABLE_TIME,
    CampaignResult,
    CampaignSpec,
    ResumeMismatchError,
    SimulatorObjective,
    build_layout,
    campaign_digest,
    read_log,
    run_campaign,
)
from .gp import GaussianProcess, HyperparameterError, se_kernel
from .optimizer import (
    CampaignState,
    Observation,
    OptimizerSettings,
    boundary_saturation,
    expected_improvement,
    latin_hypercube,
    maximize,
    propose,
    update,
)

__all__ = [
    "FIXED_TIME",
    "FULL",
    "PROTOCOLS",
    "TAIL_ONLY",
    "VARIABLE_TIME",
    "CampaignResult",
    "CampaignSpec",
    "CampaignState",
    "GaussianProcess",
    "HyperparameterError",
    "Observation",
    "OptimizerSettings",
    "ResumeMismatchError",
    "SimulatorObjective",
    "boundary_saturation",
    "build_layout",
    "campaign_digest",
    "expected_improvement",
    "latin_hypercube",
    "maximize",
    "propose",
    "read_log",
    "run_campaign",
    "se_kernel",
    "update",
]
