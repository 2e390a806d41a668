"""Index policies for exponential-family bandits, Finite-Horizon Gittins
indices, regret lower bounds and a reproducible Monte Carlo harness."""
from __future__ import annotations

from .exp_family import (
    ArmDistribution,
    BanditInstance,
    DomainError,
    ExpFamilyModel,
    Family,
    bernoulli,
    exponential,
    gaussian,
    poisson,
)
from .harness import ExperimentConfig, Mode, RunResult, run_experiment
from .policies import Policy, PolicyConfig, PolicyKind
from .posterior import BetaPrior, GammaPrior, GaussianPrior, GridDensity, InverseGammaPrior, Posterior

__version__ = "0.1.0"

__all__ = [
    "ArmDistribution",
    "BanditInstance",
    "DomainError",
    "ExpFamilyModel",
    "Family",
    "bernoulli",
    "exponential",
    "gaussian",
    "poisson",
    "ExperimentConfig",
    "Mode",
    "RunResult",
    "run_experiment",
    "Policy",
    "PolicyConfig",
    "PolicyKind",
    "BetaPrior",
    "GammaPrior",
    "GaussianPrior",
    "GridDensity",
    "InverseGammaPrior",
    "Posterior",
]
