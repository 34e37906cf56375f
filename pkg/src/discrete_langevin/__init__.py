"""Discrete Langevin proposals for sampling discrete energy-based models."""

from .core import (
    DiscreteDomain,
    DomainKind,
    EnergyModel,
    InvalidEnergyError,
    StateSpaceTooLarge,
    enumerate_states,
    make_rng,
    spawn_rngs,
    state_table,
)
from .dlp import DlpConfig, Proposal, binary_flip_probs, build_proposal, sample_proposal
from .models import (
    IsingLatticeModel,
    LogQuadraticModel,
    NoisyGradientModel,
    Perturbed1DModel,
    RbmModel,
    random_rbm,
)
from .samplers import (
    DMALA,
    DULA,
    LB1,
    GradFlip1,
    Gibbs1,
    RbmBlockGibbs,
    Trace,
    make_sampler,
    run_chain,
)

__version__ = "0.1.0"

__all__ = [
    "DiscreteDomain", "DomainKind", "EnergyModel", "InvalidEnergyError", "StateSpaceTooLarge",
    "enumerate_states", "make_rng", "spawn_rngs", "state_table",
    "DlpConfig", "Proposal", "binary_flip_probs", "build_proposal", "sample_proposal",
    "IsingLatticeModel", "LogQuadraticModel", "NoisyGradientModel", "Perturbed1DModel", "RbmModel",
    "random_rbm",
    "DMALA", "DULA", "LB1", "GradFlip1", "Gibbs1", "RbmBlockGibbs", "Trace", "make_sampler", "run_chain",
]
