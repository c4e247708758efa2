"""Particle gradient-flow simulator and blow-up certification toolkit.

Simulates N interacting particles on the line whose gaps follow the steepest
descent of a free energy mixing logarithmic diffusion against a singular
attractive interaction, certifies global existence or finite-time collision
from the initial state alone, and reproduces the three-particle phase-plane
picture of the competition between the two.
"""

from .config import ConfigError, RunConfig, load_config, parse_config
from .criteria import (
    Certificate,
    CriterionTag,
    Gamma0Class,
    Verdict,
    c_of_mu,
    c_of_n,
    classify_initial,
    gamma0_mass_threshold,
    ge_threshold,
)
from .density import GaussianDensity, UniformDensity, quantile_init
from .dynamics import (
    IntegratorConfig,
    Method,
    Outcome,
    OutcomeKind,
    RunClass,
    TrajectoryRecord,
    classify_run,
    simulate,
)
from .model import (
    Diagnostics,
    DomainError,
    NumericalFailure,
    Params,
    ParticleState,
    PreconditionError,
    TimeScaling,
    diagnostics,
    energy_g,
    entropy_u,
    interaction_w,
    phi,
    velocity,
    virial_rhs,
)

__all__ = [
    "Certificate", "ConfigError", "CriterionTag", "Diagnostics",
    "DomainError", "Gamma0Class", "GaussianDensity", "IntegratorConfig",
    "Method", "NumericalFailure", "Outcome", "OutcomeKind", "Params",
    "ParticleState", "PreconditionError", "RunClass", "RunConfig",
    "TimeScaling", "TrajectoryRecord", "UniformDensity", "Verdict",
    "c_of_mu", "c_of_n", "classify_initial", "classify_run", "diagnostics",
    "energy_g", "entropy_u", "gamma0_mass_threshold", "ge_threshold",
    "interaction_w", "load_config", "parse_config", "phi", "quantile_init",
    "simulate", "velocity", "virial_rhs",
]

__version__ = "0.1.0"
