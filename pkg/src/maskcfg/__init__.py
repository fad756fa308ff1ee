"""Exact analysis of classifier-free guidance in masked discrete diffusion."""
from .errors import *  # noqa: F401,F403
from .state import (  # noqa: F401
    DenseDistribution,
    GuidanceConfig,
    MixtureModel,
    StateSpace,
    alpha_divergence,
    load_mixture,
    log_normalizer_Z,
    normalizer_Z,
    save_mixture,
    support_of,
    tilted_distribution,
)

__version__ = "0.1.0"
