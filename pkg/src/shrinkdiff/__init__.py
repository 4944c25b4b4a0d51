"""Spike-and-slab variable selection with sample-size-dependent Gaussian priors."""
from .core import (
    CapabilityError,
    Dataset,
    DegenerateDataError,
    ModelIndicator,
    NumericalInputError,
    ParameterError,
    PosteriorScore,
    PriorSpec,
    log_posterior_score,
    log_Qk,
    posterior_ratio,
    precision_diag,
    shrunk_rss,
)
from .gibbs import ChainConfig, PosteriorSummary, run_chain
from .oracle import enumerate_posterior, orthogonal_marginal, phi_threshold
from .priors import condition_diagnostics, default_priors, sample_variance, solve_qn
from .selection import bic_model, marginal_screen, median_model, refit_ols

__version__ = "0.1.0"
