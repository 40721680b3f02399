"""Causal effect estimation in linear-Gaussian models with hidden confounders.

Strict faithfulness is replaced by a spike-and-slab prior on the scaled
structural coefficients. The large-sample posterior over the confounding
coefficients is explored by nested sampling, and every draw is mapped to the
structural parameters that reproduce the observed covariance exactly.
"""

from .analysis import (
    InsufficientSampleError,
    OrderingComparison,
    PosteriorSummary,
    compare_orderings,
    evidence_sweep,
    grid_log_posterior,
    interval_mass,
    spike_sweep,
    summarize,
)
from .estimators import (
    CITestResult,
    WeakInstrumentError,
    fisher_z_test,
    iv_estimate,
    lcd_estimate,
    min_rejecting_sample_size,
    partial_correlation,
)
from .io import ConfigError
from .nested import (
    MaxIterationsError,
    SamplerConfig,
    SamplerError,
    WeightedPosterior,
    prior_transform,
    run_nested,
    sample_causal_posterior,
)
from .posterior import (
    ConfounderPosterior,
    PriorConfig,
    hessian,
    log_likelihood_per_datapoint,
    log_posterior_confounders,
    log_prior_confounders,
    log_prior_theta,
    spike_slab_log_density,
)
from .recovery import NumericalDegeneracyError, RecoveredTheta, recover_theta
from .scenarios import SCENARIOS, Scenario, get_scenario, load_scenario
from .sem_model import (
    DegenerateDataError,
    ScaledParameters,
    SemParameters,
    from_scaled,
    implied_covariance,
    implied_covariance_scaled,
    sample_covariance,
    simulate_data,
    to_scaled,
)

__version__ = "0.1.0"
