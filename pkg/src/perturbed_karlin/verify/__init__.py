"""Monte Carlo verification harness."""

from .config import ConfigError, ExperimentConfig, Suite
from .report import TestRecord, VerificationReport
from .stats import chi_square_gof, ks_statistic, ks_threshold, two_sample_ks, two_sample_threshold
from .suites import (
    run_experiment,
    run_occupancy_experiment,
    run_poissonization_experiment,
    run_regime_experiment,
    run_rsm_experiment,
    run_sibuya_experiment,
    run_stable_experiment,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "Suite",
    "TestRecord",
    "VerificationReport",
    "chi_square_gof",
    "ks_statistic",
    "ks_threshold",
    "run_experiment",
    "run_occupancy_experiment",
    "run_poissonization_experiment",
    "run_regime_experiment",
    "run_rsm_experiment",
    "run_sibuya_experiment",
    "run_stable_experiment",
    "two_sample_ks",
    "two_sample_threshold",
]
