"""Nearest-neighbor matching estimates with randomization and asymptotic inference."""

from ._matchri import (
    ConfidenceInterval,
    ConfigError,
    DataError,
    Error,
    Estimate,
    MatchSpec,
    NumericError,
    RandomizationResult,
    Sample,
    TestConfig,
    ai_test,
    chi2_cdf,
    chi2_quantile,
    confidence_interval,
    draw_sample,
    estimate,
    load_csv,
    mc_size,
    norm_cdf,
    norm_quantile,
    permutation_test,
    sign_changes_test,
    write_csv,
)

__all__ = [
    "ConfidenceInterval",
    "ConfigError",
    "DataError",
    "Error",
    "Estimate",
    "MatchSpec",
    "NumericError",
    "RandomizationResult",
    "Sample",
    "TestConfig",
    "ai_test",
    "chi2_cdf",
    "chi2_quantile",
    "confidence_interval",
    "draw_sample",
    "estimate",
    "load_csv",
    "mc_size",
    "norm_cdf",
    "norm_quantile",
    "permutation_test",
    "sign_changes_test",
    "write_csv",
]
