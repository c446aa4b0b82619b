"""Client contribution estimation for federated learning."""

from ._core import (
    ConfigError,
    DependencyError,
    Error,
    compute_cci,
    config_hash,
    contribution_values,
    exact_shapley,
    generate_synthetic,
    gini,
    load_aam,
    load_store,
    loo_values,
    rank_descending,
    resolve_config,
    run_stage,
    scale_sizes,
    tmc_shapley,
)

__all__ = [
    "ConfigError",
    "DependencyError",
    "Error",
    "compute_cci",
    "config_hash",
    "contribution_values",
    "exact_shapley",
    "generate_synthetic",
    "gini",
    "load_aam",
    "load_store",
    "loo_values",
    "rank_descending",
    "resolve_config",
    "run_stage",
    "scale_sizes",
    "tmc_shapley",
]
