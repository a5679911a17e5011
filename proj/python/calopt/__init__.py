"""Calorimeter layout optimization: shower simulation, mutual-information
estimation and the trust-region design loop."""

from calopt._core import (  # noqa: F401
    DesignVector,
    EventBatch,
    ShowerModel,
    estimate_mi,
    knn_mi,
    regularized_lower_gamma,
    run_study,
    sample_energies,
    simulate,
    validate,
)

__all__ = [
    "DesignVector",
    "EventBatch",
    "ShowerModel",
    "estimate_mi",
    "knn_mi",
    "regularized_lower_gamma",
    "run_study",
    "sample_energies",
    "simulate",
    "validate",
]
