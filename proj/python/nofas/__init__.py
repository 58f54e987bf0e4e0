"""Variational inference with normalizing flows and an adaptive surrogate.

Thin wrapper over the compiled extension; see the package README for the
experiment CLI and file formats.
"""

from nofas._core import (
    convergence_detector,
    evaluate,
    evaluate_latent,
    gelman_rubin,
    latent_to_physical,
    make_observations,
    make_pregrid,
    mh_run,
    model_info,
    model_names,
    run_experiment,
    sample_flow,
    sobol_ridge,
    sobol_ridge_interval,
    validate_config,
)

__all__ = [
    "convergence_detector",
    "evaluate",
    "evaluate_latent",
    "gelman_rubin",
    "latent_to_physical",
    "make_observations",
    "make_pregrid",
    "mh_run",
    "model_info",
    "model_names",
    "run_experiment",
    "sample_flow",
    "sobol_ridge",
    "sobol_ridge_interval",
    "validate_config",
]
