"""Bayesian parameter estimation for discretely observed diffusions.

Data-augmentation MCMC with Euler-Maruyama and Milstein transition-density
approximations, left-conditioned and modified-bridge path proposals, and a
simulation-study harness with reproducible seeding.
"""

from .models import (DiffusionModel, ParameterVector, NormalPrior,
                     LogNormalPrior, InverseGammaPrior, gbm_model, cir_model,
                     model_lookup, cir_strictly_positive,
                     gbm_exact_transition_logpdf, gbm_exact_sample)
from .schemes import (TimeGrid, SimulatedPath, Observations, euler_step,
                      milstein_step, simulate_path, generate_gbm_observations,
                      generate_cir_observations, strong_error_curve)
from .density import (euler_logpdf, milstein_logpdf, milstein_support_bound,
                      transition_logpdf, path_loglikelihood,
                      milstein_normalization, make_milstein_cdf,
                      density_profile)
from .bridges import (FeasibleSet, mb_feasible_interval, mb_feasible_bounds,
                      mb_euler_moments, mb_milstein_unnorm_logpdf,
                      calibrate_mb_bridge, propose_lc, propose_mb_euler,
                      propose_mb_milstein)
from .engine import (MethodCombo, McmcConfig, ChainResult, study_combos,
                     choose_update_blocks, parameter_update, path_update,
                     propose_segment, run_chain, point_estimates, hpd_interval)
from .diagnostics import EssReport, SummaryRow, multivariate_ess, summarize_run
from .estimators import (ml_estimate_gbm, map_estimate_gbm, exact_gbm_loglik,
                         MapConvergenceError)
from .study import (StudyConfig, gbm_study_config, cir_study_config,
                    study_priors, run_study)

__version__ = "0.1.0"

__all__ = [
    "DiffusionModel", "ParameterVector", "NormalPrior", "LogNormalPrior",
    "InverseGammaPrior", "gbm_model", "cir_model", "model_lookup",
    "cir_strictly_positive", "gbm_exact_transition_logpdf", "gbm_exact_sample",
    "TimeGrid", "SimulatedPath", "Observations", "euler_step", "milstein_step",
    "simulate_path", "generate_gbm_observations", "generate_cir_observations",
    "strong_error_curve",
    "euler_logpdf", "milstein_logpdf", "milstein_support_bound",
    "transition_logpdf", "path_loglikelihood", "milstein_normalization",
    "make_milstein_cdf", "density_profile",
    "FeasibleSet", "mb_feasible_interval", "mb_feasible_bounds",
    "mb_euler_moments", "mb_milstein_unnorm_logpdf", "calibrate_mb_bridge",
    "propose_lc", "propose_mb_euler", "propose_mb_milstein",
    "MethodCombo", "McmcConfig", "ChainResult", "study_combos",
    "choose_update_blocks", "parameter_update", "path_update",
    "propose_segment", "run_chain", "point_estimates", "hpd_interval",
    "EssReport", "SummaryRow", "multivariate_ess", "summarize_run",
    "ml_estimate_gbm", "map_estimate_gbm", "exact_gbm_loglik",
    "MapConvergenceError",
    "StudyConfig", "gbm_study_config", "cir_study_config", "study_priors",
    "run_study",
]
