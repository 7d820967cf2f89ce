"""screenlab: marginal-utility feature screening and sparse penalized fits
for general pseudo-likelihoods, with sample-splitting false-discovery
variants and a reproducible Monte Carlo harness."""

from .data import (Dataset, Response, RngSpec, load_csv, split_groups,
                   split_half, standardize)
from .losses import (LAD, Huber, Logistic, LossModel, MultiHinge, Poisson,
                     Quadratic, loss_from_string)
from .penalties import L1, MCP, SCAD, Penalty, penalty_from_string
from .solver import (FitResult, SolverConfig, fit_conditional,
                     fit_conditional_residual, fit_marginal, fit_penalized,
                     fit_unpenalized, kkt_residuals, select_lambda)
from .screening import (ScreenConfig, ScreenTrace, isis, isis_no_deletion,
                        sis_rank, sis_select)
from .variants import (SplitScreenResult, Theorem1Bound, theorem1_bound,
                       var1_isis, var1_screen, var2_isis, var2_screen)
from .simgen import (PRESETS, DesignSpec, ModelSpec, bayes_error,
                     exaggerated_case2, gen_dataset, gen_design, gen_response,
                     preset, true_support)
from .harness import (ExperimentConfig, MetricsReport, back_transform,
                      compute_metrics, config_hash, emit_report,
                      run_experiment, run_replicate)
from .estimators import ISISScreener, PenalizedModel, SISScreener

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Response", "RngSpec", "load_csv", "split_half",
    "split_groups", "standardize",
    "LossModel", "Quadratic", "Logistic", "Poisson", "LAD", "Huber",
    "MultiHinge", "loss_from_string",
    "Penalty", "L1", "SCAD", "MCP", "penalty_from_string",
    "SolverConfig", "FitResult", "fit_marginal", "fit_conditional",
    "fit_conditional_residual", "fit_penalized", "fit_unpenalized",
    "kkt_residuals", "select_lambda",
    "ScreenConfig", "ScreenTrace", "sis_rank", "sis_select", "isis",
    "isis_no_deletion",
    "SplitScreenResult", "Theorem1Bound", "var1_screen", "var2_screen",
    "var1_isis", "var2_isis", "theorem1_bound",
    "DesignSpec", "ModelSpec", "PRESETS", "preset", "true_support",
    "gen_design", "gen_response", "gen_dataset", "bayes_error",
    "exaggerated_case2",
    "ExperimentConfig", "MetricsReport", "run_experiment", "run_replicate",
    "compute_metrics", "emit_report", "config_hash", "back_transform",
    "SISScreener", "ISISScreener", "PenalizedModel",
]
