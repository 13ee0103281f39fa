"""Bivariate extended generalized Pareto model: simulation, moments, inference and diagnostics."""

__version__ = "0.1.0"

from .dataset import Dataset
from .egpd import (EgpdParams, egpd_cdf, egpd_loglik, egpd_pdf, egpd_quantile, fit_egpd_mle,
                   gpd_cdf)
from .errors import MegpdError
from .fit_classical import HybridFit, fit_hybrid
from .model import MegpdParams, simulate, simulate_latent, weight_fn

__all__ = [
    "Dataset", "EgpdParams", "HybridFit", "MegpdError", "MegpdParams", "egpd_cdf", "egpd_loglik",
    "egpd_pdf", "egpd_quantile", "fit_egpd_mle", "fit_hybrid", "gpd_cdf", "simulate",
    "simulate_latent", "weight_fn",
]
