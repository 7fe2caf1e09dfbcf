"""Dip models, fits and coincidence budgets."""

from .budget import (
    BackgroundBudget,
    background_corrected_g2,
    budget_for,
    contrast_from_signal_fraction,
    decompose_coincidences,
    expected_rates,
    format_budget_table,
    rate_budget,
)
from .calibration import calibrate_dip, expected_histogram, expected_normalized
from .fitting import ConvolvedDipModel, DipModel, FitResult, fit_convolved_dip, fit_dip, poisson_weights
from .models import bin_averaged_g2, dip_shape, dip_shape_grad, eval_convolved_g2

__all__ = [
    "BackgroundBudget", "ConvolvedDipModel", "DipModel", "FitResult", "background_corrected_g2",
    "bin_averaged_g2", "budget_for", "calibrate_dip", "contrast_from_signal_fraction",
    "decompose_coincidences", "dip_shape", "dip_shape_grad", "eval_convolved_g2", "expected_histogram",
    "expected_normalized", "expected_rates", "fit_convolved_dip", "fit_dip", "format_budget_table",
    "poisson_weights", "rate_budget",
]
