"""Mapping between intrinsic emitter parameters and fitted dip parameters.

A fit evaluated at bin centers does not return the emitter's own contrast and
lifetime exactly: bins average over the dip, and a model without jitter sees a
broadened dip. ``calibrate_dip`` inverts that mapping on noiseless expected
histograms so a simulated emitter can be chosen to reproduce target fit values.
"""

from __future__ import annotations

import numpy as np

from ..correlation import CorrelationConfig, Histogram
from ..errors import ConvergenceError
from .fitting import fit_convolved_dip, fit_dip
from .models import bin_averaged_g2


def expected_normalized(a, tau0, t0, sigma, cfg: CorrelationConfig, signal_fraction=1.0) -> np.ndarray:
    """Noiseless normalized histogram: bin-averaged dip diluted by flat background."""
    g = bin_averaged_g2(a, tau0, t0, sigma, cfg.bin_edges)
    return 1.0 - signal_fraction**2 * (1.0 - g)


def expected_histogram(a, tau0, t0, sigma, cfg: CorrelationConfig, flat_level=1e6, signal_fraction=1.0) -> Histogram:
    """Histogram holding the noiseless expectation, with uniform weights set by ``flat_level``."""
    norm = expected_normalized(a, tau0, t0, sigma, cfg, signal_fraction)
    counts = np.full(cfg.nbins, int(flat_level), dtype=np.int64)
    return Histogram(cfg.bin_centers, counts, norm, float(flat_level), {"noiseless": True})


def _fit(h, model, fit_sigma, fit_t0):
    if model == "eq1":
        return fit_dip(h)
    return fit_convolved_dip(h, fit_sigma, fit_t0)


def calibrate_dip(target_a, target_tau0, cfg: CorrelationConfig, true_sigma, true_t0=0.0, model="eq1",
                  fit_sigma=None, fit_t0=None, tol=1e-7, max_iter=100) -> tuple[float, float]:
    """Intrinsic ``(a, tau0)`` whose expected histogram fits to ``(target_a, target_tau0)``.

    ``true_sigma`` and ``true_t0`` describe the instrument response that the
    data actually carry; ``model`` with ``fit_sigma``/``fit_t0`` is the fit that
    will later be applied. Solved by fixed-point iteration on the fit offsets.
    """
    if model not in ("eq1", "eq2"):
        raise ValueError("model must be 'eq1' or 'eq2'")
    a, tau = float(target_a), float(target_tau0)
    for _ in range(max_iter):
        r = _fit(expected_histogram(a, tau, true_t0, true_sigma, cfg), model, fit_sigma, fit_t0)
        da, dtau = target_a - r.a, target_tau0 - r.tau0
        if abs(da) < tol and abs(dtau) < tol * target_tau0:
            return a, tau
        a = min(a + da, 1.0)
        tau = max(tau + dtau, 1.0)
    raise ConvergenceError(f"dip calibration did not converge in {max_iter} iterations")
