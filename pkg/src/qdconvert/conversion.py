"""Sum-frequency conversion stage.

Covers wavelength bookkeeping, pump-power dependent efficiency with sinc^2
phase-matching acceptance, Bernoulli thinning of photon streams, and the
pump-induced USPDC background with narrow-band filtering.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import ConfigError
from .rng import make_rng
from .source import poisson_stream
from .tags import TagStream
from .validation import check_positive, check_probability

# normalized-sinc argument where sinc^2 falls to one half
SINC2_HALF = brentq(lambda u: np.sinc(u) ** 2 - 0.5, 0.3, 0.6, xtol=1e-15)

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class ConversionParams:
    eta_slope: float = 0.0715
    device_slope: float = 0.043
    lambda_center: float = 853.42
    lambda_fwhm: float = 0.2
    temp_center: float = 300.0
    temp_fwhm: float = 1.0
    pump_lambda: float = 651.39

    def __post_init__(self):
        check_positive(self.eta_slope, "eta_slope")
        check_positive(self.device_slope, "device_slope")
        if self.device_slope > self.eta_slope:
            raise ConfigError("device_slope", "must not exceed eta_slope")
        check_positive(self.lambda_center, "lambda_center")
        check_positive(self.lambda_fwhm, "lambda_fwhm")
        check_positive(self.temp_center, "temp_center")
        check_positive(self.temp_fwhm, "temp_fwhm")
        check_positive(self.pump_lambda, "pump_lambda")


@dataclass(frozen=True)
class UspdcParams:
    ref_rate: float = 85e3
    ref_power: float = 0.150
    spectrum_center: float = 368.84
    spectrum_fwhm: float = 1.53

    def __post_init__(self):
        check_positive(self.ref_rate, "ref_rate", allow_zero=True)
        check_positive(self.ref_power, "ref_power")
        check_positive(self.spectrum_center, "spectrum_center")
        check_positive(self.spectrum_fwhm, "spectrum_fwhm")


@dataclass(frozen=True)
class FilterSpec:
    center: float = 369.5
    fwhm: float = 0.5
    peak_transmission: float = 0.678
    background_suppression: float = 30.0

    def __post_init__(self):
        check_positive(self.center, "center")
        check_positive(self.fwhm, "fwhm")
        check_probability(self.peak_transmission, "peak_transmission", low_open=True)
        if not float(self.background_suppression) >= 1:
            raise ConfigError("background_suppression", f"must be >= 1, got {self.background_suppression!r}")


def sum_frequency(lambda_in, lambda_pump):
    """Output wavelength (nm) of sum-frequency mixing."""
    lambda_in = np.asarray(lambda_in, dtype=float)
    lambda_pump = np.asarray(lambda_pump, dtype=float)
    if np.any(lambda_in <= 0) or np.any(lambda_pump <= 0):
        raise ValueError("wavelengths must be positive")
    out = 1.0 / (1.0 / lambda_in + 1.0 / lambda_pump)
    return float(out) if out.ndim == 0 else out


def pump_wavelength_for(lambda_in, lambda_target):
    """Pump wavelength that maps ``lambda_in`` onto ``lambda_target``."""
    return 1.0 / (1.0 / lambda_target - 1.0 / lambda_in)


def acceptance(delta, fwhm):
    """Normalized sinc^2 phase-matching curve: 1 at delta=0, 1/2 at delta=+-fwhm/2."""
    return np.sinc(2.0 * SINC2_HALF * np.asarray(delta, dtype=float) / fwhm) ** 2


def efficiency(params: ConversionParams, pump_power, lambda_in=None, temp=None):
    """External single-photon conversion efficiency at ``pump_power`` (W)."""
    if pump_power < 0:
        raise ValueError("pump_power must be >= 0")
    lambda_in = params.lambda_center if lambda_in is None else lambda_in
    temp = params.temp_center if temp is None else temp
    peak = params.eta_slope * pump_power
    if peak > 1:
        warnings.warn(f"eta_slope * P = {peak:.3g} exceeds 1; clamping efficiency", RuntimeWarning)
        peak = 1.0
    a_lambda = acceptance(lambda_in - params.lambda_center, params.lambda_fwhm)
    a_temp = acceptance(temp - params.temp_center, params.temp_fwhm)
    return float(peak * a_lambda * a_temp)


def thin(t: np.ndarray, keep: float, rng: np.random.Generator) -> np.ndarray:
    if keep >= 1.0:
        return t
    if keep <= 0.0:
        return t[:0]
    return t[rng.random(t.size) < keep]


def convert_stream(stream: TagStream, eta_total, seed, label="converted") -> TagStream:
    """Keep each tag independently with probability ``eta_total``; times are untouched."""
    keep = check_probability(eta_total, "eta_total")
    if keep >= 1.0:
        return stream.replace(origin_label=label)
    mask = make_rng(seed, "convert").random(len(stream)) < keep
    return stream.replace(t=stream.t[mask], channel=stream.channel[mask], origin_label=label)


def uspdc_rate(params: UspdcParams, pump_power, filter: FilterSpec | None = None) -> float:
    """Background photon rate (1/s), quadratic in pump power."""
    if pump_power < 0:
        raise ValueError("pump_power must be >= 0")
    rate = params.ref_rate * (pump_power / params.ref_power) ** 2
    if filter is not None:
        rate /= filter.background_suppression
    return float(rate)


def gen_uspdc_stream(rate, duration, seed, wavelength=None) -> TagStream:
    """Poisson background stream; ``rate`` 0 gives an empty stream."""
    return poisson_stream(rate, duration, seed, wavelength=wavelength, label="USPDC", stage="uspdc")


def spectral_overlap(filter: FilterSpec, spectrum_center, spectrum_fwhm) -> float:
    """Transmitted fraction of a Gaussian spectrum through a box of the filter's FWHM."""
    if spectrum_fwhm <= 0 or filter.fwhm <= 0:
        raise ValueError("widths must be positive")
    sigma = spectrum_fwhm * FWHM_TO_SIGMA
    lo = (filter.center - 0.5 * filter.fwhm - spectrum_center) / sigma
    hi = (filter.center + 0.5 * filter.fwhm - spectrum_center) / sigma
    return float(filter.peak_transmission * (ndtr(hi) - ndtr(lo)))
