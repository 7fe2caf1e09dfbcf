"""Ready-made configurations for the reference experiments.

Emitter contrast and lifetime in the quantum-dot presets are intrinsic values,
chosen with ``analysis.calibrate_dip`` so that the fit applied to the expected
histogram returns the reference values (see ``CALIBRATION_TARGETS``). The
test-suite re-derives them.
"""

from __future__ import annotations

import math

from .config import AnalysisConfig, PipelineConfig
from .conversion import ConversionParams, FilterSpec, UspdcParams
from .correlation import CorrelationConfig
from .detection import DEFAULT_DETECTORS, HbtConfig
from .source import SourceSpec, emitter_for_lifetime

PS_PER_HOUR = 3_600 * 10**12

# broadband UV filters in front of the narrow-band filter
BROADBAND_OPTICS = 0.94**2
COUPLER_LOSS = 0.4
GRATING_TRANSMISSION = 0.9

UV_HBT = HbtConfig(DEFAULT_DETECTORS["pmt1"], DEFAULT_DETECTORS["pmt2"])
IR_HBT = HbtConfig(DEFAULT_DETECTORS["snspd1"], DEFAULT_DETECTORS["snspd2"])
UV_SIGMA = 213.0
UV_T0 = -167.0

# name -> (fit model, target contrast a, target tau0 in ps)
CALIBRATION_TARGETS = {
    "direct_2mw": ("eq1", 0.984, 357.0),
    "direct_3p2mw": ("eq1", 0.952, 264.0),
    "converted_2mw": ("eq2", 0.93, 565.0),
    "converted_3p2mw": ("eq2", 0.78, 454.0),
}

# name -> (contrast, tau0) of the simulated emitter; direct contrasts include
# the small dilution by SNSPD dark counts
EMITTERS = {
    "direct_2mw": (0.991723, 353.110),
    "direct_3p2mw": (0.964753, 259.078),
    "converted_2mw": (0.937522, 559.634),
    "converted_3p2mw": (0.788933, 448.043),
}


def _qd_source(rate, name) -> SourceSpec:
    contrast, tau0 = EMITTERS[name]
    params = emitter_for_lifetime(tau0, rate, background_fraction=1.0 - math.sqrt(contrast))
    return SourceSpec("quantum_dot", rate, params)


def _hours(h, scale):
    return int(round(h * scale * PS_PER_HOUR))


def _converted(source, pump, hours, scale, seed, pump_rel_sigma=0.06, **kw) -> PipelineConfig:
    return PipelineConfig(
        source=source,
        duration=_hours(hours, scale),
        hbt=UV_HBT,
        correlation=CorrelationConfig(),
        coupler_loss=COUPLER_LOSS,
        optics_transmission=BROADBAND_OPTICS,
        conversion=ConversionParams(),
        uspdc=UspdcParams(),
        filter=FilterSpec(),
        pump_power=pump,
        seed=seed,
        analysis=AnalysisConfig("eq2", UV_SIGMA, UV_T0, pump_rel_sigma),
        **kw,
    )


def converted_2mw(scale=1.0, seed=1) -> PipelineConfig:
    """1.4e6/s biexciton photons at the crystal, 77 mW pump, 122 h."""
    return _converted(_qd_source(1.4e6 / (1 - COUPLER_LOSS), "converted_2mw"), 0.077, 122, scale, seed)


def converted_3p2mw(scale=1.0, seed=1) -> PipelineConfig:
    """1.7e6/s biexciton photons at the crystal, 81 mW pump, 98 h."""
    return _converted(_qd_source(1.7e6 / (1 - COUPLER_LOSS), "converted_3p2mw"), 0.081, 98, scale, seed)


def coherent_control(scale=1.0, seed=1) -> PipelineConfig:
    """Attenuated laser at 1.7e6/s in front of the crystal, 100 mW pump, 65 h."""
    src = SourceSpec("coherent", 1.7e6 / (1 - COUPLER_LOSS))
    return _converted(src, 0.100, 65, scale, seed, pump_rel_sigma=0.0)


def uspdc_control(scale=1.0, seed=1) -> PipelineConfig:
    """No input photons; pump set for 2000/s background in front of the splitter, 17 h."""
    pump = UspdcParams().ref_power * math.sqrt(
        2000.0 * FilterSpec().background_suppression / (BROADBAND_OPTICS * UspdcParams().ref_rate))
    src = SourceSpec("coherent", 0.0)
    return _converted(src, pump, 17, scale, seed, pump_rel_sigma=0.0)


def _direct(rate, name, seconds, seed) -> PipelineConfig:
    return PipelineConfig(
        source=_qd_source(rate, name),
        duration=int(round(seconds * 1e12)),
        hbt=IR_HBT,
        correlation=CorrelationConfig(bin_width=50),
        optics_transmission=GRATING_TRANSMISSION,
        seed=seed,
        analysis=AnalysisConfig("eq1"),
    )


def direct_2mw(seconds=300.0, seed=1) -> PipelineConfig:
    return _direct(1.4e6, "direct_2mw", seconds, seed)


def direct_3p2mw(seconds=300.0, seed=1) -> PipelineConfig:
    return _direct(1.7e6, "direct_3p2mw", seconds, seed)


PRESETS = {
    "coherent_control": coherent_control,
    "uspdc_control": uspdc_control,
    "direct_2mw": direct_2mw,
    "direct_3p2mw": direct_3p2mw,
    "converted_2mw": converted_2mw,
    "converted_3p2mw": converted_3p2mw,
}


def get_preset(name: str, **kwargs) -> PipelineConfig:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**kwargs)


__all__ = ["PRESETS", "CALIBRATION_TARGETS", "EMITTERS", "get_preset"]
