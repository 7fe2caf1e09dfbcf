"""Simulation and correlation analysis of frequency-converted quantum-dot photons."""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    BackgroundBudget,
    ConvolvedDipModel,
    DipModel,
    FitResult,
    background_corrected_g2,
    contrast_from_signal_fraction,
    decompose_coincidences,
    eval_convolved_g2,
    fit_convolved_dip,
    fit_dip,
    rate_budget,
)
from .config import PipelineConfig, config_from_dict, load_config  # noqa: E402
from .conversion import (  # noqa: E402
    ConversionParams,
    FilterSpec,
    UspdcParams,
    convert_stream,
    efficiency,
    sum_frequency,
    uspdc_rate,
)
from .correlation import (  # noqa: E402
    CorrelationConfig,
    Histogram,
    StreamingCorrelator,
    brute_force_correlate,
    correlate,
    expected_flat,
    normalize,
)
from .detection import DetectorParams, HbtConfig, calibrate_instrument, detect, hbt_split  # noqa: E402
from .pipeline import run_pipeline  # noqa: E402
from .source import EmitterParams, SourceSpec, gen_coherent_stream, gen_qd_stream, theoretical_g2  # noqa: E402
from .tags import TagStream, read_tags, write_tags  # noqa: E402

__all__ = [
    "BackgroundBudget",
    "ConversionParams",
    "ConvolvedDipModel",
    "CorrelationConfig",
    "DetectorParams",
    "DipModel",
    "EmitterParams",
    "FilterSpec",
    "FitResult",
    "HbtConfig",
    "Histogram",
    "PipelineConfig",
    "SourceSpec",
    "StreamingCorrelator",
    "TagStream",
    "UspdcParams",
    "background_corrected_g2",
    "brute_force_correlate",
    "calibrate_instrument",
    "config_from_dict",
    "contrast_from_signal_fraction",
    "convert_stream",
    "correlate",
    "decompose_coincidences",
    "detect",
    "efficiency",
    "eval_convolved_g2",
    "expected_flat",
    "fit_convolved_dip",
    "fit_dip",
    "gen_coherent_stream",
    "gen_qd_stream",
    "hbt_split",
    "load_config",
    "normalize",
    "rate_budget",
    "read_tags",
    "run_pipeline",
    "sum_frequency",
    "theoretical_g2",
    "uspdc_rate",
    "write_tags",
]
