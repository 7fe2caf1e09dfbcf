"""Pipeline configuration documents.

Configs are JSON objects with ``schema_version`` 1. Every section maps onto a
component dataclass; unknown keys are rejected and every validation failure is
reported with the dotted path of the offending field.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .conversion import ConversionParams, FilterSpec, UspdcParams
from .correlation import CorrelationConfig
from .detection import DEFAULT_DETECTORS, DetectorParams, HbtConfig
from .errors import ConfigError
from .source import EmitterParams, SourceSpec, emitter_for_lifetime
from .validation import check_int, check_positive, check_probability

SCHEMA_VERSION = 1
DEFAULT_SEGMENT_PS = 10**12
FIT_MODELS = ("eq1", "eq2")


@dataclass(frozen=True)
class AnalysisConfig:
    model: str = "eq2"
    sigma: float | None = None
    t0: float | None = None
    pump_rel_sigma: float = 0.0

    def __post_init__(self):
        if self.model not in FIT_MODELS:
            raise ConfigError("model", f"must be one of {FIT_MODELS}, got {self.model!r}")
        if self.model == "eq2":
            if self.sigma is None:
                raise ConfigError("sigma", "required for model 'eq2'")
            if self.t0 is None:
                raise ConfigError("t0", "required for model 'eq2'")
            check_positive(self.sigma, "sigma")
            if not math.isfinite(float(self.t0)):
                raise ConfigError("t0", "must be finite")
        check_positive(self.pump_rel_sigma, "pump_rel_sigma", allow_zero=True)


@dataclass(frozen=True)
class PipelineConfig:
    source: SourceSpec
    duration: int
    hbt: HbtConfig = field(default_factory=HbtConfig)
    correlation: CorrelationConfig = field(default_factory=CorrelationConfig)
    coupler_loss: float = 0.0
    optics_transmission: float = 1.0
    conversion: ConversionParams | None = None
    uspdc: UspdcParams | None = None
    filter: FilterSpec | None = None
    pump_power: float = 0.0
    crystal_temp: float | None = None
    seed: int = 0
    segment_ps: int = DEFAULT_SEGMENT_PS
    fast_thinning: bool = True
    analysis: AnalysisConfig = field(default_factory=lambda: AnalysisConfig(model="eq1"))

    def __post_init__(self):
        check_int(self.duration, "duration", minimum=1)
        check_probability(self.coupler_loss, "coupler_loss", high_open=True)
        check_probability(self.optics_transmission, "optics_transmission", low_open=True)
        check_positive(self.pump_power, "pump_power", allow_zero=True)
        if self.crystal_temp is not None:
            check_positive(self.crystal_temp, "crystal_temp")
        check_int(self.seed, "seed", minimum=0)
        if self.seed > 2**64 - 1:
            raise ConfigError("seed", "must fit in 64 bits")
        check_int(self.segment_ps, "segment_ps", minimum=1)
        if not isinstance(self.fast_thinning, bool):
            raise ConfigError("fast_thinning", "must be true or false")
        if self.conversion is None and (self.uspdc is not None or self.filter is not None):
            raise ConfigError("conversion", "uspdc and filter need a conversion stage")
        if self.conversion is None and self.pump_power:
            raise ConfigError("pump_power", "must be 0 without a conversion stage")

    @property
    def duration_s(self) -> float:
        return self.duration * 1e-12

    @property
    def converted(self) -> bool:
        return self.conversion is not None

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return config_to_dict(self)


# ---- parsing ---------------------------------------------------------------

def _expect_object(data, path):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    return data


def _build(cls, data, path, parsers=None):
    """Instantiate dataclass ``cls`` from ``data`` with path-qualified errors."""
    _expect_object(data, path)
    names = {f.name for f in dataclasses.fields(cls)}
    required = {f.name for f in dataclasses.fields(cls)
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
    for key in sorted(required - set(data)):
        raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if parsers and key in parsers and value is not None:
            value = parsers[key](value, sub)
        elif isinstance(value, (dict, list)):
            raise ConfigError(sub, "expected a scalar value")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise (exc.prefixed(path) if path else exc) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


_EMITTER_KEYS = {"tau_rad", "reexcite_rate", "wavelength", "background_fraction", "tau0", "contrast"}


def _parse_emitter(data, path, rate):
    """Emitter from either ``tau_rad`` or the target ``tau0``; contrast may replace background_fraction."""
    _expect_object(data, path)
    for key in data:
        if key not in _EMITTER_KEYS:
            raise ConfigError(f"{path}.{key}", "unknown key")
    d = dict(data)
    if "contrast" in d:
        if "background_fraction" in d:
            raise ConfigError(f"{path}.contrast", "give either contrast or background_fraction")
        c = d.pop("contrast")
        try:
            check_probability(c, "contrast", low_open=True)
        except ConfigError as exc:
            raise exc.prefixed(path) from None
        d["background_fraction"] = 1.0 - math.sqrt(c)
    if "tau0" in d:
        if "tau_rad" in d or "reexcite_rate" in d:
            raise ConfigError(f"{path}.tau0", "give either tau0 or tau_rad/reexcite_rate")
        tau0 = d.pop("tau0")
        try:
            check_positive(tau0, "tau0")
            if not rate > 0:
                raise ConfigError("tau0", "needs a positive source rate")
            return emitter_for_lifetime(tau0, rate, d.get("background_fraction", 0.0),
                                        d.get("wavelength", EmitterParams.wavelength))
        except ConfigError as exc:
            raise exc.prefixed(path) from None
        except ValueError as exc:
            raise ConfigError(f"{path}.tau0", str(exc)) from None
    if "tau_rad" not in d:
        raise ConfigError(f"{path}.tau_rad", "missing required key (or give tau0)")
    return _build(EmitterParams, d, path)


def _parse_source(data, path):
    _expect_object(data, path)
    d = dict(data)
    for key in ("params", "seed", "duration"):
        if key in d:
            hint = "use 'emitter'" if key == "params" else "set it at the top level"
            raise ConfigError(f"{path}.{key}", f"unknown key ({hint})")
    emitter = d.pop("emitter", None)
    if emitter is not None:
        d["params"] = _parse_emitter(emitter, f"{path}.emitter", float(d.get("rate", 0) or 0))
    try:
        return _build(SourceSpec, d, "")
    except ConfigError as exc:
        sub = "emitter" if exc.path == "params" else exc.path
        raise ConfigError(f"{path}.{sub}" if sub else path, exc.message) from None


def _parse_detector(data, path):
    if isinstance(data, str):
        if data not in DEFAULT_DETECTORS:
            raise ConfigError(path, f"unknown detector preset {data!r}; choose from {sorted(DEFAULT_DETECTORS)}")
        return DEFAULT_DETECTORS[data]
    _expect_object(data, path)
    d = dict(data)
    base = d.pop("preset", None)
    if base is not None:
        if base not in DEFAULT_DETECTORS:
            raise ConfigError(f"{path}.preset", f"unknown detector preset {base!r}")
        d = {**dataclasses.asdict(DEFAULT_DETECTORS[base]), **d}
    return _build(DetectorParams, d, path)


def _parse_hbt(data, path):
    return _build(HbtConfig, data, path, {"det1": _parse_detector, "det2": _parse_detector})


def _parser(cls):
    return lambda data, path: _build(cls, data, path)


_TOP_PARSERS = {
    "source": _parse_source,
    "hbt": _parse_hbt,
    "correlation": _parser(CorrelationConfig),
    "conversion": _parser(ConversionParams),
    "uspdc": _parser(UspdcParams),
    "filter": _parser(FilterSpec),
    "analysis": _parser(AnalysisConfig),
}


def config_from_dict(data: dict) -> PipelineConfig:
    _expect_object(data, "")
    d = dict(data)
    version = d.pop("schema_version", None)
    if version is None:
        raise ConfigError("schema_version", "missing required key")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}; expected {SCHEMA_VERSION}")
    return _build(PipelineConfig, d, "", _TOP_PARSERS)


def load_config(path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    return config_from_dict(data)


# ---- serialization ---------------------------------------------------------

def _emitter_to_dict(p: EmitterParams) -> dict:
    d = {"tau_rad": p.tau_rad, "wavelength": p.wavelength, "background_fraction": p.background_fraction}
    if p.reexcite_rate is not None:
        d["reexcite_rate"] = p.reexcite_rate
    return d


def config_to_dict(cfg: PipelineConfig) -> dict:
    """Canonical JSON-ready form; ``config_from_dict`` of it rebuilds an equal config."""
    src = cfg.source
    source = {"kind": src.kind, "rate": src.rate, "wavelength": src.wavelength}
    if src.params is not None:
        source["emitter"] = _emitter_to_dict(src.params)

    def opt(x):
        return None if x is None else dataclasses.asdict(x)

    return {
        "schema_version": SCHEMA_VERSION,
        "source": source,
        "duration": cfg.duration,
        "hbt": {"det1": dataclasses.asdict(cfg.hbt.det1), "det2": dataclasses.asdict(cfg.hbt.det2),
                "split_ratio": cfg.hbt.split_ratio},
        "correlation": dataclasses.asdict(cfg.correlation),
        "coupler_loss": cfg.coupler_loss,
        "optics_transmission": cfg.optics_transmission,
        "conversion": opt(cfg.conversion),
        "uspdc": opt(cfg.uspdc),
        "filter": opt(cfg.filter),
        "pump_power": cfg.pump_power,
        "crystal_temp": cfg.crystal_temp,
        "seed": cfg.seed,
        "segment_ps": cfg.segment_ps,
        "fast_thinning": cfg.fast_thinning,
        "analysis": dataclasses.asdict(cfg.analysis),
    }


def dump_config(cfg: PipelineConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")
