import copy
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdconvert.config import SCHEMA_VERSION, config_from_dict, config_to_dict, dump_config, load_config
from qdconvert.detection import DEFAULT_DETECTORS
from qdconvert.errors import ConfigError
from qdconvert.presets import PRESETS, converted_2mw, get_preset

BASE = config_to_dict(converted_2mw(0.001))

# (dotted path, invalid value, path expected in the error)
INVALID = [
    ("duration", 0, "duration"),
    ("duration", -5, "duration"),
    ("duration", 1.5, "duration"),
    ("seed", -1, "seed"),
    ("seed", 2**64, "seed"),
    ("coupler_loss", 1.0, "coupler_loss"),
    ("optics_transmission", 0.0, "optics_transmission"),
    ("pump_power", -0.01, "pump_power"),
    ("segment_ps", 0, "segment_ps"),
    ("source.rate", -1.0, "source.rate"),
    ("source.kind", "laser", "source.kind"),
    ("source.emitter.tau_rad", 0.0, "source.emitter.tau_rad"),
    ("source.emitter.background_fraction", 1.0, "source.emitter.background_fraction"),
    ("hbt.split_ratio", 0.0, "hbt.split_ratio"),
    ("hbt.det1.efficiency", 1.5, "hbt.det1.efficiency"),
    ("hbt.det2.jitter_sigma", -1.0, "hbt.det2.jitter_sigma"),
    ("hbt.det2.dark_rate", -3.0, "hbt.det2.dark_rate"),
    ("correlation.bin_width", 0, "correlation.bin_width"),
    ("correlation.bin_width", 300, "correlation.bin_width"),
    ("correlation.tau_max", -20_000, "correlation.tau_max"),
    ("correlation.exclusion_halfwidth", 20_000, "correlation.exclusion_halfwidth"),
    ("conversion.lambda_fwhm", 0.0, "conversion.lambda_fwhm"),
    ("conversion.eta_slope", -0.1, "conversion.eta_slope"),
    ("uspdc.ref_power", 0.0, "uspdc.ref_power"),
    ("filter.peak_transmission", 1.2, "filter.peak_transmission"),
    ("filter.background_suppression", 0.5, "filter.background_suppression"),
    ("analysis.model", "eq3", "analysis.model"),
    ("analysis.sigma", None, "analysis.sigma"),
]


def _set(d, path, value):
    keys = path.split(".")
    for k in keys[:-1]:
        d = d[k]
    d[keys[-1]] = value


def test_roundtrip_all_presets():
    for name in PRESETS:
        cfg = get_preset(name, scale=0.001) if "direct" not in name else get_preset(name)
        assert config_from_dict(json.loads(json.dumps(config_to_dict(cfg)))) == cfg


def test_dump_and_load(tmp_path):
    cfg = converted_2mw(0.01, seed=9)
    p = tmp_path / "c.json"
    dump_config(cfg, p)
    assert load_config(p) == cfg


@given(st.sampled_from(INVALID))
def test_invalid_values_name_the_field(case):
    path, value, expect = case
    d = copy.deepcopy(BASE)
    _set(d, path, value)
    with pytest.raises(ConfigError) as exc:
        config_from_dict(d)
    assert exc.value.path == expect
    assert str(exc.value).startswith(expect + ":")


@given(st.sampled_from(["", "source", "hbt", "hbt.det1", "correlation", "conversion", "analysis"]))
def test_unknown_keys_rejected(where):
    d = copy.deepcopy(BASE)
    target = d
    for k in filter(None, where.split(".")):
        target = target[k]
    target["bogus"] = 1
    with pytest.raises(ConfigError, match="unknown key") as exc:
        config_from_dict(d)
    assert exc.value.path == (f"{where}.bogus" if where else "bogus")


def test_missing_keys():
    d = copy.deepcopy(BASE)
    del d["duration"]
    with pytest.raises(ConfigError, match="missing") as exc:
        config_from_dict(d)
    assert exc.value.path == "duration"
    d = copy.deepcopy(BASE)
    del d["schema_version"]
    with pytest.raises(ConfigError, match="schema_version"):
        config_from_dict(d)


def test_schema_version_mismatch():
    d = dict(BASE, schema_version=SCHEMA_VERSION + 1)
    with pytest.raises(ConfigError, match="unsupported version"):
        config_from_dict(d)


def test_cross_field_rules():
    d = copy.deepcopy(BASE)
    d["conversion"] = None
    with pytest.raises(ConfigError) as exc:
        config_from_dict(d)
    assert exc.value.path == "conversion"
    d["uspdc"] = d["filter"] = None
    with pytest.raises(ConfigError) as exc:
        config_from_dict(d)
    assert exc.value.path == "pump_power"
    d["pump_power"] = 0.0
    assert config_from_dict(d).conversion is None


def test_detector_presets():
    d = copy.deepcopy(BASE)
    d["hbt"]["det1"] = "snspd1"
    d["hbt"]["det2"] = {"preset": "pmt2", "dark_rate": 1.0}
    cfg = config_from_dict(d)
    assert cfg.hbt.det1 == DEFAULT_DETECTORS["snspd1"]
    assert cfg.hbt.det2.dark_rate == 1.0 and cfg.hbt.det2.delay == -167.0
    d["hbt"]["det1"] = "apd"
    with pytest.raises(ConfigError) as exc:
        config_from_dict(d)
    assert exc.value.path == "hbt.det1"


def test_emitter_by_lifetime_and_contrast():
    d = copy.deepcopy(BASE)
    d["source"]["emitter"] = {"tau0": 500.0, "contrast": 0.81}
    cfg = config_from_dict(d)
    e = cfg.source.params
    assert e.tau0(cfg.source.rate) == pytest.approx(500.0)
    assert e.contrast == pytest.approx(0.81)
    d["source"]["emitter"] = {"tau0": 500.0, "tau_rad": 600.0}
    with pytest.raises(ConfigError) as exc:
        config_from_dict(d)
    assert exc.value.path == "source.emitter.tau0"


def test_source_rejects_misplaced_keys():
    for key in ("seed", "duration", "params"):
        d = copy.deepcopy(BASE)
        d["source"][key] = 1
        with pytest.raises(ConfigError) as exc:
            config_from_dict(d)
        assert exc.value.path == f"source.{key}"


def test_non_scalar_value():
    d = copy.deepcopy(BASE)
    d["seed"] = [1]
    with pytest.raises(ConfigError, match="scalar"):
        config_from_dict(d)


def test_load_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
