import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdconvert.correlation import CorrelationConfig, correlate
from qdconvert.detection import (
    DEFAULT_DETECTORS,
    DetectorChain,
    DetectorParams,
    HbtConfig,
    calibrate_instrument,
    detect,
    hbt_split,
)
from qdconvert.errors import ConfigError
from qdconvert.rng import make_rng
from qdconvert.source import gen_coherent_stream
from qdconvert.tags import TagStream

SECOND = 10**12


def test_params_validation():
    with pytest.raises(ConfigError, match="efficiency"):
        DetectorParams(efficiency=0.0)
    with pytest.raises(ConfigError, match="efficiency"):
        DetectorParams(efficiency=1.2)
    with pytest.raises(ConfigError, match="dark_rate"):
        DetectorParams(efficiency=0.5, dark_rate=-1)
    with pytest.raises(ConfigError, match="delay"):
        DetectorParams(efficiency=0.5, delay=float("nan"))
    with pytest.raises(ConfigError, match="split_ratio"):
        HbtConfig(split_ratio=1.0)


def test_pure_translation():
    s = gen_coherent_stream(1e7, 10**9, 0)
    out = detect(s, DetectorParams(efficiency=1.0, delay=100.0), seed=0)
    # tags pushed past the end of the window are dropped
    expect = s.t + 100
    assert out.t.tolist() == expect[expect <= s.duration].tolist()


def test_dark_counts():
    empty = TagStream([], 100 * SECOND)
    out = detect(empty, DetectorParams(efficiency=0.5, dark_rate=20.0), seed=1, channel=1)
    assert abs(len(out) - 2000) < 5 * np.sqrt(2000)


def test_efficiency_thinning():
    s = gen_coherent_stream(1e6, SECOND, 2)
    out = detect(s, DetectorParams(efficiency=0.36), seed=2)
    n = 0.36 * len(s)
    assert abs(len(out) - n) < 5 * np.sqrt(n)


def test_dead_time():
    s = gen_coherent_stream(2e7, 10**10, 3)
    out = detect(s, DetectorParams(efficiency=1.0, dead_time=20_000), seed=3)
    assert np.diff(out.t).min() >= 20_000
    # non-paralyzable: output rate r / (1 + r * tau_d)
    r = 2e7
    expect = r / (1 + r * 20e-9) * 1e-2
    assert abs(len(out) - expect) < 5 * np.sqrt(expect)


def test_jitter_width():
    t = np.arange(1, 20001, dtype=np.int64) * 10**6
    s = TagStream(t, 2 * 10**10)
    out = detect(s, DetectorParams(efficiency=1.0, jitter_sigma=150.0), seed=4)
    d = out.t - t
    assert abs(d.mean()) < 5 * 150 / np.sqrt(d.size)
    assert d.std() == pytest.approx(150.0, rel=0.03)


def test_determinism_and_independent_arms():
    s = gen_coherent_stream(1e6, 10**11, 5)
    p = DEFAULT_DETECTORS["pmt1"]
    assert detect(s, p, 7, channel=1) == detect(s, p, 7, channel=1)
    assert detect(s, p, 7, channel=1).t.tolist() != detect(s, p, 7, channel=2).t.tolist()


def test_hbt_split_partition():
    s = gen_coherent_stream(1e6, SECOND, 6)
    a, b = hbt_split(s, 0.5, 6)
    assert len(a) + len(b) == len(s)
    assert abs(len(a) - len(s) / 2) < 5 * np.sqrt(len(s) / 4)
    assert np.array_equal(np.sort(np.concatenate((a.t, b.t))), s.t)
    assert set(a.channel.tolist()) == {1} and set(b.channel.tolist()) == {2}


def test_hbt_split_edge_cases():
    a, b = hbt_split(TagStream([], 100), 0.5, 0)
    assert len(a) == len(b) == 0
    a, b = hbt_split(TagStream([50], 100), 0.5, 0)
    assert len(a) + len(b) == 1
    cfg = CorrelationConfig(bin_width=2, tau_min=-20, tau_max=20, exclusion_halfwidth=4)
    assert correlate(a, b, cfg).total == 0


@given(st.integers(0, 2**32), st.integers(1, 40))
@settings(max_examples=15, deadline=None)
def test_chain_segmentation_invariance(seed, nseg):
    # with no randomness in the chain, segment boundaries must not matter
    s = gen_coherent_stream(5e8, 10**8, seed)
    p = DetectorParams(efficiency=1.0, dead_time=5_000, delay=-167)
    whole = detect(s, p, seed)
    chain = DetectorChain(p, s.duration)
    state = chain.initial_state()
    edges = np.linspace(0, s.duration + 1, nseg + 1).astype(np.int64)
    parts = []
    for k in range(nseg):
        lo, hi = edges[k], edges[k + 1]
        seg = s.t[(s.t >= lo) & (s.t < hi)]
        parts.append(chain.segment(seg, lo, hi, make_rng(seed, "x", k), state, final=k == nseg - 1))
    assert np.concatenate(parts).tolist() == whole.t.tolist()


def test_calibration_pmt():
    sigma, t0 = calibrate_instrument(12_500, 10**7, HbtConfig(), seed=1)
    assert sigma == pytest.approx(213, abs=11)
    assert t0 == pytest.approx(-167, abs=12)


def test_calibration_tight():
    det = DetectorParams(efficiency=0.5, jitter_sigma=150.6)
    hbt = HbtConfig(det, DetectorParams(efficiency=0.5, jitter_sigma=150.6, delay=-167))
    sigma, t0 = calibrate_instrument(12_500, 400_000, hbt, seed=2, mean_photons=1.0)
    assert sigma == pytest.approx(213, abs=5)
    assert t0 == pytest.approx(-167, abs=5)


def test_calibration_snspd():
    hbt = HbtConfig(DEFAULT_DETECTORS["snspd1"], DEFAULT_DETECTORS["snspd2"])
    sigma, t0 = calibrate_instrument(12_500, 10**7, hbt, seed=3, bin_width=2)
    assert sigma == pytest.approx(29.2, abs=2)
    assert abs(t0) < 2


def test_calibration_zero_jitter():
    det = DetectorParams(efficiency=0.5)
    sigma, t0 = calibrate_instrument(12_500, 100_000, HbtConfig(det, det), seed=4, mean_photons=1.0)
    assert sigma == pytest.approx(0.0, abs=1.0)
    assert t0 == pytest.approx(0.0, abs=0.5)
