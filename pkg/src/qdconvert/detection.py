"""Hanbury Brown-Twiss detection chain.

A 50:50 splitter routes every photon to one of two detectors. Each detector
thins by its efficiency, adds its fixed delay plus Gaussian timing jitter,
merges Poisson dark counts and finally enforces a non-paralyzable dead time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from . import _kernels
from .conversion import thin
from .errors import CalibrationError, ConfigError
from .rng import make_rng
from .source import PoissonSampler
from .tags import TagStream
from .validation import check_positive, check_probability

# jitter is truncated here so that streamed segments can be released exactly
JITTER_CLIP_SIGMAS = 40.0


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float
    jitter_sigma: float = 0.0
    dark_rate: float = 0.0
    dead_time: float = 0.0
    delay: float = 0.0

    def __post_init__(self):
        check_probability(self.efficiency, "efficiency", low_open=True)
        check_positive(self.jitter_sigma, "jitter_sigma", allow_zero=True)
        check_positive(self.dark_rate, "dark_rate", allow_zero=True)
        check_positive(self.dead_time, "dead_time", allow_zero=True)
        if not math.isfinite(float(self.delay)):
            raise ConfigError("delay", "must be finite")


# Pair jitter of the UV chain (213 ps) split equally over both PMTs; the
# differential delay sits on detector 2 so that tau = t2 - t1 peaks at -167 ps.
PMT_JITTER = 213.0 / math.sqrt(2.0)

DEFAULT_DETECTORS = {
    "snspd1": DetectorParams(efficiency=0.80, jitter_sigma=18.0, dark_rate=50.0, dead_time=20_000.0),
    "snspd2": DetectorParams(efficiency=0.80, jitter_sigma=23.0, dark_rate=50.0, dead_time=20_000.0),
    "pmt1": DetectorParams(efficiency=0.36, jitter_sigma=PMT_JITTER, dark_rate=5.0, dead_time=18_000.0),
    "pmt2": DetectorParams(
        efficiency=0.40, jitter_sigma=PMT_JITTER, dark_rate=20.0, dead_time=18_000.0, delay=-167.0
    ),
}


@dataclass(frozen=True)
class HbtConfig:
    det1: DetectorParams = field(default_factory=lambda: DEFAULT_DETECTORS["pmt1"])
    det2: DetectorParams = field(default_factory=lambda: DEFAULT_DETECTORS["pmt2"])
    split_ratio: float = 0.5

    def __post_init__(self):
        check_probability(self.split_ratio, "split_ratio", low_open=True, high_open=True)

    @property
    def pair_jitter(self) -> float:
        return math.hypot(self.det1.jitter_sigma, self.det2.jitter_sigma)

    @property
    def differential_delay(self) -> float:
        return self.det2.delay - self.det1.delay


def route(n: int, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask: True where a photon goes to output 1."""
    return rng.random(n) < ratio


def hbt_split(stream: TagStream, ratio=0.5, seed=0, channels=(1, 2)) -> tuple[TagStream, TagStream]:
    """Route each tag to output 1 with probability ``ratio``, otherwise to output 2."""
    check_probability(ratio, "ratio", low_open=True, high_open=True)
    to1 = route(len(stream), ratio, make_rng(seed, "split"))
    out1 = stream.replace(t=stream.t[to1], channel=np.full(int(to1.sum()), channels[0], np.uint8),
                          origin_label=f"{stream.origin_label} arm1")
    out2 = stream.replace(t=stream.t[~to1], channel=np.full(int((~to1).sum()), channels[1], np.uint8),
                          origin_label=f"{stream.origin_label} arm2")
    return out1, out2


class DetectorChain:
    """Streaming detector model with state carried across time segments.

    Tags fed for segment ``[lo, hi)`` must lie in that interval. Output tags
    earlier than ``hi - margin`` are final; later ones are held back until the
    next segment because jitter can reorder them with tags not yet seen.
    """

    def __init__(self, params: DetectorParams, duration: int, apply_efficiency=True):
        self.params = params
        self.duration = int(duration)
        self.apply_efficiency = apply_efficiency
        self.delay = int(round(params.delay))
        self.clip = JITTER_CLIP_SIGMAS * params.jitter_sigma
        self.margin = abs(self.delay) + int(math.ceil(self.clip)) + 1
        self.dark = PoissonSampler(params.dark_rate)
        self.dead_time = int(round(params.dead_time))

    def initial_state(self):
        return {"held": np.empty(0, np.int64), "last": _kernels.NEG_INF_PS}

    def segment(self, t, lo, hi, rng, state, final=False) -> np.ndarray:
        p = self.params
        if self.apply_efficiency:
            t = thin(t, p.efficiency, rng)
        if p.jitter_sigma > 0:
            j = np.clip(rng.normal(0.0, p.jitter_sigma, t.size), -self.clip, self.clip)
            t = t + (self.delay + np.rint(j).astype(np.int64))
        elif self.delay:
            t = t + self.delay
        dark = self.dark.segment(lo, hi, rng, None)
        merged = np.concatenate((state["held"], t, dark))
        merged.sort()
        if final:
            out, state["held"] = merged, merged[:0]
        else:
            cut = int(np.searchsorted(merged, hi - self.margin, side="left"))
            out, state["held"] = merged[:cut], merged[cut:]
        if self.dead_time > 0 and out.size:
            keep, state["last"] = _kernels.dead_time_mask(out, self.dead_time, state["last"])
            out = out[keep]
        if out.size and (out[0] < 0 or out[-1] > self.duration):
            out = out[(out >= 0) & (out <= self.duration)]
        return out


def detect(stream: TagStream, params: DetectorParams, seed=0, channel=None) -> TagStream:
    """Apply one detector to a whole stream.

    The random stream is keyed by ``seed`` and the output ``channel``, so the two
    arms of an HBT setup draw independently under a shared seed.
    """
    if channel is None:
        channel = int(stream.channel[0]) if len(stream) else 0
    chain = DetectorChain(params, stream.duration)
    rng = make_rng(seed, "detect", channel)
    t = chain.segment(stream.t, 0, stream.duration + 1, rng, chain.initial_state(), final=True)
    return TagStream(t, stream.duration, f"{stream.origin_label} detected",
                     np.full(t.size, channel, np.uint8), stream.wavelength_nm)


def _fit_gaussian_peak(centers, counts, bin_width):
    w = counts.astype(float)
    n = w.sum()
    mu0 = float(np.dot(w, centers) / n)
    var0 = float(np.dot(w, (centers - mu0) ** 2) / n)
    s0 = math.sqrt(max(var0 - bin_width**2 / 12.0, 0.0))
    if s0 < 2 * bin_width:
        # peak narrower than a couple of bins: moments are as good as a fit
        return s0, mu0
    lo_edges = centers - 0.5 * bin_width
    hi_edges = centers + 0.5 * bin_width
    counts = counts.astype(float)

    def model(p):
        amp, mu, s, bg = p
        return amp * (ndtr((hi_edges - mu) / s) - ndtr((lo_edges - mu) / s)) + bg

    def nll(p):
        # Poisson likelihood; bins hold only a few counts each
        m = np.maximum(model(p), 1e-300)
        return float(np.sum(m - counts * np.log(m)))

    bg0 = float(np.median(counts))
    start = [max(n - bg0 * counts.size, 1.0), mu0, max(s0, bin_width), bg0]
    bounds = [(0, None), (centers[0], centers[-1]), (1e-3, None), (0, None)]
    res = minimize(nll, start, method="L-BFGS-B", bounds=bounds)
    res = minimize(nll, res.x, method="Nelder-Mead", options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 4000})
    if not np.all(np.isfinite(res.x)):
        raise CalibrationError(f"Gaussian peak fit failed: {res.message}")
    return abs(float(res.x[2])), float(res.x[1])


def calibrate_instrument(pulse_period, pulse_count, hbt: HbtConfig, seed=0, mean_photons=0.1,
                         bin_width=4) -> tuple[float, float]:
    """Recover pair jitter ``sigma`` and differential delay ``t0`` from a pulse train.

    Each pulse carries Poisson(``mean_photons``) photons, which are split and
    detected; the cross-correlation peak within +-pulse_period/2 is fitted with
    a Gaussian by Poisson likelihood. Keep ``mean_photons`` well below one:
    with dead time, a detector that sees two photons from one pulse keeps
    only the earlier, which narrows the apparent jitter.
    """
    from .correlation import CorrelationConfig, correlate

    pulse_period = int(pulse_period)
    if pulse_period <= 0:
        raise ValueError("pulse_period must be > 0")
    if bin_width % 2:
        raise ValueError("bin_width must be even so a bin is centered on tau = 0")
    rng = make_rng(seed, "calibration")
    pulses = pulse_period * np.arange(1, pulse_count + 1, dtype=np.int64)
    t = np.repeat(pulses, rng.poisson(mean_photons, pulse_count))
    duration = pulse_period * (pulse_count + 1)
    stream = TagStream(t, duration, "pulse train")
    arm1, arm2 = hbt_split(stream, hbt.split_ratio, seed)
    d1 = detect(arm1, hbt.det1, seed)
    d2 = detect(arm2, hbt.det2, seed)
    half = bin_width // 2
    nside = (pulse_period // 2 - half) // bin_width
    cfg = CorrelationConfig(bin_width=bin_width, tau_min=-half - nside * bin_width,
                            tau_max=half + nside * bin_width, exclusion_halfwidth=bin_width)
    h = correlate(d1, d2, cfg)
    if h.counts.sum() < 10:
        raise CalibrationError(f"no correlation peak found within +-{pulse_period / 2:g} ps")
    sigma, t0 = _fit_gaussian_peak(h.bin_centers, h.counts, bin_width)
    if abs(t0) >= pulse_period / 2:
        raise CalibrationError(f"peak at {t0:g} ps lies outside +-{pulse_period / 2:g} ps")
    return sigma, t0
