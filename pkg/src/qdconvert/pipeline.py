"""End-to-end simulation: source, conversion, background, HBT detection, correlation.

Time is processed in segments of ``config.segment_ps``. Every stochastic stage
draws from a generator keyed by (seed, stage, segment index), and all state
that crosses a segment boundary (emitter phase, detector hold-back buffers and
dead time, correlator window) is explicit. That makes runs resumable from a
checkpoint with results identical to an uninterrupted run.

Two equivalent sampling paths exist. The literal path generates every emitted
photon and applies each loss as its own Bernoulli stage. The fast path merges
all losses up to and including detector efficiency into a single keep
probability and samples only the survivors, which follow the same law.
"""

from __future__ import annotations

import hashlib
import json
import os
import pickle
from dataclasses import dataclass, field

import numpy as np

from .analysis import (
    BackgroundBudget,
    FitResult,
    background_corrected_g2,
    decompose_coincidences,
    expected_rates,
    fit_convolved_dip,
    fit_dip,
)
from .config import PipelineConfig, config_to_dict
from .conversion import efficiency, thin, uspdc_rate
from .correlation import Histogram, StreamingCorrelator, normalize
from .detection import DetectorChain
from .errors import DegenerateDataError, NormalizationError
from .rng import make_rng
from .source import PoissonSampler, QuantumDotSampler
from .tags import TagWriter

CHECKPOINT_VERSION = 1
TAP_STAGES = ("source", "converted", "background", "detected")


def config_digest(config: PipelineConfig) -> str:
    blob = json.dumps(config_to_dict(config), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def n_segments(config: PipelineConfig) -> int:
    # tags live on [0, duration], so the last segment ends at duration + 1
    return -(-(config.duration + 1) // config.segment_ps)


@dataclass
class PipelineResult:
    config: PipelineConfig
    histogram: Histogram
    budget: BackgroundBudget
    fit: FitResult | None = None
    corrected_g2: float | None = None
    counters: dict = field(default_factory=dict)

    @property
    def measured_rates(self) -> tuple[float, float]:
        T = self.config.duration_s
        return self.counters["detected1"] / T, self.counters["detected2"] / T

    def report(self) -> dict:
        r1, r2 = self.measured_rates
        return {
            "fit": None if self.fit is None else self.fit.to_dict(),
            "corrected_g2": self.corrected_g2,
            "budget": self.budget.to_dict(),
            "flat_level": self.histogram.flat_level,
            "measured_rate1": r1,
            "measured_rate2": r2,
            "counters": dict(self.counters),
        }


class _Engine:
    """Per-segment sampling for one configuration."""

    def __init__(self, config: PipelineConfig, literal: bool):
        self.cfg = config
        self.literal = literal
        hbt = config.hbt
        src = config.source
        P = config.pump_power
        if config.conversion is not None:
            self.eta = efficiency(config.conversion, P, temp=config.crystal_temp)
            self.filter_t = config.filter.peak_transmission if config.filter is not None else 1.0
            self.bg_crystal = uspdc_rate(config.uspdc, P) if config.uspdc is not None else 0.0
            self.bg_pass = 1.0 / config.filter.background_suppression if config.filter is not None else 1.0
        else:
            self.eta, self.filter_t, self.bg_crystal, self.bg_pass = 1.0, 1.0, 0.0, 1.0
        opt = config.optics_transmission
        signal_keep = (1.0 - config.coupler_loss) * self.eta * opt * self.filter_t
        bg_keep = opt * self.bg_pass
        s, e1, e2 = hbt.split_ratio, hbt.det1.efficiency, hbt.det2.efficiency
        if literal:
            self.q = 1.0
            self.p1 = s
            src_keep = 1.0
            self.signal_keep = signal_keep
            bg_rate = self.bg_crystal
        else:
            self.q = s * e1 + (1.0 - s) * e2
            self.p1 = s * e1 / self.q
            src_keep = signal_keep * self.q
            bg_rate = self.bg_crystal * bg_keep * self.q
        self.source = None
        if src.rate > 0 and src_keep > 0:
            if src.kind == "quantum_dot":
                self.source = QuantumDotSampler(src.params, src.rate, keep=src_keep)
            else:
                self.source = PoissonSampler(src.rate * src_keep)
        self.background = PoissonSampler(bg_rate) if bg_rate > 0 else None
        self.bg_keep = bg_keep
        self.det1 = DetectorChain(hbt.det1, config.duration, apply_efficiency=literal)
        self.det2 = DetectorChain(hbt.det2, config.duration, apply_efficiency=literal)
        self.margin = max(self.det1.margin, self.det2.margin)

    def initial_state(self):
        return {
            "source": self.source.initial_state() if self.source is not None else None,
            "det1": self.det1.initial_state(),
            "det2": self.det2.initial_state(),
        }

    def run_segment(self, i, lo, hi, state, final, counters, taps):
        seed = self.cfg.seed
        empty = np.empty(0, np.int64)
        sig = empty
        if self.source is not None:
            sig = self.source.segment(lo, hi, make_rng(seed, "source", i), state["source"])
        if "source" in taps:
            taps["source"].write(sig, 0)
        if self.literal:
            sig = thin(sig, self.signal_keep, make_rng(seed, "transmit", i))
        if "converted" in taps:
            taps["converted"].write(sig, 0)
        bg = empty
        if self.background is not None:
            bg = self.background.segment(lo, hi, make_rng(seed, "uspdc", i), None)
            if self.literal:
                bg = thin(bg, self.bg_keep, make_rng(seed, "bg_transmit", i))
        if "background" in taps:
            taps["background"].write(bg, 0)
        counters["signal"] += int(sig.size)
        counters["background"] += int(bg.size)
        photons = np.concatenate((sig, bg)) if bg.size else sig
        if bg.size and sig.size:
            photons.sort()
        to1 = make_rng(seed, "route", i).random(photons.size) < self.p1
        d1 = self.det1.segment(photons[to1], lo, hi, make_rng(seed, "detect", 1, i), state["det1"], final)
        d2 = self.det2.segment(photons[~to1], lo, hi, make_rng(seed, "detect", 2, i), state["det2"], final)
        counters["detected1"] += int(d1.size)
        counters["detected2"] += int(d2.size)
        if "detected" in taps:
            taps["detected"].write(d1, 1)
            taps["detected"].write(d2, 2)
        return d1, d2


def _atomic_pickle(obj, path):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        pickle.dump(obj, fh, protocol=pickle.HIGHEST_PROTOCOL)
    os.replace(tmp, path)


def simulate(config: PipelineConfig, taps: dict | None = None, checkpoint_path=None, checkpoint_every=None,
             resume=False, stop_after=None, progress=None, literal=None):
    """Run the segmented simulation and return the correlator plus counters.

    ``taps`` maps stage names from ``TAP_STAGES`` to output paths for ``TTG1``
    tag files. ``stop_after`` ends the run early after that many segments
    (used to emulate interruptions); the return value is then ``None``.

    Counters ``signal`` and ``background`` count photons that reach the
    splitter. On the fused path detector efficiency is folded into the
    thinning, so they already exclude photons the detectors would miss;
    ``detected1``/``detected2`` mean the same on both paths.
    """
    literal = (not config.fast_thinning) if literal is None else literal
    engine = _Engine(config, literal)
    corr = StreamingCorrelator(config.correlation)
    state = engine.initial_state()
    counters = {"signal": 0, "background": 0, "detected1": 0, "detected2": 0}
    start = 0
    offsets = {}
    digest = config_digest(config)
    if resume and checkpoint_path and os.path.exists(checkpoint_path):
        with open(checkpoint_path, "rb") as fh:
            ck = pickle.load(fh)
        if ck.get("version") != CHECKPOINT_VERSION or ck.get("config_digest") != digest:
            raise ValueError("checkpoint belongs to a different configuration")
        if ck.get("literal") != literal or set(ck["tap_offsets"]) != set(taps or {}):
            raise ValueError("checkpoint was written with different sampling or tag outputs")
        start, state, counters, offsets = ck["next_segment"], ck["state"], ck["counters"], ck["tap_offsets"]
        corr.restore(ck["correlator"])
    writers = {}
    try:
        for stage, path in (taps or {}).items():
            if stage not in TAP_STAGES:
                raise ValueError(f"unknown tag output {stage!r}; choose from {TAP_STAGES}")
            if literal is False and stage in ("source", "converted", "background"):
                raise ValueError(f"tag output {stage!r} needs the literal sampling path")
            writers[stage] = TagWriter(path, config.duration, f"{stage}", resume_offset=offsets.get(stage))
        n = n_segments(config)
        seg = config.segment_ps
        done = 0
        for i in range(start, n):
            lo = i * seg
            hi = min(lo + seg, config.duration + 1)
            final = i == n - 1
            d1, d2 = engine.run_segment(i, lo, hi, state, final, counters, writers)
            if final:
                corr.push(d1, d2, hi)
                corr.finish()
            else:
                corr.push(d1, d2, hi - engine.margin)
            done += 1
            if progress is not None:
                progress(i + 1, n)
            if checkpoint_path and checkpoint_every and not final and (i + 1) % checkpoint_every == 0:
                _atomic_pickle({
                    "version": CHECKPOINT_VERSION, "config_digest": digest, "literal": literal,
                    "next_segment": i + 1, "state": state, "counters": counters,
                    "correlator": corr.state(), "tap_offsets": {k: w.offset for k, w in writers.items()},
                }, checkpoint_path)
            if stop_after is not None and done >= stop_after and not final:
                return None
    finally:
        for w in writers.values():
            w.close()
    if checkpoint_path and os.path.exists(checkpoint_path):
        os.remove(checkpoint_path)
    return corr, counters


def measured_budget(config: PipelineConfig, r1: float, r2: float) -> BackgroundBudget:
    """Budget from measured arm rates: background from the model, signal the remainder."""
    exp = expected_rates(config)
    rb1, rb2 = exp["r_b1"], exp["r_b2"]
    return decompose_coincidences(max(r1 - rb1, 0.0), max(r2 - rb2, 0.0), rb1, rb2,
                                  config.correlation.bin_width, config.duration_s)


def analyze(config: PipelineConfig, hist: Histogram, counters: dict) -> PipelineResult:
    T = config.duration_s
    budget = measured_budget(config, counters["detected1"] / T, counters["detected2"] / T)
    result = PipelineResult(config, hist, budget, counters=dict(counters))
    if config.source.rate > 0 and counters["signal"] == 0:
        raise DegenerateDataError("zero signal: no source photons survived to the detectors; "
                                  "nothing to fit (is the pump power 0?)")
    try:
        hist = normalize(hist, config.correlation)
    except NormalizationError as exc:
        raise DegenerateDataError(f"cannot normalize histogram: {exc}") from None
    result.histogram = hist
    a = config.analysis
    if a.model == "eq1":
        fit = fit_dip(hist)
    else:
        fit = fit_convolved_dip(hist, a.sigma, a.t0)
    result.fit = fit
    if budget.ss > 0:
        result.corrected_g2 = background_corrected_g2(fit.g2_at_dip, budget)
    return result


def run_pipeline(config: PipelineConfig, checkpoint_path=None, checkpoint_every=None, resume=False,
                 taps=None, progress=None) -> PipelineResult:
    """Simulate, correlate, normalize and fit one configuration."""
    out = simulate(config, taps=taps, checkpoint_path=checkpoint_path, checkpoint_every=checkpoint_every,
                   resume=resume, progress=progress)
    corr, counters = out
    hist = corr.histogram(config.duration_s)
    return analyze(config, hist, counters)


def expected_flat_level(config: PipelineConfig) -> float:
    r = expected_rates(config)
    return (r["r_s1"] + r["r_b1"]) * (r["r_s2"] + r["r_b2"]) * config.correlation.bin_width * 1e-12 * config.duration_s


__all__ = ["PipelineResult", "run_pipeline", "simulate", "analyze", "measured_budget", "n_segments",
           "config_digest", "expected_flat_level", "TAP_STAGES"]
