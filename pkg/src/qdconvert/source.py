"""Photon emission streams: quantum-dot renewal process and coherent light.

The quantum dot is a two-step renewal process. After each emission the dot
waits an exponential refill time (rate ``r``) and then an exponential radiative
time (rate ``1/tau_rad``), giving ``g2(tau) = 1 - exp(-|tau| / tau0)`` with
``tau0 = 1 / (1/tau_rad + r)``. A fraction of the output can be replaced by
Poisson photons, which lowers the dip contrast to ``(1 - background_fraction)**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import make_rng
from .tags import TagStream
from .validation import check_int, check_positive

BIEXCITON_NM = 853.42
EXCITON_NM = 850.8

PS_PER_S = 1e12
# refill rate may not exceed this multiple of the radiative rate
MAX_REFILL_RATIO = 1e3


@dataclass(frozen=True)
class EmitterParams:
    tau_rad: float
    reexcite_rate: float | None = None
    wavelength: float = BIEXCITON_NM
    background_fraction: float = 0.0

    def __post_init__(self):
        check_positive(self.tau_rad, "tau_rad")
        if self.reexcite_rate is not None:
            check_positive(self.reexcite_rate, "reexcite_rate")
        check_positive(self.wavelength, "wavelength")
        bf = float(self.background_fraction)
        if not 0 <= bf < 1:
            raise ConfigError("background_fraction", f"must lie in [0, 1), got {bf!r}")

    @property
    def contrast(self) -> float:
        return (1.0 - self.background_fraction) ** 2

    def refill_rate(self, rate: float) -> float:
        """Refill rate ``r`` (1/s) that yields a total output ``rate`` (1/s)."""
        signal_rate = (1.0 - self.background_fraction) * rate
        if signal_rate <= 0:
            raise ValueError("rate must be > 0")
        denom_ps = PS_PER_S / signal_rate - self.tau_rad
        if denom_ps <= 0:
            raise ValueError(
                f"rate {rate:g}/s is unreachable with tau_rad = {self.tau_rad:g} ps "
                "(required refill rate is non-positive)"
            )
        r = PS_PER_S / denom_ps
        if r * self.tau_rad / PS_PER_S > MAX_REFILL_RATIO:
            raise ValueError(f"rate {rate:g}/s needs a nonphysical refill rate {r:g}/s")
        if self.reexcite_rate is not None and not math.isclose(r, self.reexcite_rate, rel_tol=1e-2):
            raise ValueError(
                f"reexcite_rate {self.reexcite_rate:g}/s is inconsistent with rate {rate:g}/s "
                f"(requires {r:g}/s)"
            )
        return r

    def tau0(self, rate: float) -> float:
        """Antibunching time constant 1/(gamma + r) in ps."""
        r_ps = self.refill_rate(rate) / PS_PER_S
        return 1.0 / (1.0 / self.tau_rad + r_ps)


def emitter_for_lifetime(tau0, rate, background_fraction=0.0, wavelength=BIEXCITON_NM) -> EmitterParams:
    """Emitter whose dip time constant at output ``rate`` equals ``tau0`` (ps)."""
    period = PS_PER_S / ((1.0 - background_fraction) * rate)
    disc = period * period - 4.0 * tau0 * period
    if disc < 0:
        raise ValueError(f"tau0 = {tau0:g} ps cannot be reached at rate {rate:g}/s")
    tau_rad = 0.5 * (period - math.sqrt(disc))
    return EmitterParams(tau_rad=tau_rad, wavelength=wavelength, background_fraction=background_fraction)


def background_fraction_for_contrast(a: float) -> float:
    if not 0 < a <= 1:
        raise ValueError(f"contrast must lie in (0, 1], got {a}")
    return 1.0 - math.sqrt(a)


@dataclass(frozen=True)
class SourceSpec:
    kind: str
    rate: float
    params: EmitterParams | None = None
    duration: int | None = None
    seed: int = 0
    wavelength: float = BIEXCITON_NM

    def __post_init__(self):
        if self.kind not in ("quantum_dot", "coherent"):
            raise ConfigError("kind", f"must be 'quantum_dot' or 'coherent', got {self.kind!r}")
        # rate 0 switches the source off inside a pipeline (background-only runs)
        check_positive(self.rate, "rate", allow_zero=True)
        if self.kind == "quantum_dot":
            if self.params is None:
                raise ConfigError("params", "required for kind 'quantum_dot'")
            if self.rate > 0:
                try:
                    self.params.refill_rate(self.rate)
                except ValueError as exc:
                    raise ConfigError("rate", str(exc)) from None
        elif self.params is not None:
            raise ConfigError("params", "only allowed for kind 'quantum_dot'")
        if self.duration is not None:
            check_int(self.duration, "duration", minimum=1)
        check_int(self.seed, "seed", minimum=0)
        check_positive(self.wavelength, "wavelength")

    @property
    def label_wavelength(self) -> float:
        return self.params.wavelength if self.params is not None else self.wavelength


def theoretical_g2(a, tau0, t0, tau):
    """Antibunching dip ``1 - a * exp(-|tau - t0| / tau0)``."""
    return 1.0 - a * np.exp(-np.abs(np.asarray(tau, dtype=float) - t0) / tau0)


class PoissonSampler:
    """Homogeneous Poisson tags at ``rate`` (1/s), generated per time segment."""

    def __init__(self, rate: float):
        self.rate = float(rate)

    def initial_state(self):
        return {}

    def segment(self, lo: int, hi: int, rng: np.random.Generator, state) -> np.ndarray:
        if self.rate <= 0 or hi <= lo:
            return np.empty(0, np.int64)
        n = rng.poisson(self.rate * (hi - lo) / PS_PER_S)
        t = rng.integers(lo, hi, size=n, dtype=np.int64)
        t.sort()
        return t


class QuantumDotSampler:
    """Renewal-process emitter, optionally pre-thinned by ``keep``.

    Independent Bernoulli thinning with probability ``keep`` of this renewal
    process is again a renewal process: the gap between kept photons is the
    sum of K ~ Geometric(keep) original gaps, i.e. Gamma(K, 1/r) + Gamma(K, tau_rad).
    Sampling that directly avoids generating photons that would be discarded.
    """

    def __init__(self, params: EmitterParams, rate: float, keep: float = 1.0):
        if not 0 < keep <= 1:
            raise ValueError(f"keep must lie in (0, 1], got {keep}")
        self.params = params
        self.rate = float(rate)
        self.keep = float(keep)
        self.refill_mean = PS_PER_S / params.refill_rate(rate)
        self.tau_rad = float(params.tau_rad)
        self.background = PoissonSampler(params.background_fraction * rate * keep)
        self.mean_gap = (self.refill_mean + self.tau_rad) / self.keep

    def _gaps(self, rng, n):
        if self.keep == 1.0:
            g = rng.exponential(self.refill_mean, n) + rng.exponential(self.tau_rad, n)
        else:
            k = rng.geometric(self.keep, n).astype(float)
            g = rng.gamma(k, self.refill_mean) + rng.gamma(k, self.tau_rad)
        return np.rint(g).astype(np.int64)

    def initial_state(self):
        return {"next_t": None}

    def segment(self, lo: int, hi: int, rng: np.random.Generator, state) -> np.ndarray:
        t = state["next_t"]
        if t is None:
            # dot starts empty at t = 0
            t = int(self._gaps(rng, 1)[0])
        parts = []
        while t < hi:
            n = int((hi - t) / self.mean_gap * 1.05) + 16
            times = t + np.concatenate(([0], np.cumsum(self._gaps(rng, n))))
            inside = int(np.searchsorted(times[:-1], hi, side="left"))
            if inside < n:
                parts.append(times[:inside])
                t = int(times[inside])
                break
            parts.append(times[:-1])
            t = int(times[-1])
        state["next_t"] = t
        sig = np.concatenate(parts) if parts else np.empty(0, np.int64)
        bg = self.background.segment(lo, hi, rng, None)
        if bg.size == 0:
            return sig
        out = np.concatenate((sig, bg))
        out.sort()
        return out


def _single_segment(sampler, duration, rng) -> np.ndarray:
    return sampler.segment(0, int(duration) + 1, rng, sampler.initial_state())


def gen_qd_stream(spec: SourceSpec) -> TagStream:
    """Quantum-dot emission stream for ``spec`` (kind ``quantum_dot``)."""
    if spec.kind != "quantum_dot":
        raise ValueError("gen_qd_stream needs a quantum_dot SourceSpec")
    if spec.rate <= 0:
        raise ValueError("rate must be > 0")
    if spec.duration is None:
        raise ValueError("SourceSpec.duration is required")
    sampler = QuantumDotSampler(spec.params, spec.rate)
    t = _single_segment(sampler, spec.duration, make_rng(spec.seed, "source"))
    return TagStream(t, spec.duration, "XX emission", wavelength_nm=spec.params.wavelength)


def gen_coherent_stream(rate: float, duration: int, seed, wavelength=BIEXCITON_NM, label="coherent") -> TagStream:
    """Homogeneous Poisson stream (exponential inter-arrival times, mean 1/rate)."""
    if not rate > 0:
        raise ValueError(f"rate must be > 0, got {rate}")
    return poisson_stream(rate, duration, seed, wavelength=wavelength, label=label)


def poisson_stream(rate, duration, seed, wavelength=None, label="poisson", stage="source") -> TagStream:
    if rate < 0:
        raise ValueError(f"rate must be >= 0, got {rate}")
    duration = int(duration)
    t = _single_segment(PoissonSampler(rate), duration, make_rng(seed, stage))
    return TagStream(t, duration, label, wavelength_nm=wavelength)
