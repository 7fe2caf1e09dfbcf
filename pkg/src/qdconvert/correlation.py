"""Coincidence histograms between two detector channels.

Sign convention, used everywhere in the package: ``tau = t2 - t1`` where
``t1`` comes from detector 1 and ``t2`` from detector 2. Bins are half-open,
``[tau_min + k*bin_width, tau_min + (k+1)*bin_width)``.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    ConfigError,
    FormatError,
    InsufficientSidebandError,
    UnsortedInputError,
    ZeroFlatLevelError,
)
from .tags import TagStream
from .validation import check_int, check_tag_array

CSV_HEADER = "bin_center_ps,counts,normalized"
BRUTE_FORCE_LIMIT = 10**8
MIN_SIDEBAND_BINS = 10
_COUNT_LIMIT = np.iinfo(np.int64).max


@dataclass(frozen=True)
class CorrelationConfig:
    bin_width: int = 200
    tau_min: int = -10_000
    tau_max: int = 10_000
    exclusion_halfwidth: int = 3_000

    def __post_init__(self):
        bw = check_int(self.bin_width, "bin_width", minimum=1)
        lo = check_int(self.tau_min, "tau_min")
        hi = check_int(self.tau_max, "tau_max")
        ex = check_int(self.exclusion_halfwidth, "exclusion_halfwidth", minimum=0)
        if lo >= hi:
            raise ConfigError("tau_max", f"must exceed tau_min ({lo}), got {hi}")
        if (hi - lo) % bw:
            raise ConfigError("bin_width", f"must divide tau_max - tau_min = {hi - lo}")
        if not (lo < -ex and ex < hi):
            raise ConfigError("exclusion_halfwidth", f"exclusion zone +-{ex} must lie strictly inside [{lo}, {hi}]")

    @property
    def nbins(self) -> int:
        return (self.tau_max - self.tau_min) // self.bin_width

    @property
    def bin_edges(self) -> np.ndarray:
        return self.tau_min + self.bin_width * np.arange(self.nbins + 1, dtype=np.int64)

    @property
    def bin_centers(self) -> np.ndarray:
        return self.tau_min + self.bin_width * (np.arange(self.nbins) + 0.5)


@dataclass(frozen=True, eq=False)
class Histogram:
    bin_centers: np.ndarray
    counts: np.ndarray
    normalized: np.ndarray | None = None
    flat_level: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.bin_centers) != len(self.counts):
            raise ValueError("bin_centers and counts differ in length")
        if np.any(np.asarray(self.counts) < 0):
            raise ValueError("counts must be non-negative")

    @property
    def bin_width(self) -> float:
        return float(self.bin_centers[1] - self.bin_centers[0]) if len(self.bin_centers) > 1 else float("nan")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _as_times(x, name):
    if isinstance(x, TagStream):
        return x.t
    return check_tag_array(x, name)


def _meta(cfg, tags1, tags2, extra=None):
    meta = {"config": asdict(cfg)}
    if isinstance(tags1, TagStream) and isinstance(tags2, TagStream):
        T = max(tags1.duration, tags2.duration) * 1e-12
        meta.update(integration_time_s=T, rate1=len(tags1) / T, rate2=len(tags2) / T)
    if extra:
        meta.update(extra)
    return meta


def _check_overflow(n1, n2):
    if n1 * n2 > _COUNT_LIMIT:
        raise OverflowError("pair count could exceed the 64-bit bin counter")


def correlate(tags1, tags2, cfg: CorrelationConfig | None = None, threads: int = 1, chunks: int | None = None) -> Histogram:
    """Coincidence histogram of ``tau = t2 - t1`` by a sorted sliding window.

    Runs in O(N + M + P) for P in-window pairs. With ``threads`` or ``chunks``
    above one, detector-1 tags are split into contiguous chunks that each own
    their pairs; the merged histogram is identical to the serial one.
    """
    cfg = cfg or CorrelationConfig()
    t1 = _as_times(tags1, "tags1")
    t2 = _as_times(tags2, "tags2")
    _check_overflow(t1.size, t2.size)
    if threads == 0:
        threads = os.cpu_count() or 1
    nchunks = chunks if chunks is not None else threads
    nchunks = max(1, min(int(nchunks), t1.size or 1))
    if nchunks == 1:
        counts = np.zeros(cfg.nbins, np.int64)
        _kernels.window_histogram(t1, t2, 0, cfg.tau_min, cfg.bin_width, counts)
    else:
        bounds = np.linspace(0, t1.size, nchunks + 1).astype(np.int64)

        def work(c):
            a, b = bounds[c], bounds[c + 1]
            part = np.zeros(cfg.nbins, np.int64)
            if b > a:
                j0 = int(np.searchsorted(t2, t1[a] + cfg.tau_min, side="left"))
                _kernels.window_histogram(t1[a:b], t2, j0, cfg.tau_min, cfg.bin_width, part)
            return part

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            parts = list(pool.map(work, range(nchunks)))
        counts = np.sum(parts, axis=0, dtype=np.int64)
    return Histogram(cfg.bin_centers, counts, meta=_meta(cfg, tags1, tags2))


def brute_force_correlate(tags1, tags2, cfg: CorrelationConfig | None = None) -> Histogram:
    """Reference histogram from exhaustive enumeration of all N*M pairs."""
    cfg = cfg or CorrelationConfig()
    t1 = _as_times(tags1, "tags1")
    t2 = _as_times(tags2, "tags2")
    if t1.size * t2.size > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} pairs, got {t1.size * t2.size}")
    counts = np.zeros(cfg.nbins, np.int64)
    _kernels.all_pairs_histogram(t1, t2, cfg.tau_min, cfg.tau_max, cfg.bin_width, counts)
    return Histogram(cfg.bin_centers, counts, meta=_meta(cfg, tags1, tags2))


class StreamingCorrelator:
    """Incremental correlator with memory bounded by the window width.

    Call ``push(t1, t2, horizon)`` with chunks of both channels, where every
    tag earlier than ``horizon`` has now been delivered on both channels.
    Detector-1 tags are histogrammed as soon as their full window is covered.
    """

    def __init__(self, cfg: CorrelationConfig | None = None):
        self.cfg = cfg or CorrelationConfig()
        self.counts = np.zeros(self.cfg.nbins, np.int64)
        self._p1 = np.empty(0, np.int64)
        self._b2 = np.empty(0, np.int64)
        self._horizon = None
        self._last = [None, None]
        self.n1 = 0
        self.n2 = 0
        self.max_buffered = 0

    def _accept(self, t, which):
        t = check_tag_array(t, f"tags{which + 1}")
        if t.size:
            floor = self._last[which]
            if self._horizon is not None and (floor is None or floor < self._horizon):
                floor = self._horizon
            if floor is not None and t[0] < floor:
                raise UnsortedInputError(f"tags{which + 1} chunk starts at {t[0]}, before {floor}")
            self._last[which] = int(t[-1])
        return t

    def push(self, t1, t2, horizon: int):
        t1 = self._accept(t1, 0)
        t2 = self._accept(t2, 1)
        self.n1 += t1.size
        self.n2 += t2.size
        _check_overflow(self.n1, self.n2)
        p1 = np.concatenate((self._p1, t1)) if self._p1.size else t1
        b2 = np.concatenate((self._b2, t2)) if self._b2.size else t2
        cfg = self.cfg
        ready = int(np.searchsorted(p1, horizon - cfg.tau_max, side="right"))
        if ready:
            j0 = int(np.searchsorted(b2, p1[0] + cfg.tau_min, side="left"))
            _kernels.window_histogram(p1[:ready], b2, j0, cfg.tau_min, cfg.bin_width, self.counts)
        self._p1 = p1[ready:]
        keep_from = min(int(self._p1[0]), horizon) if self._p1.size else horizon
        self._b2 = b2[int(np.searchsorted(b2, keep_from + cfg.tau_min, side="left")):]
        self._horizon = int(horizon)
        self.max_buffered = max(self.max_buffered, self._p1.size + self._b2.size)

    def finish(self):
        if self._p1.size:
            j0 = int(np.searchsorted(self._b2, self._p1[0] + self.cfg.tau_min, side="left"))
            _kernels.window_histogram(self._p1, self._b2, j0, self.cfg.tau_min, self.cfg.bin_width, self.counts)
        self._p1 = self._p1[:0]
        self._b2 = self._b2[:0]

    def histogram(self, integration_time_s=None) -> Histogram:
        meta = {"config": asdict(self.cfg)}
        if integration_time_s:
            meta.update(integration_time_s=integration_time_s, rate1=self.n1 / integration_time_s,
                        rate2=self.n2 / integration_time_s)
        return Histogram(self.cfg.bin_centers, self.counts.copy(), meta=meta)

    def state(self) -> dict:
        return {
            "counts": self.counts.copy(), "p1": self._p1.copy(), "b2": self._b2.copy(),
            "horizon": self._horizon, "last": list(self._last), "n1": self.n1, "n2": self.n2,
            "max_buffered": self.max_buffered,
        }

    def restore(self, s: dict):
        self.counts = s["counts"].copy()
        self._p1, self._b2 = s["p1"].copy(), s["b2"].copy()
        self._horizon, self._last = s["horizon"], list(s["last"])
        self.n1, self.n2, self.max_buffered = s["n1"], s["n2"], s["max_buffered"]


def sideband_mask(centers, cfg: CorrelationConfig) -> np.ndarray:
    """Bins used for the flat level: outside the central exclusion zone and
    not the outermost bin on either side."""
    mask = np.abs(np.asarray(centers)) > cfg.exclusion_halfwidth
    mask[0] = mask[-1] = False
    return mask


def normalize(h: Histogram, cfg: CorrelationConfig | None = None) -> Histogram:
    """Divide counts by the mean sideband level (outside +-exclusion_halfwidth)."""
    cfg = cfg or CorrelationConfig(**h.meta["config"])
    mask = sideband_mask(h.bin_centers, cfg)
    if mask.sum() < MIN_SIDEBAND_BINS:
        raise InsufficientSidebandError(f"only {int(mask.sum())} sideband bins, need {MIN_SIDEBAND_BINS}")
    flat = float(h.counts[mask].mean())
    if flat <= 0:
        raise ZeroFlatLevelError("sideband mean is zero; nothing to normalize to")
    return Histogram(h.bin_centers, h.counts, h.counts / flat, flat, dict(h.meta, flat_level=flat))


def expected_flat(r1, r2, bin_width, T) -> float:
    """Accidental coincidences per bin, r1 * r2 * bin_width * T (rates in 1/s,
    bin width in ps, T in s)."""
    if min(r1, r2, bin_width, T) < 0:
        raise ValueError("rates, bin width and duration must be non-negative")
    return r1 * r2 * bin_width * 1e-12 * T


def _fmt_center(c):
    c = float(c)
    return str(int(c)) if c.is_integer() else repr(c)


def write_histogram_csv(h: Histogram, path, extra_meta: dict | None = None) -> str:
    """Write ``h`` as CSV plus a ``<stem>.meta.json`` sidecar; returns the sidecar path."""
    lines = [CSV_HEADER]
    for k in range(len(h.counts)):
        norm = "" if h.normalized is None else repr(float(h.normalized[k]))
        lines.append(f"{_fmt_center(h.bin_centers[k])},{int(h.counts[k])},{norm}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = dict(h.meta)
    meta["flat_level"] = h.flat_level
    if extra_meta:
        meta.update(extra_meta)
    side = sidecar_path(path)
    with open(side, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return side


def sidecar_path(path) -> str:
    path = os.fspath(path)
    stem = path[:-4] if path.endswith(".csv") else path
    return stem + ".meta.json"


def read_histogram_csv(path) -> Histogram:
    with open(path, "rb") as fh:
        raw = fh.read()
    offset = 0
    centers, counts, norms = [], [], []
    for lineno, line in enumerate(raw.split(b"\n")):
        text = line.decode("utf-8", errors="replace").rstrip("\r")
        if lineno == 0:
            if text != CSV_HEADER:
                raise FormatError(f"expected header {CSV_HEADER!r}, got {text!r}", offset=0)
        elif text:
            parts = text.split(",")
            try:
                if len(parts) != 3:
                    raise ValueError
                centers.append(float(parts[0]))
                counts.append(int(parts[1]))
                norms.append(float(parts[2]) if parts[2] else None)
            except ValueError:
                raise FormatError(f"malformed histogram row {text!r}", offset=offset) from None
        offset += len(line) + 1
    if len(centers) < 2:
        raise FormatError("histogram needs at least two rows", offset=len(raw))
    counts_a = np.asarray(counts, np.int64)
    if np.any(counts_a < 0):
        raise FormatError("negative counts", offset=None)
    meta = {}
    side = sidecar_path(path)
    if os.path.exists(side):
        with open(side, encoding="utf-8") as fh:
            meta = json.load(fh)
    normalized = None
    flat = meta.get("flat_level")
    if all(n is not None for n in norms):
        normalized = np.asarray(norms, float)
        if flat is None:
            nz = np.flatnonzero(normalized > 0)
            if nz.size:
                flat = float(counts_a[nz[0]] / normalized[nz[0]])
    return Histogram(np.asarray(centers), counts_a, normalized, flat, meta)
