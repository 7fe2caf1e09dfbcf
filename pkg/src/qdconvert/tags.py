"""Time-tag streams and the ``TTG1`` binary file format.

File layout (all integers little-endian)::

    b"TTG1"
    int64    duration (ps)
    uint32   n, followed by n bytes of UTF-8 origin label
    records  packed (uint8 channel, int64 t) pairs, 9 bytes each, until EOF

Records are sorted by ``t`` within each channel.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .validation import check_tag_array

MAGIC = b"TTG1"
RECORD_DTYPE = np.dtype([("channel", "u1"), ("t", "<i8")])  # packed, itemsize 9
_HEADER = struct.Struct("<4sqI")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TagStream:
    """Time-ordered photon or detection timestamps in integer picoseconds."""

    t: np.ndarray
    duration: int
    origin_label: str = ""
    channel: np.ndarray | None = None
    wavelength_nm: float | None = field(default=None)

    def __post_init__(self):
        duration = int(self.duration)
        if duration <= 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        t = check_tag_array(self.t, "t").copy()
        if t.size and (t[0] < 0 or t[-1] > duration):
            raise ValueError("tags must satisfy 0 <= t <= duration")
        if self.channel is None:
            ch = np.zeros(t.size, dtype=np.uint8)
        else:
            ch = np.asarray(self.channel)
            if ch.ndim == 0:
                ch = np.full(t.size, int(ch), dtype=np.uint8)
            ch = ch.astype(np.uint8).copy()
            if ch.shape != t.shape:
                raise ValueError("channel and t must have the same length")
        object.__setattr__(self, "duration", duration)
        object.__setattr__(self, "t", _readonly(t))
        object.__setattr__(self, "channel", _readonly(ch))

    def __len__(self):
        return int(self.t.size)

    def __eq__(self, other):
        if not isinstance(other, TagStream):
            return NotImplemented
        return (
            self.duration == other.duration
            and self.origin_label == other.origin_label
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.channel, other.channel)
        )

    @property
    def channels(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.channel))

    @property
    def rate(self) -> float:
        """Mean tag rate in counts per second."""
        return len(self) / (self.duration * 1e-12)

    def select(self, channel: int) -> "TagStream":
        keep = self.channel == channel
        return self.replace(t=self.t[keep], channel=self.channel[keep])

    def replace(self, **changes) -> "TagStream":
        kw = dict(
            t=self.t,
            duration=self.duration,
            origin_label=self.origin_label,
            channel=self.channel,
            wavelength_nm=self.wavelength_nm,
        )
        kw.update(changes)
        return TagStream(**kw)

    @classmethod
    def empty(cls, duration, origin_label="", wavelength_nm=None):
        return cls(np.empty(0, np.int64), duration, origin_label, wavelength_nm=wavelength_nm)


def merge_streams(*streams: TagStream, origin_label: str | None = None) -> TagStream:
    """Merge streams of equal duration into one time-ordered stream (stable)."""
    if not streams:
        raise ValueError("nothing to merge")
    duration = streams[0].duration
    if any(s.duration != duration for s in streams):
        raise ValueError("cannot merge streams of different duration")
    t = np.concatenate([s.t for s in streams])
    ch = np.concatenate([s.channel for s in streams])
    order = np.argsort(t, kind="stable")
    label = origin_label if origin_label is not None else "+".join(s.origin_label for s in streams)
    return TagStream(t[order], duration, label, ch[order], streams[0].wavelength_nm)


class TagWriter:
    """Incremental ``TTG1`` writer; records may be appended in chunks."""

    def __init__(self, path, duration: int, origin_label: str = "", resume_offset: int | None = None):
        self.path = os.fspath(path)
        self.duration = int(duration)
        if resume_offset is None:
            label = origin_label.encode("utf-8")
            self._fh = open(self.path, "wb")
            self._fh.write(_HEADER.pack(MAGIC, self.duration, len(label)))
            self._fh.write(label)
            self.count = 0
        else:
            # continue an interrupted file: drop anything written after the offset
            self._fh = open(self.path, "r+b")
            self._fh.truncate(resume_offset)
            self._fh.seek(resume_offset)
            self.count = None

    @property
    def offset(self) -> int:
        self._fh.flush()
        return self._fh.tell()

    def write(self, t, channel):
        t = np.asarray(t, dtype=np.int64)
        rec = np.empty(t.size, dtype=RECORD_DTYPE)
        rec["t"] = t
        rec["channel"] = channel
        self._fh.write(rec.tobytes())
        if self.count is not None:
            self.count += t.size

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_tags(path, stream: TagStream) -> None:
    with TagWriter(path, stream.duration, stream.origin_label) as w:
        w.write(stream.t, stream.channel)


def read_tags(path) -> TagStream:
    """Read a ``TTG1`` file, raising ``FormatError`` with byte offsets on damage."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise FormatError(f"bad magic bytes {raw[:4]!r}, expected {MAGIC!r}", offset=0)
    if len(raw) < _HEADER.size:
        raise FormatError("truncated header", offset=len(raw))
    _, duration, nlabel = _HEADER.unpack_from(raw, 0)
    pos = _HEADER.size
    if len(raw) < pos + nlabel:
        raise FormatError("truncated origin label", offset=len(raw))
    try:
        label = raw[pos : pos + nlabel].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("origin label is not valid UTF-8", offset=pos + exc.start) from None
    pos += nlabel
    if duration <= 0:
        raise FormatError(f"non-positive duration {duration}", offset=4)
    body = len(raw) - pos
    nrec, extra = divmod(body, RECORD_DTYPE.itemsize)
    if extra:
        raise FormatError("truncated record", offset=pos + nrec * RECORD_DTYPE.itemsize)
    rec = np.frombuffer(raw, dtype=RECORD_DTYPE, count=nrec, offset=pos)
    t = rec["t"].astype(np.int64)
    ch = rec["channel"].copy()

    def offset_of(i):
        return pos + int(i) * RECORD_DTYPE.itemsize

    bad = np.flatnonzero((t < 0) | (t > duration))
    if bad.size:
        raise FormatError(f"timestamp {t[bad[0]]} outside [0, {duration}]", offset=offset_of(bad[0]))
    # within-channel ordering: stable sort by channel keeps file order per channel
    by_ch = np.argsort(ch, kind="stable")
    tc, cc = t[by_ch], ch[by_ch]
    drop = np.flatnonzero((np.diff(tc) < 0) & (cc[1:] == cc[:-1]))
    if drop.size:
        raise FormatError(
            f"records of channel {cc[drop[0] + 1]} not sorted by time", offset=offset_of(by_ch[drop[0] + 1])
        )
    order = np.argsort(t, kind="stable")
    return TagStream(t[order], duration, label, ch[order])
