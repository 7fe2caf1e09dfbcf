"""Run manifests: what was run, with which inputs, producing which files.

A manifest is written once, next to the outputs. It records the command and
its arguments, the configuration snapshot, the seed and RNG algorithm, the
package version and SHA-256 digests of every input and output file. The
wall-clock fields are informational and never feed back into results.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .rng import RNG_ALGORITHM

MANIFEST_NAME = "manifest.json"


def sha256_file(path, chunk=1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while True:
            block = fh.read(chunk)
            if not block:
                break
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    args: dict
    config: dict | None
    seed: int | None
    rng_algorithm: str = RNG_ALGORITHM
    version: str = __version__
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""
    wall_seconds: float = 0.0
    platform: dict = field(default_factory=lambda: {
        "python": platform.python_version(), "numpy": np.__version__, "machine": platform.machine(),
    })

    def add_inputs(self, paths):
        for p in paths:
            self.inputs[os.fspath(p)] = sha256_file(p)

    def add_outputs(self, paths, base_dir=None):
        for p in paths:
            key = os.path.relpath(p, base_dir) if base_dir else os.fspath(p)
            self.outputs[key] = sha256_file(p)

    def to_dict(self) -> dict:
        return asdict(self)


def now_iso() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def write_manifest(path, manifest: RunManifest) -> None:
    """Write ``manifest`` to ``path``; refuses to overwrite an existing manifest."""
    with open(path, "x", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> RunManifest:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return RunManifest(**data)


def verify_manifest(path) -> list[str]:
    """Return a list of problems: files missing or with digests that differ."""
    m = read_manifest(path)
    base = os.path.dirname(os.path.abspath(path))
    problems = []
    for kind, entries, root in (("input", m.inputs, None), ("output", m.outputs, base)):
        for name, digest in entries.items():
            p = os.path.join(root, name) if root else name
            if not os.path.exists(p):
                problems.append(f"{kind} {name}: missing")
            elif sha256_file(p) != digest:
                problems.append(f"{kind} {name}: digest mismatch")
    return problems
