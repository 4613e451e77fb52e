"""Run manifests: every CLI invocation records what produced its outputs.

The manifest is written into the output directory before any output
file; re-running the recorded command with the recorded seed reproduces
the primary outputs byte for byte (the manifest itself carries a
timestamp and is excluded from that comparison).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

from . import __version__

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    command: str
    flags: dict
    seed: int | None
    input_hashes: dict = field(default_factory=dict)
    version: str = __version__
    wall_clock: str = ""

    def write(self, out_dir):
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = asdict(self)
        payload["wall_clock"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        with open(out_dir / MANIFEST_NAME, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
