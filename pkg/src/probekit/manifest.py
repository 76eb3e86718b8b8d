"""Run manifests: content hashes of every input and output file."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    command: str
    tool_version: str = __version__
    started: str = ""
    finished: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def register(self, path, root, kind="outputs"):
        p = Path(path)
        rel = p.relative_to(root).as_posix() if p.is_absolute() or str(p).startswith(str(root)) else p.as_posix()
        getattr(self, kind)[rel] = file_sha256(p)

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def timestamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def read_manifest(out_dir) -> RunManifest:
    data = json.loads((Path(out_dir) / MANIFEST_NAME).read_text(encoding="utf-8"))
    return RunManifest(**data)


def verify_manifest(out_dir) -> list:
    """Output files whose current hash differs from the recorded one."""
    m = read_manifest(out_dir)
    bad = []
    for rel, digest in sorted(m.outputs.items()):
        p = Path(out_dir) / rel
        if not p.exists() or file_sha256(p) != digest:
            bad.append(rel)
    return bad
