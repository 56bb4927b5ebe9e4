"""Run manifests: what produced each artifact, written atomically at run end."""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path
from typing import Mapping, Sequence

from fragflow import __version__


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_json_atomic(path: str | Path, obj) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def write_manifest(
    out_dir: str | Path,
    command: str,
    config_digest: str,
    seeds: Mapping[str, int],
    outputs: Sequence[str | Path],
    started: float,
) -> Path:
    """``manifest-<command>.json`` in ``out_dir``; wall-clock is the only
    field that differs between identical reruns."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_digest": config_digest,
        "code_version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
        "seeds": dict(seeds),
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    path = out_dir / f"manifest-{command}.json"
    write_json_atomic(path, manifest)
    return path
