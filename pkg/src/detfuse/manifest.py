"""Run manifests: enough provenance to reproduce any command's output exactly.

The manifest is the only place a timestamp appears; every output payload is a
pure function of the inputs it records.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

TOOL_NAME = "detfuse"
TOOL_VERSION = "0.1.0"


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(
    command: str,
    config: dict,
    inputs: Sequence[Path],
    seed: int | None = None,
) -> dict:
    return {
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "command": command,
        "config": config,
        "inputs": [{"path": str(p), "sha256": file_sha256(p)} for p in inputs],
        "seed": seed,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }


def manifest_path_for(output: Path) -> Path:
    return output.with_name(output.name + ".manifest.json")


def write_manifest(manifest: dict, path: Path) -> None:
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
