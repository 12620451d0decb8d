"""Run manifests: what was run, with which resolved settings, producing which files."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def atomic_write_text(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    started: str = field(default_factory=now)
    finished: str = ""
    outputs: list = field(default_factory=list)
    version: str = ""
    argv: list = field(default_factory=list)
    exit_code: int = 0

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        atomic_write_text(path, json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))
