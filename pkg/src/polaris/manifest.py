"""Run manifests: everything needed to re-run a command and check its outputs."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


@dataclass
class RunManifest:
    command: str
    argv: list
    params: dict
    seeds: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    status: str = "ok"
    details: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=lambda: {"started": _now()})

    def add_input(self, path) -> None:
        path = Path(path)
        if path.is_dir():
            for p in sorted(q for q in path.rglob("*") if q.is_file() and q.name != MANIFEST_NAME):
                self.inputs[str(p)] = file_digest(p)
        elif path.exists():
            self.inputs[str(path)] = file_digest(path)

    def record_outputs(self, out_dir) -> None:
        out_dir = Path(out_dir)
        self.outputs = {
            str(p.relative_to(out_dir)): file_digest(p)
            for p in sorted(out_dir.rglob("*"))
            if p.is_file() and p.name != MANIFEST_NAME
        }

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "tool": "polaris",
            "tool_version": __version__,
            "command": self.command,
            "argv": list(self.argv),
            "params": self.params,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "status": self.status,
            "details": self.details,
            "timestamps": self.timestamps,
        }

    def digest(self) -> str:
        """Hash of the manifest with timestamps removed."""
        body = self.to_dict()
        body.pop("timestamps")
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def write(self, out_dir) -> Path:
        self.timestamps["finished"] = _now()
        path = Path(out_dir) / MANIFEST_NAME
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")
        return path


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
