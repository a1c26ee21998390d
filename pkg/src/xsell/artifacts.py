"""Deterministic artifact IO: atomic writes, content hashing, run manifest.

Artifacts are written to a temp path then renamed, so a crashed stage never
leaves half-written files. The manifest records every artifact's SHA-256;
its own hash is a pure function of the artifact set, independent of worker
count or output directory location.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def atomic_write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Manifest:
    """Content-hash ledger of a pipeline run's artifacts."""

    FILENAME = "manifest.json"

    def __init__(self, root):
        self.root = Path(root)
        self.entries: dict[str, dict] = {}
        self.failures: list[dict] = []
        self.config_fingerprint: str | None = None

    @classmethod
    def load_or_new(cls, root) -> "Manifest":
        m = cls(root)
        path = m.root / cls.FILENAME
        if path.exists():
            data = json.loads(path.read_text())
            m.entries = data.get("artifacts", {})
            m.failures = data.get("failures", [])
            m.config_fingerprint = data.get("config_fingerprint")
        return m

    def record(self, path) -> None:
        rel = str(Path(path).relative_to(self.root))
        self.entries[rel] = {"sha256": sha256_file(path), "bytes": os.path.getsize(path)}

    def record_failure(self, stage: str, case: str, error: str) -> None:
        self.failures.append({"stage": stage, "case": case, "error": error})

    def manifest_hash(self) -> str:
        canonical = json.dumps(
            {rel: self.entries[rel]["sha256"] for rel in sorted(self.entries)}, sort_keys=True
        )
        return hashlib.sha256(canonical.encode()).hexdigest()

    def save(self) -> Path:
        payload = {
            "config_fingerprint": self.config_fingerprint,
            "artifacts": {k: self.entries[k] for k in sorted(self.entries)},
            "failures": self.failures,
            "manifest_hash": self.manifest_hash(),
        }
        path = self.root / self.FILENAME
        atomic_write_json(path, payload)
        return path
