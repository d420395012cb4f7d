"""Content-addressed, resumable persistence of runs and outcomes.

Layout (documented in STORAGE.md): one directory per run under
``<root>/runs/<run-id>/`` holding ``manifest.json`` and one strict-JSON
document per universe outcome under ``outcomes/<digest>.json``. Digests are
computed over canonicalized inputs (sorted keys, minimal separators), so
key order and whitespace in the source document never change identities.
Writes are atomic (temp file + rename); rewriting a key with different
content is a conflict, never an overwrite.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path

from .errors import StoreConflictError
from .version import ENGINE_VERSION

log = logging.getLogger(__name__)

RUN_ID_LENGTH = 16


def canonical_json(obj) -> str:
    """Deterministic serialization: sorted keys, minimal separators, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False)


def space_digest(space_doc: dict) -> str:
    return hashlib.sha256(canonical_json(space_doc).encode("utf-8")).hexdigest()


def canonical_digest(space_doc: dict, assignment: dict, config_subset: dict) -> str:
    """Key of one universe outcome under one run configuration."""
    payload = {"space": space_doc, "assignment": assignment, "config": config_subset}
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def run_id(space_doc: dict, config_subset: dict) -> str:
    payload = {"space": space_doc, "config": config_subset}
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:RUN_ID_LENGTH]


class RunStore:
    """One run directory: a manifest plus outcome documents keyed by digest."""

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self.outcome_dir = self.run_dir / "outcomes"

    @classmethod
    def create(cls, root: str | Path, space_doc: dict, config_subset: dict) -> "RunStore":
        store = cls(Path(root) / "runs" / run_id(space_doc, config_subset))
        store.outcome_dir.mkdir(parents=True, exist_ok=True)
        store.write_manifest(space_doc, config_subset)
        return store

    def write_manifest(self, space_doc: dict, config_subset: dict) -> None:
        existing = self.read_manifest()
        digest = space_digest(space_doc)
        if existing is not None and existing.get("space_digest") != digest:
            raise StoreConflictError(
                f"run directory {self.run_dir} belongs to a different space document"
            )
        manifest = {
            "space_digest": digest,
            "space": space_doc,
            "config": config_subset,
            "engine_version": ENGINE_VERSION,
            "started_at": (existing or {}).get("started_at") or _now(),
            "finished_at": None,
        }
        self._atomic_write(self.run_dir / "manifest.json", _dump(manifest))

    def finish_manifest(self) -> None:
        manifest = self.read_manifest()
        if manifest is not None:
            manifest["finished_at"] = _now()
            self._atomic_write(self.run_dir / "manifest.json", _dump(manifest))

    def read_manifest(self) -> dict | None:
        path = self.run_dir / "manifest.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def outcome_path(self, key: str) -> Path:
        return self.outcome_dir / f"{key}.json"

    def persist_outcome(self, key: str, outcome_doc: dict) -> None:
        """Atomic write; identical re-write is a no-op, differing is a conflict."""
        path = self.outcome_path(key)
        data = _dump(outcome_doc)
        if path.exists():
            if path.read_bytes() == data:
                return
            raise StoreConflictError(f"outcome {key} already stored with different content")
        self._atomic_write(path, data)

    def load_outcome(self, key: str) -> dict | None:
        """Parsed outcome document, or None when absent or unreadable."""
        path = self.outcome_path(key)
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            log.warning("corrupt outcome file %s (%s); scheduling recompute", path, exc)
            return None

    def stored_keys(self) -> set[str]:
        if not self.outcome_dir.exists():
            return set()
        return {
            p.stem for p in self.outcome_dir.glob("*.json") if not p.name.startswith(".")
        }

    def resume_plan(self, keyed_universes) -> tuple[list, list]:
        """Partition (key, universe) pairs into (pending, completed).

        Corrupt outcome files count as pending and are logged for recompute.
        """
        pending, completed = [], []
        for key, universe in keyed_universes:
            if self.load_outcome(key) is None:
                pending.append((key, universe))
            else:
                completed.append((key, universe))
        return pending, completed

    def _atomic_write(self, path: Path, data: bytes) -> None:
        tmp = path.with_name(f".tmp-{os.getpid()}-{path.name}")
        tmp.write_bytes(data)
        os.replace(tmp, path)


def _dump(doc: dict) -> bytes:
    return (canonical_json(doc) + "\n").encode("utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()
