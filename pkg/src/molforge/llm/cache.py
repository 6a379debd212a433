"""Append-only JSONL response cache."""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from pathlib import Path

log = logging.getLogger(__name__)


def request_key(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ResponseCache:
    """Maps request hashes to responses; persisted one JSON line per entry.

    Readers see an in-memory dict; writers append under a lock. A torn final
    line (from an interrupted run) is ignored on load.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        self._torn_tail = False
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self):
        raw = self.path.read_bytes()
        self._torn_tail = bool(raw) and not raw.endswith(b"\n")
        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    log.warning("skipping unreadable cache line %d in %s", line_no, self.path)
                    continue
                self._entries[entry["key"]] = entry["response"]

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key: str):
        return key in self._entries

    def get(self, key: str) -> dict | None:
        return self._entries.get(key)

    def put(self, key: str, request: dict, response: dict):
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = response
            if self.path is None:
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            entry = {"key": key, "request": request, "response": response, "timestamp": time.time()}
            with open(self.path, "a", encoding="utf-8") as fh:
                if self._torn_tail:
                    fh.write("\n")
                    self._torn_tail = False
                fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")
