"""Namespaced key-value store with TTLs and an atomic consume-once primitive.

Two backends share one interface: MemoryStore for tests/dev, FileStore with
per-namespace append-only JSON-lines logs plus snapshot compaction for served
mode. Writes are serialized under one lock; consume_once is the atomic
read-modify-write that backs nonce single-use.
"""

from __future__ import annotations

import json
import os
import threading
import time
from pathlib import Path
from typing import Any, Callable, Optional

from .errors import StorageIO

NAMESPACES = ("clients", "keys", "measurements", "nonces", "revocations", "instances", "audit")


class MemoryStore:
    def __init__(self, clock: Callable[[], float] = time.time):
        self._clock = clock
        self._lock = threading.RLock()
        self._data: dict[str, dict[str, tuple[Any, Optional[float]]]] = {
            ns: {} for ns in NAMESPACES
        }

    def _check_ns(self, namespace: str) -> None:
        if namespace not in self._data:
            raise StorageIO(f"unknown namespace {namespace!r}")

    def _live(self, namespace: str, key: str) -> Optional[tuple[Any, Optional[float]]]:
        entry = self._data[namespace].get(key)
        if entry is None:
            return None
        _, expires_at = entry
        if expires_at is not None and self._clock() >= expires_at:
            return None
        return entry

    def put(self, namespace: str, key: str, value: Any, ttl: Optional[float] = None) -> None:
        self._check_ns(namespace)
        expires_at = self._clock() + ttl if ttl is not None else None
        with self._lock:
            self._data[namespace][key] = (value, expires_at)
            self._on_write(namespace, "put", key, value, expires_at)

    def get(self, namespace: str, key: str) -> Optional[Any]:
        self._check_ns(namespace)
        with self._lock:
            entry = self._live(namespace, key)
            return entry[0] if entry else None

    def delete(self, namespace: str, key: str) -> None:
        self._check_ns(namespace)
        with self._lock:
            if key in self._data[namespace]:
                del self._data[namespace][key]
                self._on_write(namespace, "delete", key, None, None)

    def consume_once(self, namespace: str, key: str) -> bool:
        """True exactly once per live key, across all concurrent callers."""
        self._check_ns(namespace)
        with self._lock:
            if self._live(namespace, key) is None:
                return False
            del self._data[namespace][key]
            self._on_write(namespace, "delete", key, None, None)
            return True

    def keys(self, namespace: str) -> list[str]:
        self._check_ns(namespace)
        with self._lock:
            return [k for k in self._data[namespace] if self._live(namespace, k) is not None]

    def _on_write(self, namespace, op, key, value, expires_at) -> None:
        pass  # hook for the file backend


class FileStore(MemoryStore):
    """Durable variant: state rebuilt from per-namespace JSON-lines logs."""

    def __init__(self, data_dir: str | os.PathLike, clock: Callable[[], float] = time.time):
        super().__init__(clock=clock)
        self._dir = Path(data_dir)
        try:
            self._dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageIO(f"cannot create data directory {self._dir}: {exc}") from exc
        self._replaying = True
        self._replay()
        self._replaying = False

    def _log_path(self, namespace: str) -> Path:
        return self._dir / f"{namespace}.log"

    def _snapshot_path(self, namespace: str) -> Path:
        return self._dir / f"{namespace}.snapshot"

    def _replay(self) -> None:
        for ns in NAMESPACES:
            snap = self._snapshot_path(ns)
            if snap.exists():
                try:
                    records = json.loads(snap.read_text())
                except (OSError, json.JSONDecodeError) as exc:
                    raise StorageIO(f"corrupt snapshot {snap}: {exc}") from exc
                for rec in records:
                    self._data[ns][rec["key"]] = (rec["value"], rec.get("expires_at"))
            log = self._log_path(ns)
            if not log.exists():
                continue
            try:
                lines = log.read_text().splitlines()
            except OSError as exc:
                raise StorageIO(f"cannot read log {log}: {exc}") from exc
            for line in lines:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec["op"] == "put":
                    self._data[ns][rec["key"]] = (rec["value"], rec.get("expires_at"))
                elif rec["op"] == "delete":
                    self._data[ns].pop(rec["key"], None)

    def _on_write(self, namespace, op, key, value, expires_at) -> None:
        if self._replaying:
            return
        rec = {"op": op, "key": key}
        if op == "put":
            rec["value"] = value
            rec["expires_at"] = expires_at
        try:
            with open(self._log_path(namespace), "a") as fh:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
        except OSError as exc:
            raise StorageIO(f"cannot append to log for {namespace!r}: {exc}") from exc

    def compact(self) -> None:
        """Fold each namespace's log into a snapshot of live records."""
        with self._lock:
            for ns in NAMESPACES:
                live = [
                    {"key": k, "value": v, "expires_at": exp}
                    for k, (v, exp) in self._data[ns].items()
                    if exp is None or self._clock() < exp
                ]
                tmp = self._snapshot_path(ns).with_suffix(".snapshot.tmp")
                try:
                    tmp.write_text(json.dumps(live))
                    tmp.replace(self._snapshot_path(ns))
                    self._log_path(ns).unlink(missing_ok=True)
                except OSError as exc:
                    raise StorageIO(f"compaction failed for {ns!r}: {exc}") from exc


class StoreRevocations:
    """Revocation list on top of a store; entries never expire."""

    def __init__(self, store: MemoryStore):
        self._store = store

    def revoke(self, jti: str) -> None:
        self._store.put("revocations", jti, {"revoked": True})

    def is_revoked(self, jti: str) -> bool:
        return self._store.get("revocations", jti) is not None
