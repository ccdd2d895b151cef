"""Revisioned key-value store with prefix watch, used for pod discovery.

Keys are slash-separated paths ("pods/rrh-0/ip"), values are opaque bytes.
Revisions come from a single store-wide counter: each successful mutation
(put, or delete of an existing key) bumps it by exactly one, so the revision
sequence of a run is gap-free and strictly increasing. Reads never observe
a stale value: all operations take the store lock, so any interleaving of
callers is equivalent to the sequential order in which they acquired it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum


class BadKeyError(ValueError):
    """Raised for keys/prefixes that are empty or contain whitespace."""


class MutationKind(Enum):
    PUT = "PUT"
    DELETE = "DELETE"


@dataclass(frozen=True)
class RegistryEntry:
    key: str
    value: bytes
    revision: int


@dataclass(frozen=True)
class WatchEvent:
    kind: MutationKind
    entry: RegistryEntry
    revision: int

    @property
    def key(self) -> str:
        return self.entry.key


def _check_key(key: str) -> str:
    if not key:
        raise BadKeyError("key must be non-empty")
    if any(c.isspace() for c in key):
        raise BadKeyError(f"key contains whitespace: {key!r}")
    return key


def _check_prefix(prefix: str) -> str:
    # Empty prefix is legal and matches every key.
    if any(c.isspace() for c in prefix):
        raise BadKeyError(f"prefix contains whitespace: {prefix!r}")
    return prefix


class Watch:
    """Cursor over the store's event log, filtered by key prefix.

    `poll()` returns the events that happened since the last call (or since
    `from_revision` on the first call), in revision order. Polling never
    blocks and never misses a mutation: the store appends to its log under
    the same lock that orders the mutations themselves.
    """

    def __init__(self, registry: "Registry", prefix: str, from_revision: int):
        self._registry = registry
        self.prefix = prefix
        # A cursor beyond the current revision would silently skip future
        # events, so clamp it: such a watch is empty until new mutations.
        self._cursor = min(from_revision, registry.revision)

    def poll(self) -> list[WatchEvent]:
        events = self._registry.events_since(self.prefix, self._cursor)
        if events:
            self._cursor = events[-1].revision
        return events


class Registry:
    def __init__(self) -> None:
        self._data: dict[str, RegistryEntry] = {}
        self._log: list[WatchEvent] = []
        self._revision = 0
        self._lock = threading.RLock()
        self._changed = threading.Condition(self._lock)

    @property
    def revision(self) -> int:
        with self._lock:
            return self._revision

    def put(self, key: str, value: bytes) -> int:
        """Store `value` under `key`; returns the new store revision."""
        _check_key(key)
        if not isinstance(value, bytes):
            raise TypeError("registry values are bytes")
        with self._lock:
            self._revision += 1
            entry = RegistryEntry(key, value, self._revision)
            self._data[key] = entry
            self._log.append(WatchEvent(MutationKind.PUT, entry, self._revision))
            self._changed.notify_all()
            return self._revision

    def get(self, key: str) -> bytes | None:
        """Latest value for `key`, or None if absent."""
        entry = self.get_entry(key)
        return None if entry is None else entry.value

    def get_entry(self, key: str) -> RegistryEntry | None:
        _check_key(key)
        with self._lock:
            return self._data.get(key)

    def delete(self, key: str) -> int | None:
        """Remove `key`; returns the new revision, or None if it was absent.

        Deleting an absent key is not a mutation: the revision counter does
        not advance and no event is logged.
        """
        _check_key(key)
        with self._lock:
            if key not in self._data:
                return None
            del self._data[key]
            self._revision += 1
            entry = RegistryEntry(key, b"", self._revision)
            self._log.append(WatchEvent(MutationKind.DELETE, entry, self._revision))
            self._changed.notify_all()
            return self._revision

    def keys(self, prefix: str = "") -> list[str]:
        _check_prefix(prefix)
        with self._lock:
            return sorted(k for k in self._data if k.startswith(prefix))

    def watch(self, prefix: str, from_revision: int = 0) -> Watch:
        """Watch mutations under `prefix` with revision > `from_revision`."""
        _check_prefix(prefix)
        if from_revision < 0:
            raise ValueError("from_revision must be >= 0")
        with self._lock:
            return Watch(self, prefix, from_revision)

    def events_since(self, prefix: str, from_revision: int) -> list[WatchEvent]:
        """All logged events under `prefix` with revision > `from_revision`."""
        _check_prefix(prefix)
        with self._lock:
            # Log index i holds revision i+1 (gap-free counter), so the
            # slice start can be computed without scanning.
            start = max(from_revision, 0)
            return [e for e in self._log[start:] if e.key.startswith(prefix)]

    def wait_for_events(
        self, prefix: str, from_revision: int, timeout: float | None = None
    ) -> list[WatchEvent]:
        """Block until at least one matching event exists; used by the
        line-protocol service. Returns [] if the wait timed out first."""
        with self._changed:
            events = self.events_since(prefix, from_revision)
            if events:
                return events
            self._changed.wait(timeout)
            return self.events_since(prefix, from_revision)
