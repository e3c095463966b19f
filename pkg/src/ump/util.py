"""Small shared helpers: canonical JSON, timestamps, digests."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone


def to_json_bytes(obj) -> bytes:
    """Canonical JSON encoding: sorted keys, no whitespace, no NaN/Infinity."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def to_json(obj) -> str:
    return to_json_bytes(obj).decode("utf-8")


def parse_json_bytes(data: bytes):
    return json.loads(data.decode("utf-8"))


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def format_ts(dt: datetime) -> str:
    """UTC timestamp as ISO 8601 with a trailing Z."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def parse_ts(value: str) -> datetime:
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    return datetime.fromisoformat(value)


def canonical_digest(obj) -> str:
    """sha256 hex digest of the canonical JSON form."""
    return hashlib.sha256(to_json_bytes(obj)).hexdigest()
