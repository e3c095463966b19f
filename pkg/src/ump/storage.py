"""Durable desk-scale storage: an append-only job transition log plus a
blob directory for stored results.

Layout under the data directory:
    jobs.log          one JSON record per line, one line per state transition
    results/<key>     result payload bytes
    results/<key>.meta  contentType / createdAt / expiresAt sidecar

The log is the audit trail; the in-memory job registry is authoritative for
live serving. Writes append whole lines, so a crash can at worst leave one
torn trailing line, which recovery drops.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .util import format_ts, parse_ts, to_json_bytes

_KEY_RE = re.compile(r"^[A-Za-z0-9._:-]+$")


class StorageError(Exception):
    pass


class ResultNotFound(StorageError):
    pass


class ResultConflict(StorageError):
    pass


@dataclass(frozen=True)
class JobRecord:
    seq: int
    job: dict  # full job snapshot (wire form plus resultRef)
    inputsDigest: str
    provider: str | None = None

    def to_dict(self) -> dict:
        doc = {"seq": self.seq, "job": self.job, "inputsDigest": self.inputsDigest}
        if self.provider is not None:
            doc["provider"] = self.provider
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "JobRecord":
        return cls(
            seq=doc["seq"],
            job=doc["job"],
            inputsDigest=doc.get("inputsDigest", ""),
            provider=doc.get("provider"),
        )


class JobLog:
    """Append-only log of job state transitions with strictly increasing
    sequence numbers that survive restarts."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._next_seq = 1
        for rec in self.read_all():
            self._next_seq = max(self._next_seq, rec.seq + 1)
        self._fh = open(self._path, "ab")

    def append(self, job_snapshot: dict, inputs_digest: str, provider: str | None = None) -> int:
        with self._lock:
            seq = self._next_seq
            self._next_seq += 1
            record = JobRecord(seq=seq, job=job_snapshot, inputsDigest=inputs_digest, provider=provider)
            try:
                self._fh.write(to_json_bytes(record.to_dict()) + b"\n")
                self._fh.flush()
                os.fsync(self._fh.fileno())
            except OSError as exc:
                raise StorageError(f"job log append failed: {exc}") from exc
            return seq

    def read_all(self) -> list[JobRecord]:
        if not self._path.exists():
            return []
        records = []
        with open(self._path, "rb") as fh:
            data = fh.read()
        for line in data.split(b"\n"):
            if not line:
                continue
            try:
                records.append(JobRecord.from_dict(json.loads(line.decode("utf-8"))))
            except (json.JSONDecodeError, UnicodeDecodeError, KeyError):
                # torn trailing record from a crash; everything before it is intact
                break
        return records

    def query_jobs(self, subject=None, process_id=None, state=None, since=None,
                   limit: int = 100, offset: int = 0) -> list[dict]:
        """Latest snapshot per jobId matching all filters, createdAt descending."""
        latest: dict[str, dict] = {}
        for rec in self.read_all():
            latest[rec.job["jobId"]] = rec.job
        rows = []
        for job in latest.values():
            if subject is not None and job.get("owner") != subject:
                continue
            if process_id is not None and job.get("processId") != process_id:
                continue
            if state is not None and job.get("state") != state:
                continue
            if since is not None and parse_ts(job["createdAt"]) < since:
                continue
            rows.append(job)
        rows.sort(key=lambda j: (j["createdAt"], j["jobId"]), reverse=True)
        return rows[offset:offset + limit]

    def close(self):
        with self._lock:
            self._fh.close()


class BlobStore:
    """Filesystem blob store keyed by resultRef."""

    def __init__(self, directory: str | Path):
        self._dir = Path(directory)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _paths(self, key: str) -> tuple[Path, Path]:
        if not _KEY_RE.match(key):
            raise StorageError(f"invalid result key {key!r}")
        safe = key.replace(":", "__")
        return self._dir / safe, self._dir / (safe + ".meta")

    def put(self, key: str, data: bytes, expires_at: datetime | None = None,
            content_type: str = "application/json", created_at: datetime | None = None) -> str:
        """Store bytes under key. Idempotent for identical bytes; differing
        bytes under an existing key are a conflict."""
        blob_path, meta_path = self._paths(key)
        with self._lock:
            if blob_path.exists():
                if blob_path.read_bytes() == data:
                    return key
                raise ResultConflict(f"result {key!r} already stored with different content")
            meta = {
                "key": key,
                "contentType": content_type,
                "createdAt": format_ts(created_at) if created_at else None,
                "expiresAt": format_ts(expires_at) if expires_at else None,
            }
            try:
                tmp = blob_path.with_suffix(blob_path.suffix + ".tmp")
                tmp.write_bytes(data)
                tmp.replace(blob_path)
                meta_path.write_bytes(to_json_bytes(meta))
            except OSError as exc:
                raise StorageError(f"result store write failed: {exc}") from exc
        return key

    def get(self, key: str) -> bytes:
        blob_path, _ = self._paths(key)
        with self._lock:
            if not blob_path.exists():
                raise ResultNotFound(key)
            return blob_path.read_bytes()

    def get_meta(self, key: str) -> dict:
        _, meta_path = self._paths(key)
        with self._lock:
            if not meta_path.exists():
                raise ResultNotFound(key)
            return json.loads(meta_path.read_bytes())

    def exists(self, key: str) -> bool:
        blob_path, _ = self._paths(key)
        with self._lock:
            return blob_path.exists()

    def delete(self, key: str) -> bool:
        """Remove a blob; returns False when it was already gone."""
        blob_path, meta_path = self._paths(key)
        with self._lock:
            existed = blob_path.exists()
            blob_path.unlink(missing_ok=True)
            meta_path.unlink(missing_ok=True)
            return existed


class MemoryBlobStore(BlobStore):
    """In-memory stand-in with the same contract, for tests and ephemeral runs."""

    def __init__(self):  # no directory
        self._blobs: dict[str, bytes] = {}
        self._meta: dict[str, dict] = {}
        self._lock = threading.Lock()

    def put(self, key, data, expires_at=None, content_type="application/json", created_at=None):
        with self._lock:
            if key in self._blobs:
                if self._blobs[key] == data:
                    return key
                raise ResultConflict(f"result {key!r} already stored with different content")
            self._blobs[key] = data
            self._meta[key] = {
                "key": key,
                "contentType": content_type,
                "createdAt": format_ts(created_at) if created_at else None,
                "expiresAt": format_ts(expires_at) if expires_at else None,
            }
        return key

    def get(self, key):
        with self._lock:
            if key not in self._blobs:
                raise ResultNotFound(key)
            return self._blobs[key]

    def get_meta(self, key):
        with self._lock:
            if key not in self._meta:
                raise ResultNotFound(key)
            return dict(self._meta[key])

    def exists(self, key):
        with self._lock:
            return key in self._blobs

    def delete(self, key):
        with self._lock:
            existed = key in self._blobs
            self._blobs.pop(key, None)
            self._meta.pop(key, None)
            return existed
