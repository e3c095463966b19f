"""Authentication, process visibility, job ownership and usage accounting.

Tokens come from a static tab-separated file mapping bearer token to
principal; the file is the single integration seam for a real identity
provider. Usage is recorded per subject so a platform operator can allocate
compute costs across providers and consumers.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

from . import errors
from .util import format_ts, utc_now

ADMIN_ROLE = "admin"
PUBLIC = "public"
AUTHENTICATED = "authenticated"

DEFAULT_MAX_CONCURRENT_JOBS = 16
DEFAULT_MAX_COMPUTE_SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class Quota:
    maxConcurrentJobs: int = DEFAULT_MAX_CONCURRENT_JOBS
    maxComputeSecondsPerDay: float = DEFAULT_MAX_COMPUTE_SECONDS_PER_DAY


@dataclass(frozen=True)
class Principal:
    subject: str
    roles: frozenset[str] = frozenset()
    quota: Quota = Quota()
    anonymous: bool = False

    def has_role(self, role: str) -> bool:
        return role in self.roles

    @property
    def is_admin(self) -> bool:
        return ADMIN_ROLE in self.roles


ANONYMOUS = Principal(subject="anonymous", anonymous=True)


@dataclass(frozen=True)
class UsageRecord:
    subject: str
    processId: str
    jobRef: str  # jobId, or "sync" for synchronous executions
    computeSeconds: float
    timestamp: datetime

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "processId": self.processId,
            "jobRef": self.jobRef,
            "computeSeconds": self.computeSeconds,
            "timestamp": format_ts(self.timestamp),
        }


class TokenStore:
    """token -> Principal lookup backed by a tab-separated file.

    Line format: token<TAB>subject<TAB>role1,role2<TAB>maxConcurrentJobs<TAB>maxComputeSecondsPerDay
    """

    def __init__(self, tokens: dict[str, Principal] | None = None):
        self._tokens = dict(tokens or {})

    @classmethod
    def from_file(cls, path: str | Path) -> "TokenStore":
        tokens: dict[str, Principal] = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
            token, subject, roles_csv, max_jobs, max_compute = parts
            roles = frozenset(r for r in roles_csv.split(",") if r)
            tokens[token] = Principal(
                subject=subject,
                roles=roles,
                quota=Quota(maxConcurrentJobs=int(max_jobs), maxComputeSecondsPerDay=float(max_compute)),
            )
        return cls(tokens)

    def lookup(self, token: str) -> Principal | None:
        return self._tokens.get(token)


def authenticate(authorization_header: str | None, store: TokenStore | None) -> Principal:
    """Resolve the Authorization header to a principal.

    Absent header -> anonymous; unknown or malformed token -> 401. With no
    token store configured (open mode) every caller is anonymous.
    """
    if authorization_header is None or store is None:
        return ANONYMOUS
    parts = authorization_header.split(" ", 1)
    if len(parts) != 2 or parts[0].lower() != "bearer" or not parts[1].strip():
        raise errors.unauthorized("malformed Authorization header")
    principal = store.lookup(parts[1].strip())
    if principal is None:
        raise errors.unauthorized("unknown bearer token")
    return principal


@dataclass(frozen=True)
class AccessPolicy:
    """Visibility rules: exact process entries override provider wildcards
    (`providerId:*`); values are `public`, `authenticated`, or a role name."""

    processVisibility: dict[str, str] = field(default_factory=dict)
    adminRole: str = ADMIN_ROLE
    defaultVisibility: str = PUBLIC

    def required_access(self, process_id: str, provider_default: str | None = None) -> str:
        if process_id in self.processVisibility:
            return self.processVisibility[process_id]
        if ":" in process_id:
            wildcard = process_id.split(":", 1)[0] + ":*"
            if wildcard in self.processVisibility:
                return self.processVisibility[wildcard]
        if provider_default is not None:
            return provider_default
        return self.defaultVisibility


def authorize_process(principal: Principal, process_id: str, policy: AccessPolicy,
                      provider_default: str | None = None) -> bool:
    """Allow iff the process is public, the principal holds the required
    role, or the principal is an admin."""
    required = policy.required_access(process_id, provider_default)
    if required == PUBLIC:
        return True
    if principal.anonymous:
        return False
    if principal.has_role(policy.adminRole):
        return True
    if required == AUTHENTICATED:
        return True
    return principal.has_role(required)


def require_process_access(principal: Principal, process_id: str, policy: AccessPolicy,
                           provider_default: str | None = None):
    """403 for denied principals; 404 for anonymous callers so that hidden
    processes do not leak their existence."""
    if authorize_process(principal, process_id, policy, provider_default):
        return
    if principal.anonymous:
        raise errors.not_found(f"no such process {process_id!r}")
    raise errors.forbidden(f"process {process_id!r} requires a role you do not hold")


def authorize_job(principal: Principal, job_owner: str, policy: AccessPolicy | None = None) -> bool:
    admin_role = policy.adminRole if policy is not None else ADMIN_ROLE
    return principal.subject == job_owner or principal.has_role(admin_role)


def require_job_access(principal: Principal, job_owner: str, policy: AccessPolicy | None = None):
    if not authorize_job(principal, job_owner, policy):
        raise errors.forbidden("job belongs to another subject")


class UsageLedger:
    """Per-subject usage records with quota checks over a rolling 24 h window."""

    def __init__(self, clock=utc_now):
        self._clock = clock
        self._lock = threading.Lock()
        self._records: list[UsageRecord] = []

    def record(self, subject: str, process_id: str, job_ref: str, compute_seconds: float,
               timestamp: datetime | None = None):
        rec = UsageRecord(
            subject=subject,
            processId=process_id,
            jobRef=job_ref,
            computeSeconds=max(0.0, compute_seconds),
            timestamp=timestamp if timestamp is not None else self._clock(),
        )
        with self._lock:
            self._records.append(rec)

    def sink(self, subject, process_id, job_ref, compute_seconds):
        """Adapter matching the JobManager usage_sink signature."""
        self.record(subject, process_id, job_ref, compute_seconds)

    def compute_seconds_last_day(self, subject: str, now: datetime | None = None) -> float:
        now = now if now is not None else self._clock()
        window_start = now - timedelta(hours=24)
        with self._lock:
            return sum(
                r.computeSeconds
                for r in self._records
                if r.subject == subject and r.timestamp >= window_start
            )

    def check_quota(self, principal: Principal, active_jobs: int, counts_toward_jobs: bool):
        """Pre-execution gate; raises 429 when either limit is exhausted."""
        if counts_toward_jobs and active_jobs >= principal.quota.maxConcurrentJobs:
            raise errors.quota_exceeded(
                f"subject {principal.subject!r} already has {active_jobs} active jobs"
            )
        used = self.compute_seconds_last_day(principal.subject)
        if used >= principal.quota.maxComputeSecondsPerDay:
            raise errors.quota_exceeded(
                f"subject {principal.subject!r} exhausted the daily compute budget"
            )

    def summarize(self, subject: str | None = None) -> dict:
        with self._lock:
            records = list(self._records)
        if subject is not None:
            records = [r for r in records if r.subject == subject]
            return {
                "subject": subject,
                "totalComputeSeconds": sum(r.computeSeconds for r in records),
                "records": [r.to_dict() for r in records],
            }
        by_subject: dict[str, float] = {}
        counts: dict[str, int] = {}
        for r in records:
            by_subject[r.subject] = by_subject.get(r.subject, 0.0) + r.computeSeconds
            counts[r.subject] = counts.get(r.subject, 0) + 1
        return {
            "subjects": [
                {"subject": s, "totalComputeSeconds": by_subject[s], "records": counts[s]}
                for s in sorted(by_subject)
            ]
        }
