"""Job lifecycle state machine and queued execution.

One JobManager instance backs a server or platform: it owns the in-memory
job registry, a bounded FIFO work queue drained by a fixed worker pool, and
result storage with retention. Jobs move through a closed state machine;
every transition funnels through `transition`, which enforces the legal set
and appends to the job log when one is attached.
"""

from __future__ import annotations

import enum
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta

from . import errors
from .storage import BlobStore, JobLog, ResultNotFound
from .util import canonical_digest, format_ts, to_json_bytes, utc_now

DEFAULT_WORKER_POOL_SIZE = 4
DEFAULT_QUEUE_CAPACITY = 256
DEFAULT_RETENTION_SECONDS = 7 * 24 * 3600


class JobState(str, enum.Enum):
    ACCEPTED = "accepted"
    RUNNING = "running"
    SUCCESSFUL = "successful"
    FAILED = "failed"
    DISMISSED = "dismissed"


TERMINAL_STATES = frozenset({JobState.SUCCESSFUL, JobState.FAILED, JobState.DISMISSED})

#: The only legal ordered state pairs.
LEGAL_TRANSITIONS = frozenset(
    {
        (JobState.ACCEPTED, JobState.RUNNING),
        (JobState.ACCEPTED, JobState.DISMISSED),
        (JobState.RUNNING, JobState.SUCCESSFUL),
        (JobState.RUNNING, JobState.FAILED),
        (JobState.RUNNING, JobState.DISMISSED),
    }
)


class IllegalTransition(Exception):
    def __init__(self, current: JobState, target: JobState):
        super().__init__(f"illegal job transition {current.value} -> {target.value}")
        self.current = current
        self.target = target


@dataclass(frozen=True)
class Job:
    jobId: str
    processId: str
    owner: str
    state: JobState
    progress: int = 0
    message: str = ""
    createdAt: datetime = field(default_factory=utc_now)
    startedAt: datetime | None = None
    finishedAt: datetime | None = None
    resultRef: str | None = None
    expiresAt: datetime | None = None
    computeSeconds: float = 0.0
    provider: str | None = None

    def check_invariants(self) -> list[str]:
        problems = []
        if (self.startedAt is not None) != (self.state != JobState.ACCEPTED):
            problems.append("startedAt present iff state is not accepted")
        if (self.finishedAt is not None) != (self.state in TERMINAL_STATES):
            problems.append("finishedAt present iff state terminal")
        if (self.resultRef is not None) != (self.state == JobState.SUCCESSFUL):
            problems.append("resultRef present iff state successful")
        if (self.progress == 100) != (self.state == JobState.SUCCESSFUL):
            problems.append("progress 100 iff state successful")
        if not 0 <= self.progress <= 100:
            problems.append("progress out of range")
        return problems

    def to_dict(self, include_internal: bool = False) -> dict:
        doc = {
            "jobId": self.jobId,
            "processId": self.processId,
            "owner": self.owner,
            "state": self.state.value,
            "progress": self.progress,
            "message": self.message,
            "createdAt": format_ts(self.createdAt),
        }
        if self.startedAt is not None:
            doc["startedAt"] = format_ts(self.startedAt)
        if self.finishedAt is not None:
            doc["finishedAt"] = format_ts(self.finishedAt)
        if self.expiresAt is not None:
            doc["expiresAt"] = format_ts(self.expiresAt)
        if self.state == JobState.SUCCESSFUL:
            doc["computeSeconds"] = self.computeSeconds
        if include_internal:
            doc["resultRef"] = self.resultRef
            if self.provider is not None:
                doc["provider"] = self.provider
        return doc


@dataclass(frozen=True)
class ExecutionOutcome:
    outputs: dict
    computeSeconds: float = 0.0


class ExecutionCancelled(Exception):
    pass


class ExecutionContext:
    """Handed to executors: cooperative cancellation plus progress reporting.

    Executors should call `check_cancelled` between simulation steps and may
    call `report_progress` with a 0..100 percentage.
    """

    def __init__(self, manager: "JobManager | None" = None, job_id: str | None = None):
        self.job_id = job_id
        self._manager = manager
        self._cancel = threading.Event()

    def cancel(self):
        self._cancel.set()

    @property
    def cancelled(self) -> bool:
        return self._cancel.is_set()

    def check_cancelled(self):
        if self._cancel.is_set():
            raise ExecutionCancelled()

    def report_progress(self, percent: int):
        if self._manager is not None and self.job_id is not None:
            self._manager.report_progress(self.job_id, percent)


@dataclass(frozen=True)
class SyncResult:
    outcome: ExecutionOutcome


@dataclass(frozen=True)
class AsyncAccepted:
    job: Job


class JobManager:
    def __init__(
        self,
        result_store: BlobStore,
        job_log: JobLog | None = None,
        worker_pool_size: int = DEFAULT_WORKER_POOL_SIZE,
        queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
        retention_seconds: int = DEFAULT_RETENTION_SECONDS,
        clock=utc_now,
        usage_sink=None,
    ):
        self._results = result_store
        self._log = job_log
        self._retention = retention_seconds
        self._clock = clock
        self._usage_sink = usage_sink
        self._lock = threading.RLock()
        self._jobs: dict[str, Job] = {}
        self._contexts: dict[str, ExecutionContext] = {}
        self._inputs_digests: dict[str, str] = {}
        self._queue: queue.Queue = queue.Queue(maxsize=queue_capacity)
        self._stopping = threading.Event()
        self._workers = [
            threading.Thread(target=self._worker_loop, name=f"job-worker-{i}", daemon=True)
            for i in range(worker_pool_size)
        ]
        for w in self._workers:
            w.start()

    @property
    def result_store(self) -> BlobStore:
        return self._results

    # -- registry ----------------------------------------------------------

    def create_job(self, process_id: str, owner: str, inputs: dict | None = None,
                   provider: str | None = None) -> Job:
        job = Job(
            jobId=str(uuid.uuid4()),
            processId=process_id,
            owner=owner,
            state=JobState.ACCEPTED,
            message="accepted",
            createdAt=self._clock(),
            provider=provider,
        )
        digest = canonical_digest(inputs if inputs is not None else {})
        with self._lock:
            self._jobs[job.jobId] = job
            self._inputs_digests[job.jobId] = digest
        self._append_log(job)
        return job

    def get(self, job_id: str) -> Job:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise errors.not_found(f"no such job {job_id!r}")
        return job

    def list_jobs(self, owner: str | None = None, process_id: str | None = None,
                  state: JobState | None = None) -> list[Job]:
        with self._lock:
            jobs = list(self._jobs.values())
        if owner is not None:
            jobs = [j for j in jobs if j.owner == owner]
        if process_id is not None:
            jobs = [j for j in jobs if j.processId == process_id]
        if state is not None:
            jobs = [j for j in jobs if j.state == state]
        jobs.sort(key=lambda j: (j.createdAt, j.jobId), reverse=True)
        return jobs

    def count_active(self, owner: str) -> int:
        with self._lock:
            return sum(
                1
                for j in self._jobs.values()
                if j.owner == owner and j.state in (JobState.ACCEPTED, JobState.RUNNING)
            )

    def counts(self) -> dict:
        with self._lock:
            active = sum(1 for j in self._jobs.values() if j.state == JobState.RUNNING)
            queued = sum(1 for j in self._jobs.values() if j.state == JobState.ACCEPTED)
        return {"active": active, "queued": queued}

    # -- state machine -----------------------------------------------------

    def transition(self, job_id: str, target: JobState, *, message: str | None = None,
                   progress: int | None = None, result_ref: str | None = None,
                   compute_seconds: float | None = None,
                   expires_at: datetime | None = None) -> Job:
        """Move a job to `target`, enforcing the legal transition set and the
        Job field invariants. Raises IllegalTransition otherwise."""
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise errors.not_found(f"no such job {job_id!r}")
            if (job.state, target) not in LEGAL_TRANSITIONS:
                raise IllegalTransition(job.state, target)
            now = self._clock()
            fields: dict = {"state": target}
            if message is not None:
                fields["message"] = message
            if job.startedAt is None and target != JobState.ACCEPTED:
                fields["startedAt"] = now
            if target in TERMINAL_STATES:
                fields["finishedAt"] = now
            if target == JobState.SUCCESSFUL:
                fields["progress"] = 100
                fields["resultRef"] = result_ref
                if compute_seconds is not None:
                    fields["computeSeconds"] = compute_seconds
                if expires_at is not None:
                    fields["expiresAt"] = expires_at
            else:
                base = progress if progress is not None else job.progress
                fields["progress"] = min(base, 99)
            updated = replace(job, **fields)
            self._jobs[job_id] = updated
        self._append_log(updated)
        return updated

    def report_progress(self, job_id: str, percent: int):
        percent = max(0, min(99, int(percent)))
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None or job.state != JobState.RUNNING:
                return
            self._jobs[job_id] = replace(job, progress=percent)

    def _append_log(self, job: Job):
        if self._log is None:
            return
        digest = self._inputs_digests.get(job.jobId, "")
        self._log.append(job.to_dict(include_internal=True), digest, provider=job.provider)

    # -- execution ---------------------------------------------------------

    def submit(self, process_id: str, inputs: dict, owner: str, executor,
               prefer_async: bool, retention_seconds: int | None = None):
        """Run `executor(inputs, ctx)` inline (sync) or via the queue (async).

        The synchronous path creates no job; the asynchronous path returns a
        job in state accepted immediately.
        """
        if not prefer_async:
            ctx = ExecutionContext()
            started = time.perf_counter()
            try:
                outputs = executor(dict(inputs), ctx)
            except Exception as exc:  # noqa: BLE001 - surfaced as ProblemDetail
                raise errors.internal(f"process execution failed: {exc}") from exc
            outcome = ExecutionOutcome(outputs=outputs, computeSeconds=time.perf_counter() - started)
            if self._usage_sink is not None:
                self._usage_sink(owner, process_id, "sync", outcome.computeSeconds)
            return SyncResult(outcome)

        if self._queue.full():
            raise errors.quota_exceeded("execution queue is full")
        job = self.create_job(process_id, owner, inputs=inputs)
        ctx = ExecutionContext(self, job.jobId)
        with self._lock:
            self._contexts[job.jobId] = ctx
        try:
            self._queue.put_nowait((job.jobId, executor, dict(inputs), retention_seconds))
        except queue.Full:
            with self._lock:
                self._jobs.pop(job.jobId, None)
                self._contexts.pop(job.jobId, None)
            raise errors.quota_exceeded("execution queue is full") from None
        return AsyncAccepted(job)

    def _worker_loop(self):
        while True:
            item = self._queue.get()
            if item is None:  # shutdown sentinel
                self._queue.task_done()
                return
            job_id, executor, inputs, retention = item
            try:
                self._run_job(job_id, executor, inputs, retention)
            finally:
                self._queue.task_done()
            if self._stopping.is_set():
                return

    def _run_job(self, job_id: str, executor, inputs: dict, retention: int | None):
        with self._lock:
            job = self._jobs.get(job_id)
            ctx = self._contexts.get(job_id)
        if job is None or job.state != JobState.ACCEPTED:
            return  # dismissed while queued
        try:
            self.transition(job_id, JobState.RUNNING, message="running")
        except IllegalTransition:
            return
        started = time.perf_counter()
        try:
            outputs = executor(inputs, ctx)
            compute = time.perf_counter() - started
            self.complete_job(job_id, outputs, compute, retention)
        except ExecutionCancelled:
            pass  # dismissal already transitioned the job
        except Exception as exc:  # noqa: BLE001 - recorded on the job
            self._fail_job(job_id, f"process execution failed: {exc}")
        finally:
            with self._lock:
                self._contexts.pop(job_id, None)

    def complete_job(self, job_id: str, outputs: dict, compute_seconds: float,
                     retention_seconds: int | None = None) -> Job | None:
        """Store outputs and mark the job successful; no-op if the job was
        dismissed in the meantime."""
        key = f"job-{job_id}"
        now = self._clock()
        retention = retention_seconds if retention_seconds is not None else self._retention
        expires = now + timedelta(seconds=retention)
        data = to_json_bytes(outputs)
        self._results.put(key, data, expires_at=expires, created_at=now)
        try:
            job = self.transition(
                job_id, JobState.SUCCESSFUL,
                message="finished", result_ref=key,
                compute_seconds=compute_seconds, expires_at=expires,
            )
        except IllegalTransition:
            self._results.delete(key)
            return None
        if self._usage_sink is not None:
            self._usage_sink(job.owner, job.processId, job_id, compute_seconds)
        return job

    def _fail_job(self, job_id: str, message: str):
        try:
            self.transition(job_id, JobState.RUNNING, message="running")
        except IllegalTransition:
            pass
        try:
            self.transition(job_id, JobState.FAILED, message=message)
        except IllegalTransition:
            pass

    def fail_job(self, job_id: str, message: str):
        """Mark a non-terminal job failed (walking accepted jobs through running)."""
        self._fail_job(job_id, message)

    # -- job endpoints -----------------------------------------------------

    def get_results_bytes(self, job_id: str) -> bytes:
        """Stored output bytes for a successful, unexpired job."""
        job = self.get(job_id)
        if job.state != JobState.SUCCESSFUL:
            raise errors.not_found("results not available")
        if job.expiresAt is not None and job.expiresAt < self._clock():
            raise errors.gone(f"results of job {job_id} expired")
        if job.resultRef is None:
            raise errors.not_found("results not available")
        try:
            return self._results.get(job.resultRef)
        except ResultNotFound:
            raise errors.gone(f"results of job {job_id} purged") from None

    def dismiss(self, job_id: str) -> Job:
        """Dismiss an accepted or running job; terminal jobs are a conflict."""
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise errors.not_found(f"no such job {job_id!r}")
            if job.state in TERMINAL_STATES:
                raise errors.conflict(f"job {job_id} is already {job.state.value}")
            ctx = self._contexts.get(job_id)
        if ctx is not None:
            ctx.cancel()
        try:
            return self.transition(job_id, JobState.DISMISSED, message="dismissed")
        except IllegalTransition as exc:
            raise errors.conflict(str(exc)) from exc

    def sweep_expired(self, now: datetime | None = None) -> int:
        """Purge stored results of successful jobs past their expiry.

        Job metadata is retained for audit; returns the number of results
        actually purged, so repeated sweeps with the same clock return 0.
        """
        now = now if now is not None else self._clock()
        with self._lock:
            candidates = [
                j for j in self._jobs.values()
                if j.state == JobState.SUCCESSFUL and j.expiresAt is not None and j.expiresAt < now
            ]
        purged = 0
        for job in candidates:
            if job.resultRef and self._results.delete(job.resultRef):
                purged += 1
        return purged

    # -- lifecycle ---------------------------------------------------------

    def drain(self, timeout: float = 10.0):
        """Wait for queued work to finish, then stop the workers."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline and not self._queue.empty():
            time.sleep(0.05)
        self.stop()

    def stop(self):
        if self._stopping.is_set():
            return
        self._stopping.set()
        remaining = list(self._workers)
        deadline = time.monotonic() + 5.0
        while remaining and time.monotonic() < deadline:
            for _ in remaining:
                try:  # wake blocked workers; retried while others drain the queue
                    self._queue.put_nowait(None)
                except queue.Full:
                    break
            for w in list(remaining):
                w.join(timeout=0.05)
                if not w.is_alive():
                    remaining.remove(w)
