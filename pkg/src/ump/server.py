"""Model server: hosts executable processes behind the standard route set.

Routes (bit-exact):
    GET  /                                  landing page
    GET  /conformance                       conformance classes
    GET  /processes                         process list, paged
    GET  /processes/{processID}             process description
    POST /processes/{processID}/execution   sync or async execution
    GET  /jobs                              caller-scoped job list
    GET  /jobs/{jobID}                      job status
    GET  /jobs/{jobID}/results              stored outputs
    DELETE /jobs/{jobID}                    dismiss

plus the operator endpoints GET /admin/usage and POST /admin/sweep.
"""

from __future__ import annotations

import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import auth, errors
from .jobs import AsyncAccepted, JobManager, JobState
from .protocol import (
    ConformanceDeclaration,
    ExecuteRequest,
    ProcessDescription,
    apply_defaults,
    validate_execute_request,
)
from .storage import BlobStore, JobLog
from .util import parse_ts
from .web import App, HttpService, Request, Response, parse_bind_address


@dataclass(frozen=True)
class ProcessRegistration:
    description: ProcessDescription
    executor: object  # callable(inputs, ctx) -> outputs map


@dataclass
class ServerConfig:
    bindAddress: str = "127.0.0.1:0"
    serverId: str = "model-server"
    workerPoolSize: int = 4
    resultRetentionSeconds: int = 7 * 24 * 3600
    authMode: str = "open"  # open | token
    tokenFile: str | None = None
    dataDir: str | None = None
    sweepIntervalSeconds: int = 3600
    processes: list = field(default_factory=list)

    def __post_init__(self):
        if self.workerPoolSize < 1:
            raise ValueError("workerPoolSize must be >= 1")
        if self.authMode not in ("open", "token"):
            raise ValueError(f"authMode must be open or token, got {self.authMode!r}")

    @classmethod
    def from_file(cls, path: str | Path) -> "ServerConfig":
        doc = yaml.safe_load(Path(path).read_text()) or {}
        known = {k: doc[k] for k in (
            "bindAddress", "serverId", "workerPoolSize", "resultRetentionSeconds",
            "authMode", "tokenFile", "dataDir", "sweepIntervalSeconds", "processes",
        ) if k in doc}
        return cls(**known)


class ModelServer:
    def __init__(self, config: ServerConfig | None = None, clock=None):
        self.config = config or ServerConfig()
        data_dir = Path(self.config.dataDir) if self.config.dataDir else Path(tempfile.mkdtemp(prefix="ump-server-"))
        self._registry: dict[str, ProcessRegistration] = {}
        self._registry_lock = threading.Lock()
        self.usage = auth.UsageLedger(**({"clock": clock} if clock else {}))
        self.manager = JobManager(
            result_store=BlobStore(data_dir / "results"),
            job_log=JobLog(data_dir / "jobs.log"),
            worker_pool_size=self.config.workerPoolSize,
            retention_seconds=self.config.resultRetentionSeconds,
            usage_sink=self.usage.sink,
            **({"clock": clock} if clock else {}),
        )
        self.policy = auth.AccessPolicy()
        self.token_store = None
        if self.config.authMode == "token":
            if self.config.tokenFile:
                self.token_store = auth.TokenStore.from_file(self.config.tokenFile)
            else:
                self.token_store = auth.TokenStore()
        self.app = self._build_app()
        self._service: HttpService | None = None
        self._sweep_stop = threading.Event()
        self._sweep_thread: threading.Thread | None = None

    def _sweep_loop(self):
        while not self._sweep_stop.wait(self.config.sweepIntervalSeconds):
            self.manager.sweep_expired()

    # -- registration -------------------------------------------------------

    def register_process(self, registration: ProcessRegistration) -> int:
        """Add a process; the ID must be unique within this server."""
        registration.description.require_valid()
        pid = registration.description.id
        with self._registry_lock:
            if pid in self._registry:
                raise errors.conflict(f"process {pid!r} is already registered")
            self._registry[pid] = registration
            return len(self._registry)

    def registered_ids(self) -> list[str]:
        with self._registry_lock:
            return sorted(self._registry)

    def _registration(self, process_id: str) -> ProcessRegistration:
        with self._registry_lock:
            reg = self._registry.get(process_id)
        if reg is None:
            raise errors.not_found(f"no such process {process_id!r}")
        return reg

    # -- routing ------------------------------------------------------------

    def _authenticate(self, authorization: str | None):
        return auth.authenticate(authorization, self.token_store)

    def _build_app(self) -> App:
        app = App(authenticator=self._authenticate)
        app.route("GET", "/", self.handle_landing, authenticated=False)
        app.route("GET", "/conformance", self.handle_conformance, authenticated=False)
        app.route("GET", "/processes", self.handle_list_processes)
        app.route("GET", "/processes/{processID}", self.handle_describe)
        app.route("POST", "/processes/{processID}/execution", self.handle_execute)
        app.route("GET", "/jobs", self.handle_list_jobs)
        app.route("GET", "/jobs/{jobID}", self.handle_job_status)
        app.route("GET", "/jobs/{jobID}/results", self.handle_job_results)
        app.route("DELETE", "/jobs/{jobID}", self.handle_dismiss)
        app.route("GET", "/admin/usage", self.handle_usage)
        app.route("POST", "/admin/sweep", self.handle_sweep)
        return app

    # -- discovery handlers ---------------------------------------------------

    def landing_document(self) -> dict:
        return {
            "title": self.config.serverId,
            "description": "Simulation process server",
            "links": [
                {"href": "/", "rel": "self"},
                {"href": "/conformance", "rel": "conformance"},
                {"href": "/processes", "rel": "processes"},
                {"href": "/jobs", "rel": "jobs"},
            ],
        }

    def handle_landing(self, request: Request) -> Response:
        return Response.json(self.landing_document())

    def handle_conformance(self, request: Request) -> Response:
        return Response.json(ConformanceDeclaration().to_dict())

    def visible_process_ids(self, principal) -> list[str]:
        return [
            pid for pid in self.registered_ids()
            if auth.authorize_process(principal, pid, self.policy)
        ]

    def handle_list_processes(self, request: Request) -> Response:
        limit = request.int_query("limit", 100, 1, 1000)
        offset = request.int_query("offset", 0, 0, 10**9)
        visible = self.visible_process_ids(request.principal)
        page = visible[offset:offset + limit]
        with self._registry_lock:
            summaries = [self._registry[pid].description.summary.to_dict() for pid in page]
        return Response.json({"processes": summaries, "total": len(visible)})

    def handle_describe(self, request: Request) -> Response:
        pid = request.path_params["processID"]
        auth.require_process_access(request.principal, pid, self.policy)
        reg = self._registration(pid)
        return Response.json(reg.description.to_dict())

    # -- execution handlers ----------------------------------------------------

    def handle_execute(self, request: Request) -> Response:
        pid = request.path_params["processID"]
        auth.require_process_access(request.principal, pid, self.policy)
        reg = self._registration(pid)
        body = request.json_body()
        req = ExecuteRequest.from_dict(body, prefer_async=request.prefer_async())
        req = apply_defaults(req, reg.description)
        violations = validate_execute_request(req, reg.description)
        if violations:
            raise errors.validation_failed(violations)
        principal = request.principal
        self.usage.check_quota(principal, self.manager.count_active(principal.subject),
                               counts_toward_jobs=req.preferAsync)
        result = self.manager.submit(
            pid, req.inputs, principal.subject, reg.executor, prefer_async=req.preferAsync,
        )
        if isinstance(result, AsyncAccepted):
            return Response.json(
                result.job.to_dict(), status=201,
                headers={"Location": f"/jobs/{result.job.jobId}"},
            )
        outputs = result.outcome.outputs
        if req.requestedOutputs is not None:
            outputs = {k: v for k, v in outputs.items() if k in req.requestedOutputs}
        return Response.json(outputs)

    # -- job handlers ------------------------------------------------------------

    def handle_list_jobs(self, request: Request) -> Response:
        limit = request.int_query("limit", 100, 1, 1000)
        offset = request.int_query("offset", 0, 0, 10**9)
        principal = request.principal
        owner = None if principal.is_admin else principal.subject
        state = None
        if "state" in request.query:
            try:
                state = JobState(request.query["state"])
            except ValueError:
                raise errors.bad_request(f"unknown state {request.query['state']!r}") from None
        jobs = self.manager.list_jobs(owner=owner, process_id=request.query.get("processId"),
                                      state=state)
        page = [j.to_dict() for j in jobs[offset:offset + limit]]
        return Response.json({"jobs": page, "total": len(jobs)})

    def _job_for(self, request: Request):
        job = self.manager.get(request.path_params["jobID"])
        auth.require_job_access(request.principal, job.owner, self.policy)
        return job

    def handle_job_status(self, request: Request) -> Response:
        return Response.json(self._job_for(request).to_dict())

    def handle_job_results(self, request: Request) -> Response:
        job = self._job_for(request)
        return Response(status=200, body=self.manager.get_results_bytes(job.jobId))

    def handle_dismiss(self, request: Request) -> Response:
        job = self._job_for(request)
        return Response.json(self.manager.dismiss(job.jobId).to_dict())

    # -- operator handlers ---------------------------------------------------------

    def _require_admin(self, request: Request):
        if not request.principal.has_role(self.policy.adminRole):
            raise errors.forbidden("admin role required")

    def handle_usage(self, request: Request) -> Response:
        self._require_admin(request)
        return Response.json(self.usage.summarize(request.query.get("subject")))

    def handle_sweep(self, request: Request) -> Response:
        self._require_admin(request)
        now = None
        if request.body:
            doc = request.json_body()
            if doc.get("now"):
                try:
                    now = parse_ts(doc["now"])
                except ValueError:
                    raise errors.bad_request(f"invalid timestamp {doc['now']!r}") from None
        return Response.json({"purged": self.manager.sweep_expired(now)})

    # -- lifecycle ------------------------------------------------------------------

    def start(self) -> HttpService:
        host, port = parse_bind_address(self.config.bindAddress)
        self._service = HttpService(self.app, host, port).start()
        self._sweep_stop.clear()
        self._sweep_thread = threading.Thread(target=self._sweep_loop,
                                              name="retention-sweeper", daemon=True)
        self._sweep_thread.start()
        return self._service

    @property
    def url(self) -> str:
        if self._service is None:
            raise RuntimeError("server not started")
        return self._service.url

    def stop(self):
        self._sweep_stop.set()
        if self._sweep_thread is not None and self._sweep_thread.is_alive():
            self._sweep_thread.join(timeout=1.0)
        if self._service is not None:
            self._service.stop()
            self._service = None
        self.manager.stop()
