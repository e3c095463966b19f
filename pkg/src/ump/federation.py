"""Federation platform: mirrors processes from configured model servers
under namespaced IDs, forwards executions, tracks remote jobs, and applies
per-provider policy (visibility, result mirroring, retention, timeouts).

The platform speaks the same route set as a model server, so platforms can
federate other platforms; a hop-count header bounds forwarding chains.
"""

from __future__ import annotations

import json
import logging
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import timedelta
from pathlib import Path

import requests
import yaml

from . import auth, errors
from .jobs import JobManager, JobState
from .protocol import ConformanceDeclaration, ProcessDescription
from .storage import BlobStore, JobLog
from .util import format_ts, parse_ts, utc_now
from .web import App, HttpService, Request, Response, parse_bind_address

LOGGER = logging.getLogger(__name__)

HOP_HEADER = "X-Federation-Hops"
MAX_FEDERATION_HOPS = 4
DEFAULT_TIMEOUT_MILLIS = 5000
DEFAULT_POLL_INTERVAL_MILLIS = 1000
MAX_POLL_BACKOFF_SECONDS = 30.0
DEFAULT_CATALOG_REFRESH_SECONDS = 300


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    providerId: str
    baseUrl: str
    include: tuple[str, ...] | None = None
    exclude: tuple[str, ...] | None = None
    public: bool = True
    mirrorResults: bool = True
    retentionSeconds: int = 7 * 24 * 3600
    timeoutMillis: int = DEFAULT_TIMEOUT_MILLIS
    authToken: str | None = None

    def validate(self, where: str = "provider"):
        if not self.providerId or ":" in self.providerId:
            raise ConfigError(f"{where}: providerId must be non-empty and colon-free")
        if self.include is not None and self.exclude is not None:
            raise ConfigError(f"{where}: include and exclude are mutually exclusive")
        if self.retentionSeconds <= 0:
            raise ConfigError(f"{where}: retentionSeconds must be positive")
        if self.timeoutMillis <= 0:
            raise ConfigError(f"{where}: timeoutMillis must be positive")

    @property
    def timeout_seconds(self) -> float:
        return self.timeoutMillis / 1000.0

    @classmethod
    def from_dict(cls, doc: dict, where: str) -> "ProviderConfig":
        if not isinstance(doc, dict):
            raise ConfigError(f"{where}: provider entry must be a mapping")
        unknown = set(doc) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
        if "providerId" not in doc or "baseUrl" not in doc:
            raise ConfigError(f"{where}: providerId and baseUrl are required")
        cfg = cls(
            providerId=doc["providerId"],
            baseUrl=str(doc["baseUrl"]).rstrip("/"),
            include=tuple(doc["include"]) if doc.get("include") is not None else None,
            exclude=tuple(doc["exclude"]) if doc.get("exclude") is not None else None,
            public=bool(doc.get("public", True)),
            mirrorResults=bool(doc.get("mirrorResults", True)),
            retentionSeconds=int(doc.get("retentionSeconds", 7 * 24 * 3600)),
            timeoutMillis=int(doc.get("timeoutMillis", DEFAULT_TIMEOUT_MILLIS)),
            authToken=doc.get("authToken"),
        )
        cfg.validate(where)
        return cfg


@dataclass(frozen=True)
class PlatformConfig:
    bindAddress: str = "127.0.0.1:0"
    platformId: str = "platform"
    catalogRefreshSeconds: int = DEFAULT_CATALOG_REFRESH_SECONDS
    providers: tuple[ProviderConfig, ...] = ()
    workerPoolSize: int = 4
    pollIntervalMillis: int = DEFAULT_POLL_INTERVAL_MILLIS
    authMode: str = "open"
    tokenFile: str | None = None
    processVisibility: dict = field(default_factory=dict)
    adminRole: str = auth.ADMIN_ROLE
    dataDir: str | None = None

    @classmethod
    def from_document(cls, doc: dict) -> "PlatformConfig":
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a mapping")
        server = doc.get("server", {}) or {}
        jobs = doc.get("jobs", {}) or {}
        auth_doc = doc.get("auth", {}) or {}
        providers = []
        seen = set()
        for i, entry in enumerate(doc.get("providers", []) or []):
            cfg = ProviderConfig.from_dict(entry, where=f"providers[{i}]")
            if cfg.providerId in seen:
                raise ConfigError(f"providers[{i}]: duplicate providerId {cfg.providerId!r}")
            seen.add(cfg.providerId)
            providers.append(cfg)
        mode = auth_doc.get("mode", "open")
        if mode not in ("open", "token"):
            raise ConfigError(f"auth.mode must be open or token, got {mode!r}")
        return cls(
            bindAddress=server.get("bindAddress", "127.0.0.1:0"),
            platformId=server.get("platformId", "platform"),
            catalogRefreshSeconds=int(server.get("catalogRefreshSeconds", DEFAULT_CATALOG_REFRESH_SECONDS)),
            providers=tuple(providers),
            workerPoolSize=int(jobs.get("workerPoolSize", 4)),
            pollIntervalMillis=int(jobs.get("pollIntervalMillis", DEFAULT_POLL_INTERVAL_MILLIS)),
            authMode=mode,
            tokenFile=auth_doc.get("tokenFile"),
            processVisibility=dict(auth_doc.get("processVisibility", {})),
            adminRole=auth_doc.get("adminRole", auth.ADMIN_ROLE),
            dataDir=server.get("dataDir"),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "PlatformConfig":
        text = Path(path).read_text()
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = f" (line {mark.line + 1})" if mark else ""
            raise ConfigError(f"{path}: invalid document{line}: {exc}") from exc
        try:
            return cls.from_document(doc or {})
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class MirroredProcess:
    namespacedId: str
    provider: str
    upstreamId: str
    description: ProcessDescription  # summary.id already namespaced
    lastRefreshed: object
    reachable: bool = True


@dataclass(frozen=True)
class ProviderStatus:
    providerId: str
    reachable: bool
    lastRefreshed: object
    processCount: int


@dataclass(frozen=True)
class Catalog:
    processes: dict[str, MirroredProcess] = field(default_factory=dict)
    statuses: dict[str, ProviderStatus] = field(default_factory=dict)


@dataclass(frozen=True)
class RemoteJobLink:
    platformJobId: str
    provider: str
    upstreamJobId: str
    mode: str = "async"


def flatten_local_id(upstream_id: str) -> str:
    """Upstream IDs may themselves be namespaced when federating a platform;
    the colon is folded so the mirrored ID stays a valid process ID."""
    return upstream_id.replace(":", "-")


class Platform:
    def __init__(self, config: PlatformConfig | None = None, clock=None):
        self.config = config or PlatformConfig()
        data_dir = Path(self.config.dataDir) if self.config.dataDir else Path(tempfile.mkdtemp(prefix="ump-platform-"))
        self.usage = auth.UsageLedger(**({"clock": clock} if clock else {}))
        self.manager = JobManager(
            result_store=BlobStore(data_dir / "results"),
            job_log=JobLog(data_dir / "jobs.log"),
            worker_pool_size=self.config.workerPoolSize,
            usage_sink=self.usage.sink,
            **({"clock": clock} if clock else {}),
        )
        self._results = self.manager.result_store
        self._clock = clock or utc_now
        self._catalog = Catalog()
        self._links: dict[str, RemoteJobLink] = {}
        self._links_lock = threading.Lock()
        self._backoff: dict[str, tuple[float, float]] = {}  # provider -> (until, delay)
        self.policy = auth.AccessPolicy(
            processVisibility=dict(self.config.processVisibility),
            adminRole=self.config.adminRole,
        )
        self.token_store = None
        if self.config.authMode == "token":
            self.token_store = (
                auth.TokenStore.from_file(self.config.tokenFile)
                if self.config.tokenFile else auth.TokenStore()
            )
        self.app = self._build_app()
        self._service: HttpService | None = None
        self._stop = threading.Event()
        self._poll_thread: threading.Thread | None = None
        self._refresh_thread: threading.Thread | None = None

    # -- configuration -------------------------------------------------------

    def providers(self) -> tuple[ProviderConfig, ...]:
        return self.config.providers

    def provider(self, provider_id: str) -> ProviderConfig | None:
        for p in self.config.providers:
            if p.providerId == provider_id:
                return p
        return None

    def apply_config(self, new_config: PlatformConfig):
        """Hot reload: atomically replace the provider set, policy and token
        store, then refresh. Jobs and links survive."""
        self.config = new_config
        self.policy = auth.AccessPolicy(
            processVisibility=dict(new_config.processVisibility),
            adminRole=new_config.adminRole,
        )
        if new_config.authMode == "token":
            self.token_store = (
                auth.TokenStore.from_file(new_config.tokenFile)
                if new_config.tokenFile else auth.TokenStore()
            )
        else:
            self.token_store = None
        self.refresh_catalog()

    # -- upstream HTTP --------------------------------------------------------

    def _upstream_headers(self, provider: ProviderConfig, hops: int = 1) -> dict:
        headers = {HOP_HEADER: str(hops)}
        if provider.authToken:
            headers["Authorization"] = f"Bearer {provider.authToken}"
        return headers

    def _fetch_provider_catalog(self, provider: ProviderConfig) -> list[ProcessDescription]:
        base = provider.baseUrl
        timeout = provider.timeout_seconds
        headers = self._upstream_headers(provider)
        summaries, offset = [], 0
        while True:
            resp = requests.get(f"{base}/processes", params={"limit": 200, "offset": offset},
                                headers=headers, timeout=timeout)
            resp.raise_for_status()
            page = resp.json()
            summaries.extend(page["processes"])
            offset += 200
            if offset >= page["total"]:
                break
        local_ids = [s["id"] for s in summaries]
        if provider.include is not None:
            local_ids = [i for i in local_ids if i in provider.include]
        if provider.exclude is not None:
            local_ids = [i for i in local_ids if i not in provider.exclude]
        descriptions = []
        for local_id in local_ids:
            resp = requests.get(f"{base}/processes/{local_id}", headers=headers, timeout=timeout)
            resp.raise_for_status()
            descriptions.append(ProcessDescription.from_dict(resp.json()))
        return descriptions

    # -- catalog ----------------------------------------------------------------

    def refresh_catalog(self) -> dict:
        """Concurrently re-mirror every provider; unreachable providers keep
        their last-known processes flagged unreachable."""
        providers = self.config.providers
        report: dict[str, dict] = {}
        fetched: dict[str, list[ProcessDescription] | None] = {}
        if providers:
            with ThreadPoolExecutor(max_workers=max(1, len(providers))) as pool:
                futures = {p.providerId: pool.submit(self._fetch_provider_catalog, p) for p in providers}
                for p in providers:
                    try:
                        fetched[p.providerId] = futures[p.providerId].result()
                    except Exception as exc:  # noqa: BLE001 - per-provider isolation
                        LOGGER.warning("provider %s unreachable during refresh: %s", p.providerId, exc)
                        fetched[p.providerId] = None
        now = self._clock()
        old = self._catalog
        processes: dict[str, MirroredProcess] = {}
        statuses: dict[str, ProviderStatus] = {}
        for p in providers:
            descriptions = fetched.get(p.providerId)
            if descriptions is None:
                stale = [m for m in old.processes.values() if m.provider == p.providerId]
                for m in stale:
                    processes[m.namespacedId] = replace(m, reachable=False)
                old_status = old.statuses.get(p.providerId)
                statuses[p.providerId] = ProviderStatus(
                    providerId=p.providerId, reachable=False,
                    lastRefreshed=old_status.lastRefreshed if old_status else None,
                    processCount=len(stale),
                )
                report[p.providerId] = {"unreachable": True}
                continue
            count = 0
            for desc in descriptions:
                local = flatten_local_id(desc.id)
                namespaced = f"{p.providerId}:{local}"
                if namespaced in processes:
                    LOGGER.warning("skipping %s: flattened ID collides", desc.id)
                    continue
                processes[namespaced] = MirroredProcess(
                    namespacedId=namespaced,
                    provider=p.providerId,
                    upstreamId=desc.id,
                    description=desc.with_id(namespaced),
                    lastRefreshed=now,
                    reachable=True,
                )
                count += 1
            statuses[p.providerId] = ProviderStatus(
                providerId=p.providerId, reachable=True, lastRefreshed=now, processCount=count,
            )
            report[p.providerId] = {"processCount": count}
        self._catalog = Catalog(processes=processes, statuses=statuses)
        return report

    def catalog_snapshot(self) -> Catalog:
        return self._catalog

    def _mirrored(self, namespaced_id: str) -> MirroredProcess:
        mirrored = self._catalog.processes.get(namespaced_id)
        if mirrored is None:
            raise errors.not_found(f"no such process {namespaced_id!r}")
        return mirrored

    def _provider_default_visibility(self, provider_id: str) -> str:
        p = self.provider(provider_id)
        if p is None or not p.public:
            return auth.AUTHENTICATED
        return auth.PUBLIC

    def visible_process_ids(self, principal) -> list[str]:
        snapshot = self._catalog
        return sorted(
            nsid for nsid, m in snapshot.processes.items()
            if auth.authorize_process(principal, nsid, self.policy,
                                      self._provider_default_visibility(m.provider))
        )

    # -- routing ------------------------------------------------------------------

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
        app.route("GET", "/health", self.handle_health)
        app.route("GET", "/admin/usage", self.handle_usage)
        app.route("POST", "/admin/sweep", self.handle_sweep)
        return app

    def handle_landing(self, request: Request) -> Response:
        return Response.json({
            "title": self.config.platformId,
            "description": "Federation platform for simulation process servers",
            "links": [
                {"href": "/", "rel": "self"},
                {"href": "/conformance", "rel": "conformance"},
                {"href": "/processes", "rel": "processes"},
                {"href": "/jobs", "rel": "jobs"},
            ],
        })

    def handle_conformance(self, request: Request) -> Response:
        return Response.json(ConformanceDeclaration().to_dict())

    def handle_list_processes(self, request: Request) -> Response:
        limit = request.int_query("limit", 100, 1, 1000)
        offset = request.int_query("offset", 0, 0, 10**9)
        visible = self.visible_process_ids(request.principal)
        snapshot = self._catalog
        page = [
            snapshot.processes[nsid].description.summary.to_dict()
            for nsid in visible[offset:offset + limit]
        ]
        return Response.json({"processes": page, "total": len(visible)})

    def handle_describe(self, request: Request) -> Response:
        nsid = request.path_params["processID"]
        mirrored = self._catalog.processes.get(nsid)
        if mirrored is None:
            raise errors.not_found(f"no such process {nsid!r}")
        auth.require_process_access(request.principal, nsid, self.policy,
                                    self._provider_default_visibility(mirrored.provider))
        headers = {} if mirrored.reachable else {"Warning": "stale"}
        return Response.json(mirrored.description.to_dict(), headers=headers)

    # -- execution forwarding -------------------------------------------------------

    def _check_hops(self, request: Request) -> int:
        raw = request.header(HOP_HEADER) or "0"
        try:
            incoming = int(raw)
        except ValueError:
            raise errors.bad_request(f"invalid {HOP_HEADER} header {raw!r}") from None
        if incoming + 1 > MAX_FEDERATION_HOPS:
            raise errors.ApiError(500, "federation-loop",
                                  f"federation hop limit of {MAX_FEDERATION_HOPS} exceeded")
        return incoming + 1

    def _relay_upstream_error(self, provider: ProviderConfig, resp) -> errors.ApiError:
        detail = f"provider {provider.providerId!r} rejected the request"
        violations = None
        try:
            problem = resp.json()
            detail = f"{detail}: {problem.get('detail', '')}"
            violations = problem.get("violations")
        except (ValueError, json.JSONDecodeError):
            pass
        status = resp.status_code if resp.status_code in (400, 401, 403, 404, 409, 410, 422, 429) else 502
        return errors.ApiError(status, "upstream-error", detail, violations)

    def handle_execute(self, request: Request) -> Response:
        nsid = request.path_params["processID"]
        mirrored = self._catalog.processes.get(nsid)
        if mirrored is None:
            raise errors.not_found(f"no such process {nsid!r}")
        auth.require_process_access(request.principal, nsid, self.policy,
                                    self._provider_default_visibility(mirrored.provider))
        provider = self.provider(mirrored.provider)
        if provider is None:
            raise errors.upstream_unreachable(f"provider {mirrored.provider!r} is no longer configured")
        hops = self._check_hops(request)
        prefer_async = request.prefer_async()
        principal = request.principal
        self.usage.check_quota(principal, self.manager.count_active(principal.subject),
                               counts_toward_jobs=prefer_async)
        if prefer_async:
            return self._forward_async(nsid, mirrored, provider, request, principal, hops)
        return self._forward_sync(nsid, mirrored, provider, request, principal, hops)

    def _upstream_execute(self, mirrored: MirroredProcess, provider: ProviderConfig,
                          body: bytes, prefer_async: bool, hops: int):
        headers = self._upstream_headers(provider, hops)
        headers["Content-Type"] = "application/json"
        if prefer_async:
            headers["Prefer"] = "respond-async"
        url = f"{provider.baseUrl}/processes/{mirrored.upstreamId}/execution"
        try:
            return requests.post(url, data=body, headers=headers, timeout=provider.timeout_seconds)
        except requests.Timeout:
            raise errors.upstream_timeout(
                f"provider {provider.providerId!r} timed out after {provider.timeoutMillis} ms"
            ) from None
        except requests.ConnectionError:
            raise errors.upstream_unreachable(
                f"provider {provider.providerId!r} is unreachable"
            ) from None

    def _forward_sync(self, nsid: str, mirrored: MirroredProcess, provider: ProviderConfig,
                      request: Request, principal, hops: int) -> Response:
        started = time.perf_counter()
        resp = self._upstream_execute(mirrored, provider, request.body, False, hops)
        if resp.status_code >= 400:
            raise self._relay_upstream_error(provider, resp)
        self.usage.record(principal.subject, nsid, "sync", time.perf_counter() - started)
        return Response(status=200, body=resp.content)

    def _forward_async(self, nsid: str, mirrored: MirroredProcess, provider: ProviderConfig,
                       request: Request, principal, hops: int) -> Response:
        job = self.manager.create_job(nsid, principal.subject,
                                      inputs={"body": request.body.decode("utf-8", "replace")},
                                      provider=provider.providerId)
        try:
            resp = self._upstream_execute(mirrored, provider, request.body, True, hops)
        except errors.ApiError as exc:
            self.manager.fail_job(job.jobId, exc.problem.detail)
            raise
        if resp.status_code >= 400:
            exc = self._relay_upstream_error(provider, resp)
            self.manager.fail_job(job.jobId, exc.problem.detail)
            raise exc
        upstream_job = resp.json()
        link = RemoteJobLink(platformJobId=job.jobId, provider=provider.providerId,
                             upstreamJobId=upstream_job["jobId"])
        with self._links_lock:
            self._links[job.jobId] = link
        return Response.json(job.to_dict(), status=201,
                             headers={"Location": f"/jobs/{job.jobId}"})

    # -- remote job polling ------------------------------------------------------------

    def poll_remote_jobs(self) -> int:
        """One polling pass over all linked, non-terminal platform jobs.
        Returns how many platform jobs changed state or progress."""
        with self._links_lock:
            links = list(self._links.values())
        updated = 0
        now = time.monotonic()
        for link in links:
            job = self.manager.get(link.platformJobId)
            if job.state in (JobState.SUCCESSFUL, JobState.FAILED, JobState.DISMISSED):
                continue
            until, _delay = self._backoff.get(link.provider, (0.0, 0.0))
            if now < until:
                continue
            provider = self.provider(link.provider)
            if provider is None:
                self.manager.fail_job(job.jobId, f"provider {link.provider!r} removed from configuration")
                updated += 1
                continue
            try:
                updated += self._poll_one(job, link, provider)
                self._backoff.pop(link.provider, None)
            except (requests.Timeout, requests.ConnectionError) as exc:
                LOGGER.debug("poll of %s failed: %s", link.provider, exc)
                _, delay = self._backoff.get(link.provider, (0.0, 0.0))
                delay = min(MAX_POLL_BACKOFF_SECONDS, max(self.config.pollIntervalMillis / 1000.0, delay * 2))
                self._backoff[link.provider] = (time.monotonic() + delay, delay)
        return updated

    def _poll_one(self, job, link: RemoteJobLink, provider: ProviderConfig) -> int:
        headers = self._upstream_headers(provider)
        url = f"{provider.baseUrl}/jobs/{link.upstreamJobId}"
        resp = requests.get(url, headers=headers, timeout=provider.timeout_seconds)
        if resp.status_code == 404:
            self.manager.fail_job(job.jobId, "upstream job lost")
            return 1
        resp.raise_for_status()
        upstream = resp.json()
        state = upstream.get("state")
        if state == "accepted":
            return 0
        if state == "running":
            changed = 0
            if job.state == JobState.ACCEPTED:
                self.manager.transition(job.jobId, JobState.RUNNING, message="running upstream")
                changed = 1
            self.manager.report_progress(job.jobId, upstream.get("progress", 0))
            return changed
        if state == "successful":
            return self._complete_remote(job, link, provider, upstream)
        if state == "failed":
            self.manager.fail_job(job.jobId, upstream.get("message") or "upstream execution failed")
            return 1
        if state == "dismissed":
            if job.state == JobState.ACCEPTED or job.state == JobState.RUNNING:
                self.manager.dismiss(job.jobId)
                return 1
            return 0
        self.manager.fail_job(job.jobId, f"upstream reported unknown state {state!r}")
        return 1

    def _complete_remote(self, job, link: RemoteJobLink, provider: ProviderConfig,
                         upstream: dict) -> int:
        compute = float(upstream.get("computeSeconds", 0.0))
        if job.state == JobState.ACCEPTED:
            self.manager.transition(job.jobId, JobState.RUNNING, message="running upstream")
        if provider.mirrorResults:
            headers = self._upstream_headers(provider)
            url = f"{provider.baseUrl}/jobs/{link.upstreamJobId}/results"
            resp = requests.get(url, headers=headers, timeout=provider.timeout_seconds)
            resp.raise_for_status()
            key = f"job-{job.jobId}"
            now = self._clock()
            expires = now + timedelta(seconds=provider.retentionSeconds)
            self._results.put(key, resp.content, expires_at=expires, created_at=now)
            self.manager.transition(job.jobId, JobState.SUCCESSFUL, message="finished",
                                    result_ref=key, compute_seconds=compute, expires_at=expires)
        else:
            remote_ref = f"remote:{link.provider}:{link.upstreamJobId}"
            now = self._clock()
            expires = now + timedelta(seconds=provider.retentionSeconds)
            self.manager.transition(job.jobId, JobState.SUCCESSFUL, message="finished upstream",
                                    result_ref=remote_ref, compute_seconds=compute,
                                    expires_at=expires)
        self.usage.record(job.owner, job.processId, job.jobId, compute)
        return 1

    # -- job handlers ---------------------------------------------------------------------

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
        if job.resultRef is not None and job.resultRef.startswith("remote:"):
            return Response(status=200, body=self._proxy_results(job))
        return Response(status=200, body=self.manager.get_results_bytes(job.jobId))

    def _proxy_results(self, job) -> bytes:
        if job.expiresAt is not None and job.expiresAt < self._clock():
            raise errors.gone(f"results of job {job.jobId} expired")
        _, provider_id, upstream_job_id = job.resultRef.split(":", 2)
        provider = self.provider(provider_id)
        if provider is None:
            raise errors.upstream_unreachable(f"provider {provider_id!r} is no longer configured")
        url = f"{provider.baseUrl}/jobs/{upstream_job_id}/results"
        try:
            resp = requests.get(url, headers=self._upstream_headers(provider),
                                timeout=provider.timeout_seconds)
        except requests.Timeout:
            raise errors.upstream_timeout(
                f"provider {provider_id!r} timed out serving results") from None
        except requests.ConnectionError:
            raise errors.upstream_unreachable(
                f"provider {provider_id!r} is unreachable for results") from None
        if resp.status_code >= 400:
            raise self._relay_upstream_error(provider, resp)
        return resp.content

    def handle_dismiss(self, request: Request) -> Response:
        job = self._job_for(request)
        updated = self.manager.dismiss(job.jobId)
        with self._links_lock:
            link = self._links.get(job.jobId)
        if link is not None:
            provider = self.provider(link.provider)
            if provider is not None:
                try:  # best effort: upstream may already be terminal
                    requests.delete(f"{provider.baseUrl}/jobs/{link.upstreamJobId}",
                                    headers=self._upstream_headers(provider),
                                    timeout=provider.timeout_seconds)
                except requests.RequestException:
                    pass
        return Response.json(updated.to_dict())

    # -- operational handlers ----------------------------------------------------------------

    def platform_health(self) -> dict:
        snapshot = self._catalog
        return {
            "providers": [
                {
                    "providerId": s.providerId,
                    "reachable": s.reachable,
                    "lastRefreshed": format_ts(s.lastRefreshed) if s.lastRefreshed else None,
                    "processCount": s.processCount,
                }
                for s in sorted(snapshot.statuses.values(), key=lambda s: s.providerId)
            ],
            "jobs": self.manager.counts(),
        }

    def handle_health(self, request: Request) -> Response:
        return Response.json(self.platform_health())

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

    # -- lifecycle ---------------------------------------------------------------------------

    def _poll_loop(self):
        while not self._stop.wait(self.config.pollIntervalMillis / 1000.0):
            try:
                self.poll_remote_jobs()
            except Exception:  # noqa: BLE001 - the poller must survive anything
                LOGGER.exception("remote job polling pass failed")

    def _refresh_loop(self):
        while not self._stop.wait(self.config.catalogRefreshSeconds):
            try:
                self.refresh_catalog()
                self.manager.sweep_expired()
            except Exception:  # noqa: BLE001
                LOGGER.exception("catalog refresh failed")

    def start(self, serve_http: bool = True, background_tasks: bool = True) -> "Platform":
        self.refresh_catalog()
        self._stop.clear()
        if background_tasks:
            self._poll_thread = threading.Thread(target=self._poll_loop, name="remote-job-poller", daemon=True)
            self._poll_thread.start()
            self._refresh_thread = threading.Thread(target=self._refresh_loop, name="catalog-refresh", daemon=True)
            self._refresh_thread.start()
        if serve_http:
            host, port = parse_bind_address(self.config.bindAddress)
            self._service = HttpService(self.app, host, port).start()
        return self

    @property
    def url(self) -> str:
        if self._service is None:
            raise RuntimeError("platform not started")
        return self._service.url

    def stop(self):
        self._stop.set()
        for thread in (self._poll_thread, self._refresh_thread):
            if thread is not None and thread.is_alive():
                thread.join(timeout=2.0)
        if self._service is not None:
            self._service.stop()
            self._service = None
        self.manager.stop()
