"""Typed HTTP client for the process API, used by the CLI, the chained
comfort model, and tests."""

from __future__ import annotations

import json
import time

import requests

from .protocol import ProcessDescription, ProcessSummary

TERMINAL_JOB_STATES = {"successful", "failed", "dismissed"}


class RemoteError(Exception):
    """An HTTP-level failure; carries the ProblemDetail body when one came back."""

    def __init__(self, status: int | None, problem: dict | None, message: str):
        super().__init__(message)
        self.status = status
        self.problem = problem or {}

    def problem_text(self) -> str:
        if self.problem:
            detail = self.problem.get("detail", "")
            violations = self.problem.get("violations")
            text = f"{self.problem.get('type', 'error')} ({self.problem.get('status')}): {detail}"
            if violations:
                text += "; " + "; ".join(violations)
            return text
        return str(self)


class ApiClient:
    def __init__(self, base_url: str, token: str | None = None, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()
        if token:
            self._session.headers["Authorization"] = f"Bearer {token}"

    def _request(self, method: str, path: str, *, json_body=None, headers=None, params=None):
        url = self.base_url + path
        try:
            resp = self._session.request(
                method, url, json=json_body, headers=headers, params=params, timeout=self.timeout
            )
        except requests.Timeout as exc:
            raise RemoteError(None, None, f"timeout talking to {url}") from exc
        except requests.ConnectionError as exc:
            raise RemoteError(None, None, f"cannot reach {url}") from exc
        if resp.status_code >= 400:
            problem = None
            try:
                problem = resp.json()
            except (ValueError, json.JSONDecodeError):
                pass
            raise RemoteError(resp.status_code, problem,
                              f"{method} {path} -> {resp.status_code}")
        return resp

    # -- discovery ----------------------------------------------------------

    def landing(self) -> dict:
        return self._request("GET", "/").json()

    def conformance(self) -> dict:
        return self._request("GET", "/conformance").json()

    def processes(self, limit: int = 100, offset: int = 0) -> dict:
        return self._request("GET", "/processes",
                             params={"limit": limit, "offset": offset}).json()

    def all_process_ids(self) -> list[str]:
        ids, offset = [], 0
        while True:
            page = self.processes(limit=200, offset=offset)
            ids.extend(p["id"] for p in page["processes"])
            offset += 200
            if offset >= page["total"]:
                return ids

    def describe(self, process_id: str) -> dict:
        return self._request("GET", f"/processes/{process_id}").json()

    def describe_typed(self, process_id: str) -> ProcessDescription:
        return ProcessDescription.from_dict(self.describe(process_id))

    # -- execution ----------------------------------------------------------

    def execute(self, process_id: str, inputs: dict, *, prefer_async: bool = False,
                requested_outputs: list[str] | None = None, extra_headers=None):
        """Sync execution returns the outputs map; async returns the job doc."""
        headers = dict(extra_headers or {})
        if prefer_async:
            headers["Prefer"] = "respond-async"
        body: dict = {"inputs": inputs}
        if requested_outputs is not None:
            body["requestedOutputs"] = requested_outputs
        resp = self._request("POST", f"/processes/{process_id}/execution",
                             json_body=body, headers=headers)
        return resp.json()

    def execute_raw(self, process_id: str, body: bytes, *, prefer_async: bool = False):
        """Execution with a verbatim body; returns the raw response."""
        headers = {"Content-Type": "application/json"}
        if prefer_async:
            headers["Prefer"] = "respond-async"
        return self._post_bytes(f"/processes/{process_id}/execution", body, headers)

    def _post_bytes(self, path: str, body: bytes, headers: dict):
        url = self.base_url + path
        try:
            resp = self._session.post(url, data=body, headers=headers, timeout=self.timeout)
        except requests.Timeout as exc:
            raise RemoteError(None, None, f"timeout talking to {url}") from exc
        except requests.ConnectionError as exc:
            raise RemoteError(None, None, f"cannot reach {url}") from exc
        if resp.status_code >= 400:
            problem = None
            try:
                problem = resp.json()
            except ValueError:
                pass
            raise RemoteError(resp.status_code, problem, f"POST {path} -> {resp.status_code}")
        return resp

    # -- jobs -----------------------------------------------------------------

    def jobs(self, limit: int = 100, offset: int = 0) -> dict:
        return self._request("GET", "/jobs", params={"limit": limit, "offset": offset}).json()

    def job(self, job_id: str) -> dict:
        return self._request("GET", f"/jobs/{job_id}").json()

    def results(self, job_id: str) -> dict:
        return self._request("GET", f"/jobs/{job_id}/results").json()

    def results_bytes(self, job_id: str) -> bytes:
        return self._request("GET", f"/jobs/{job_id}/results").content

    def dismiss(self, job_id: str) -> dict:
        return self._request("DELETE", f"/jobs/{job_id}").json()

    def wait_for_job(self, job_id: str, timeout: float = 30.0, interval: float = 0.05) -> dict:
        deadline = time.monotonic() + timeout
        while True:
            job = self.job(job_id)
            if job["state"] in TERMINAL_JOB_STATES:
                return job
            if time.monotonic() > deadline:
                raise RemoteError(None, None, f"job {job_id} did not finish within {timeout}s")
            time.sleep(interval)

    # -- admin ----------------------------------------------------------------

    def usage(self, subject: str | None = None) -> dict:
        params = {"subject": subject} if subject else None
        return self._request("GET", "/admin/usage", params=params).json()

    def sweep(self, now: str | None = None) -> dict:
        body = {"now": now} if now else {}
        return self._request("POST", "/admin/sweep", json_body=body).json()

    def health(self) -> dict:
        return self._request("GET", "/health").json()


def summaries_from_page(page: dict) -> list[ProcessSummary]:
    return [ProcessSummary.from_dict(p) for p in page["processes"]]
