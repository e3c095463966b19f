import json
import random
import time

import pytest
import requests

from ump import errors
from ump.client import ApiClient, RemoteError
from ump.processes import (
    heat_diffusion_description,
    heat_diffusion_executor,
    noise_map_description,
    noise_map_executor,
)
from ump.protocol import ConformanceDeclaration, ProcessDescription
from ump.server import ModelServer, ProcessRegistration, ServerConfig

from conftest import body_json, call, constant_executor, failing_executor, make_description


@pytest.fixture
def server():
    srv = ModelServer(ServerConfig(serverId="test-server"))
    srv.register_process(ProcessRegistration(heat_diffusion_description(), heat_diffusion_executor))
    srv.register_process(ProcessRegistration(noise_map_description(), noise_map_executor))
    yield srv
    srv.stop()


@pytest.fixture
def live(server):
    server.start()
    return ApiClient(server.url)


def uniform_grid(value=20.0, w=3, h=3):
    return {"width": w, "height": h, "cellSize": 1.0, "origin": [0.0, 0.0],
            "values": [value] * (w * h)}


class TestRegistration:
    def test_register_into_empty_registry(self):
        srv = ModelServer()
        try:
            count = srv.register_process(ProcessRegistration(make_description("p1"), constant_executor()))
            assert count == 1
            assert srv.registered_ids() == ["p1"]
        finally:
            srv.stop()

    def test_duplicate_id_conflict(self):
        srv = ModelServer()
        try:
            srv.register_process(ProcessRegistration(make_description("p1"), constant_executor()))
            with pytest.raises(errors.ApiError) as err:
                srv.register_process(ProcessRegistration(make_description("p1"), constant_executor()))
            assert err.value.status == 409
        finally:
            srv.stop()

    def test_list_sorted_lexicographically(self):
        srv = ModelServer()
        try:
            for pid in ["zeta", "alpha", "midway"]:
                srv.register_process(ProcessRegistration(make_description(pid), constant_executor()))
            response = call(srv.app, "GET", "/processes")
            ids = [p["id"] for p in body_json(response)["processes"]]
            assert ids == ["alpha", "midway", "zeta"]
            assert body_json(response)["total"] == 3
        finally:
            srv.stop()


class TestDiscoveryEndpoints:
    def test_landing_has_exactly_expected_relations(self, server):
        doc = body_json(call(server.app, "GET", "/"))
        rels = [link["rel"] for link in doc["links"]]
        assert rels == ["self", "conformance", "processes", "jobs"]
        assert doc["title"] == "test-server"

    def test_landing_links_resolve(self, live):
        doc = live.landing()
        for link in doc["links"]:
            resp = requests.get(live.base_url + link["href"], timeout=5)
            assert resp.status_code == 200, link

    def test_conformance_stable_and_parseable(self, server):
        bodies = {call(server.app, "GET", "/conformance").body for _ in range(3)}
        assert len(bodies) == 1
        decl = ConformanceDeclaration.from_dict(body_json(call(server.app, "GET", "/conformance")))
        assert any(uri.endswith("/conf/core") for uri in decl.conformsTo)

    def test_seven_core_endpoints_respond(self, live, server):
        # the full bit-exact route set on a live socket
        job = live.execute("heat-diffusion", {"grid": uniform_grid()}, prefer_async=True)
        checks = [
            ("GET", "/", 200),
            ("GET", "/conformance", 200),
            ("GET", "/processes", 200),
            ("GET", "/processes/heat-diffusion", 200),
            ("GET", "/jobs", 200),
            ("GET", f"/jobs/{job['jobId']}", 200),
        ]
        for method, path, expected in checks:
            resp = requests.request(method, live.base_url + path, timeout=5)
            assert resp.status_code == expected, (method, path, resp.status_code)
        live.wait_for_job(job["jobId"])
        assert requests.get(live.base_url + f"/jobs/{job['jobId']}/results", timeout=5).status_code == 200
        assert requests.post(
            live.base_url + "/processes/heat-diffusion/execution",
            json={"inputs": {"grid": uniform_grid()}}, timeout=5,
        ).status_code == 200
        assert requests.delete(live.base_url + f"/jobs/{job['jobId']}", timeout=5).status_code == 409

    def test_reads_are_stateless(self, live):
        for path in ["/", "/conformance", "/processes", "/processes/heat-diffusion"]:
            first = requests.get(live.base_url + path, timeout=5).content
            second = requests.get(live.base_url + path, timeout=5).content
            assert first == second


class TestListPaging:
    def test_limit_and_offset(self, server):
        page = body_json(call(server.app, "GET", "/processes", query={"limit": "1", "offset": "0"}))
        assert len(page["processes"]) == 1
        assert page["total"] == 2

    def test_offset_beyond_end(self, server):
        page = body_json(call(server.app, "GET", "/processes", query={"limit": "5", "offset": "10"}))
        assert page["processes"] == []
        assert page["total"] == 2

    def test_bad_paging_rejected(self, server):
        for query in [{"limit": "0"}, {"limit": "1001"}, {"limit": "x"}, {"offset": "-1"}]:
            response = call(server.app, "GET", "/processes", query=query)
            assert response.status == 400, query

    def test_union_over_pages_is_registry(self, rng):
        for _ in range(10):
            srv = ModelServer()
            try:
                n = rng.randint(1, 17)
                for i in range(n):
                    srv.register_process(
                        ProcessRegistration(make_description(f"proc-{i:03d}"), constant_executor()))
                page_size = rng.randint(1, 7)
                seen, offset = [], 0
                while True:
                    page = body_json(call(srv.app, "GET", "/processes",
                                          query={"limit": str(page_size), "offset": str(offset)}))
                    if not page["processes"]:
                        break
                    seen.extend(p["id"] for p in page["processes"])
                    offset += page_size
                assert sorted(seen) == sorted(f"proc-{i:03d}" for i in range(n))
                assert len(seen) == len(set(seen))
            finally:
                srv.stop()


class TestDescribe:
    def test_heat_description_inputs(self, server):
        doc = body_json(call(server.app, "GET", "/processes/heat-diffusion"))
        assert set(doc["inputs"]) == {"grid", "alpha", "iterations"}
        parsed = ProcessDescription.from_dict(doc)
        assert parsed.validate() == []

    def test_unknown_process_404(self, server):
        assert call(server.app, "GET", "/processes/nope").status == 404


class TestExecute:
    def test_sync_noise_at_reference_distance(self, live):
        outputs = live.execute("noise-map", {
            "sources": [{"x": 0.5, "y": 0.5, "attributes": {"level": 91.0}}],
            "width": 1, "height": 1,
        })
        assert outputs["levels"]["values"] == [91.0]

    def test_async_returns_201_with_location(self, server):
        server.start()
        resp = requests.post(
            server.url + "/processes/heat-diffusion/execution",
            json={"inputs": {"grid": uniform_grid()}},
            headers={"Prefer": "respond-async"}, timeout=5)
        assert resp.status_code == 201
        job = resp.json()
        assert job["state"] == "accepted"
        assert resp.headers["Location"] == f"/jobs/{job['jobId']}"

    def test_missing_required_input_422(self, live):
        with pytest.raises(RemoteError) as err:
            live.execute("heat-diffusion", {})
        assert err.value.status == 422
        assert err.value.problem["violations"] == ["grid: required, absent"]

    def test_defaults_applied_before_validation(self, live):
        outputs = live.execute("heat-diffusion", {"grid": uniform_grid(20.0)})
        assert outputs["grid"]["values"] == [20.0] * 9  # defaults alpha/iterations kick in

    def test_unknown_process_404(self, live):
        with pytest.raises(RemoteError) as err:
            live.execute("missing", {})
        assert err.value.status == 404

    def test_malformed_body_400(self, live):
        resp = requests.post(live.base_url + "/processes/heat-diffusion/execution",
                             data=b"{not json", headers={"Content-Type": "application/json"},
                             timeout=5)
        assert resp.status_code == 400
        assert resp.headers["Content-Type"] == "application/problem+json"

    def test_requested_outputs_filter(self, live):
        outputs = live.execute("noise-map", {
            "sources": [{"x": 0.5, "y": 0.5, "attributes": {"level": 60.0}}],
            "width": 1, "height": 1,
        }, requested_outputs=["levels"])
        assert set(outputs) == {"levels"}

    def test_execution_isolation(self, live, server):
        server.register_process(ProcessRegistration(make_description("broken"), failing_executor))
        with pytest.raises(RemoteError) as err:
            live.execute("broken", {})
        assert err.value.status == 500
        # the rest of the server is unaffected
        assert "heat-diffusion" in live.all_process_ids()
        outputs = live.execute("heat-diffusion", {"grid": uniform_grid()})
        assert outputs["grid"]["values"] == [20.0] * 9


class TestJobRoutes:
    def test_job_lifecycle_over_http(self, live):
        job = live.execute("heat-diffusion", {"grid": uniform_grid(), "iterations": 2},
                           prefer_async=True)
        final = live.wait_for_job(job["jobId"])
        assert final["state"] == "successful"
        assert final["progress"] == 100
        results = live.results(job["jobId"])
        assert results["grid"]["values"] == [20.0] * 9

    def test_results_content_type_json(self, live):
        job = live.execute("heat-diffusion", {"grid": uniform_grid()}, prefer_async=True)
        live.wait_for_job(job["jobId"])
        resp = requests.get(live.base_url + f"/jobs/{job['jobId']}/results", timeout=5)
        assert resp.headers["Content-Type"] == "application/json"

    def test_unknown_job_404(self, live):
        with pytest.raises(RemoteError) as err:
            live.job("11111111-2222-3333-4444-555555555555")
        assert err.value.status == 404

    def test_sync_execution_creates_no_job(self, live):
        before = live.jobs()["total"]
        live.execute("heat-diffusion", {"grid": uniform_grid()})
        assert live.jobs()["total"] == before

    def test_job_list_contains_async_jobs(self, live):
        job = live.execute("heat-diffusion", {"grid": uniform_grid()}, prefer_async=True)
        live.wait_for_job(job["jobId"])
        listed = live.jobs()
        assert any(j["jobId"] == job["jobId"] for j in listed["jobs"])


class TestTokenMode:
    @pytest.fixture
    def token_server(self, tmp_path):
        tokens = tmp_path / "tokens.tsv"
        tokens.write_text(
            "tok-ada\tada\tadmin\t8\t86400\n"
            "tok-bob\tbob\t\t8\t86400\n"
        )
        srv = ModelServer(ServerConfig(serverId="secured", authMode="token",
                                       tokenFile=str(tokens)))
        srv.register_process(ProcessRegistration(make_description("p"), constant_executor()))
        srv.start()
        yield srv
        srv.stop()

    def test_garbage_token_401(self, token_server):
        resp = requests.get(token_server.url + "/processes",
                            headers={"Authorization": "Bearer nope"}, timeout=5)
        assert resp.status_code == 401

    def test_foreign_job_403(self, token_server):
        ada = ApiClient(token_server.url, token="tok-ada")
        bob = ApiClient(token_server.url, token="tok-bob")
        job = bob.execute("p", {}, prefer_async=True)
        bob.wait_for_job(job["jobId"])
        assert bob.job(job["jobId"])["state"] == "successful"
        # ada is admin so may see it; a plain different owner may not
        resp = requests.get(token_server.url + f"/jobs/{job['jobId']}", timeout=5)
        assert resp.status_code == 403  # anonymous is not the owner
        assert ada.job(job["jobId"])["owner"] == "bob"

    def test_admin_endpoints_gated(self, token_server):
        bob = ApiClient(token_server.url, token="tok-bob")
        with pytest.raises(RemoteError) as err:
            bob.usage()
        assert err.value.status == 403
        ada = ApiClient(token_server.url, token="tok-ada")
        assert "subjects" in ada.usage()


class TestCors:
    def test_preflight_and_response_headers(self, live):
        preflight = requests.options(
            live.base_url + "/processes",
            headers={"Origin": "http://localhost:5173",
                     "Access-Control-Request-Method": "POST"}, timeout=5)
        assert preflight.status_code == 204
        assert preflight.headers["Access-Control-Allow-Origin"] == "*"
        assert "Authorization" in preflight.headers["Access-Control-Allow-Headers"]
        normal = requests.get(live.base_url + "/processes", timeout=5)
        assert normal.headers["Access-Control-Allow-Origin"] == "*"


class TestRouteAudit:
    def test_every_route_but_landing_and_conformance_authenticates(self, server):
        open_routes = {("GET", "/"), ("GET", "/conformance")}
        for route in server.app.routes:
            key = (route.method, route.pattern)
            if key in open_routes:
                assert not route.authenticated, key
            else:
                assert route.authenticated, key

    def test_bit_exact_route_set_present(self, server):
        expected = {
            ("GET", "/"), ("GET", "/conformance"), ("GET", "/processes"),
            ("GET", "/processes/{processID}"), ("POST", "/processes/{processID}/execution"),
            ("GET", "/jobs"), ("GET", "/jobs/{jobID}"), ("GET", "/jobs/{jobID}/results"),
            ("DELETE", "/jobs/{jobID}"),
        }
        actual = {(r.method, r.pattern) for r in server.app.routes}
        assert expected <= actual
