import json
import os
import signal
import socket
import subprocess
import sys
import threading
import time

import pytest

from ump.demo import build_demo

CLI = [sys.executable, "-m", "ump.cli"]


def run_cli(*args, input_text=None, timeout=30):
    return subprocess.run(
        CLI + list(args), input=input_text, capture_output=True, text=True, timeout=timeout)


def spawn_cli(*args):
    return subprocess.Popen(
        CLI + list(args), stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)


def read_ready_line(proc, timeout=15):
    deadline = time.monotonic() + timeout
    lines = []
    while time.monotonic() < deadline:
        line = proc.stdout.readline()
        if not line:
            time.sleep(0.02)
            continue
        lines.append(line.strip())
        if line.startswith("READY "):
            return line.split(" ", 1)[1].strip(), lines
    raise AssertionError(f"no READY line, saw: {lines}")


def free_port():
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def demo():
    topo = build_demo()
    yield topo
    topo.stop()


def uniform_grid(value=20.0):
    return {"width": 3, "height": 3, "cellSize": 1.0, "origin": [0.0, 0.0],
            "values": [value] * 9}


class TestServeCommands:
    def test_model_server_ready_then_sigterm(self, tmp_path):
        config = tmp_path / "server.yaml"
        port = free_port()
        config.write_text(json.dumps({
            "bindAddress": f"127.0.0.1:{port}",
            "serverId": "cli-server",
            "processes": ["heat-diffusion", "noise-map"],
        }))
        proc = spawn_cli("serve", "model-server", "--config", str(config))
        try:
            url, _ = read_ready_line(proc)
            import requests
            assert requests.get(url + "/processes", timeout=5).json()["total"] == 2
        finally:
            proc.send_signal(signal.SIGTERM)
        assert proc.wait(timeout=10) == 0

    def test_platform_ready(self, tmp_path, demo):
        config = tmp_path / "platform.yaml"
        config.write_text(json.dumps({
            "server": {"bindAddress": f"127.0.0.1:{free_port()}"},
            "providers": [{"providerId": "alpha", "baseUrl": demo.alpha_url}],
        }))
        proc = spawn_cli("serve", "platform", "--config", str(config))
        try:
            url, _ = read_ready_line(proc)
            import requests
            ids = [p["id"] for p in requests.get(url + "/processes", timeout=5).json()["processes"]]
            assert ids == ["alpha:heat-diffusion", "alpha:noise-map"]
        finally:
            proc.send_signal(signal.SIGTERM)
        assert proc.wait(timeout=10) == 0

    def test_bad_config_exit_1(self, tmp_path):
        config = tmp_path / "bad.yaml"
        config.write_text("providers: [{providerId: [broken\n")
        result = run_cli("serve", "platform", "--config", str(config))
        assert result.returncode == 1

    def test_missing_config_exit_1(self):
        result = run_cli("serve", "platform", "--config", "/nonexistent.yaml")
        assert result.returncode == 1

    def test_port_in_use_exit_3(self, tmp_path):
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        config = tmp_path / "server.yaml"
        config.write_text(json.dumps({"bindAddress": f"127.0.0.1:{port}", "processes": []}))
        try:
            result = run_cli("serve", "model-server", "--config", str(config), timeout=20)
            assert result.returncode == 3
        finally:
            blocker.close()


class TestClientCommands:
    def test_processes_lists_three_namespaced_ids(self, demo):
        result = run_cli("client", "processes", "--base-url", demo.platform_url, "--json")
        assert result.returncode == 0
        page = json.loads(result.stdout)
        assert [p["id"] for p in page["processes"]] == [
            "alpha:heat-diffusion", "alpha:noise-map", "beta:comfort-index"]

    def test_describe(self, demo):
        result = run_cli("client", "describe", "alpha:heat-diffusion",
                         "--base-url", demo.platform_url, "--json")
        assert result.returncode == 0
        doc = json.loads(result.stdout)
        assert doc["summary"]["id"] == "alpha:heat-diffusion"

    def test_execute_wait_uniform_grid_fixed_point(self, demo, tmp_path):
        inputs = tmp_path / "inputs.json"
        inputs.write_text(json.dumps({"grid": uniform_grid(), "alpha": 0.25, "iterations": 4}))
        result = run_cli("client", "execute", "alpha:heat-diffusion",
                         "--base-url", demo.platform_url, "--inputs", str(inputs),
                         "--wait", "--json")
        assert result.returncode == 0, result.stderr
        outputs = json.loads(result.stdout)
        assert outputs["grid"]["values"] == [20.0] * 9

    def test_execute_sync_from_stdin(self, demo):
        payload = json.dumps({
            "sources": [{"x": 0.5, "y": 0.5, "attributes": {"level": 77.0}}],
            "width": 1, "height": 1})
        result = run_cli("client", "execute", "alpha:noise-map",
                         "--base-url", demo.platform_url, "--json",
                         input_text=payload)
        assert result.returncode == 0
        assert json.loads(result.stdout)["levels"]["values"] == [77.0]

    def test_status_and_results_roundtrip(self, demo):
        submit = run_cli("client", "execute", "alpha:heat-diffusion",
                         "--base-url", demo.platform_url, "--json", "--async",
                         input_text=json.dumps({"grid": uniform_grid()}))
        assert submit.returncode == 0, submit.stderr
        job = json.loads(submit.stdout)
        deadline = time.monotonic() + 15
        state = job["state"]
        while state not in ("successful", "failed", "dismissed") and time.monotonic() < deadline:
            status = run_cli("client", "status", job["jobId"],
                             "--base-url", demo.platform_url, "--json")
            state = json.loads(status.stdout)["state"]
            time.sleep(0.1)
        assert state == "successful"
        results = run_cli("client", "results", job["jobId"],
                          "--base-url", demo.platform_url, "--json")
        assert results.returncode == 0
        assert json.loads(results.stdout)["grid"]["values"] == [20.0] * 9

    def test_unknown_process_exit_2(self, demo):
        result = run_cli("client", "execute", "alpha:missing",
                         "--base-url", demo.platform_url, input_text="{}")
        assert result.returncode == 2

    def test_unreachable_host_exit_2(self):
        result = run_cli("client", "processes", "--base-url", "http://127.0.0.1:1",
                         "--timeout", "2")
        assert result.returncode == 2

    def test_timeout_exit_2(self):
        # a socket that accepts but never answers
        silent = socket.socket()
        silent.bind(("127.0.0.1", 0))
        silent.listen(1)
        port = silent.getsockname()[1]
        try:
            result = run_cli("client", "processes",
                             "--base-url", f"http://127.0.0.1:{port}", "--timeout", "0.5")
            assert result.returncode == 2
        finally:
            silent.close()

    def test_wait_on_failing_job_exit_2(self, demo):
        # missing level attribute fails inside the executor; --wait surfaces it
        payload = json.dumps({"sources": [{"x": 0, "y": 0}], "width": 1, "height": 1})
        result = run_cli("client", "execute", "alpha:noise-map",
                         "--base-url", demo.platform_url, "--wait",
                         input_text=payload, timeout=60)
        assert result.returncode == 2
        assert "failed" in result.stderr

    def test_server_side_500_exit_2(self, demo):
        # missing noise level attribute raises inside the executor -> 500 -> exit 2
        payload = json.dumps({"sources": [{"x": 0, "y": 0}], "width": 1, "height": 1})
        result = run_cli("client", "execute", "alpha:noise-map",
                         "--base-url", demo.platform_url, input_text=payload)
        assert result.returncode == 2

    def test_json_output_parse_stable(self, demo):
        result = run_cli("client", "describe", "alpha:noise-map",
                         "--base-url", demo.platform_url, "--json")
        from ump.protocol import ProcessDescription
        doc = json.loads(result.stdout)
        parsed = ProcessDescription.from_dict(doc)
        assert parsed.to_dict() == doc


class TestAdminCommands:
    @pytest.fixture
    def secured_platform(self, tmp_path, demo):
        from ump.federation import Platform, PlatformConfig, ProviderConfig

        tokens = tmp_path / "tokens.tsv"
        tokens.write_text(
            "tok-root\troot\tadmin\t64\t86400\n"
            "tok-user\tuser\t\t64\t86400\n"
        )
        platform = Platform(PlatformConfig(
            providers=(ProviderConfig(providerId="alpha", baseUrl=demo.alpha_url),),
            authMode="token", tokenFile=str(tokens), pollIntervalMillis=100))
        platform.start()
        yield platform
        platform.stop()

    def test_usage_requires_admin(self, secured_platform):
        denied = run_cli("admin", "usage", "--base-url", secured_platform.url,
                         "--token", "tok-user")
        assert denied.returncode == 2
        allowed = run_cli("admin", "usage", "--base-url", secured_platform.url,
                          "--token", "tok-root", "--json")
        assert allowed.returncode == 0
        assert "subjects" in json.loads(allowed.stdout)

    def test_usage_sums_match(self, secured_platform):
        payload = json.dumps({
            "sources": [{"x": 0.5, "y": 0.5, "attributes": {"level": 60.0}}],
            "width": 1, "height": 1})
        for _ in range(2):
            result = run_cli("client", "execute", "alpha:noise-map",
                             "--base-url", secured_platform.url, "--token", "tok-user",
                             input_text=payload)
            assert result.returncode == 0
        report = run_cli("admin", "usage", "--base-url", secured_platform.url,
                         "--token", "tok-root", "--subject", "user", "--json")
        doc = json.loads(report.stdout)
        assert len(doc["records"]) == 2
        assert doc["totalComputeSeconds"] == sum(r["computeSeconds"] for r in doc["records"])

    def test_sweep_requires_admin_and_is_idempotent(self, secured_platform):
        denied = run_cli("admin", "sweep", "--base-url", secured_platform.url,
                         "--token", "tok-user")
        assert denied.returncode == 2
        swept = run_cli("admin", "sweep", "--base-url", secured_platform.url,
                        "--token", "tok-root", "--json")
        assert swept.returncode == 0
        assert json.loads(swept.stdout) == {"purged": 0}

    def test_missing_token_exit_2(self, secured_platform):
        env = {k: v for k, v in os.environ.items() if k != "UMP_TOKEN"}
        result = subprocess.run(
            CLI + ["admin", "usage", "--base-url", secured_platform.url],
            capture_output=True, text=True, timeout=30, env=env)
        assert result.returncode == 2


class TestDemoCommand:
    def test_demo_up_serves_three_processes_and_tears_down(self):
        p1, p2, p3 = free_port(), free_port(), free_port()
        proc = spawn_cli("demo", "up", "--platform-port", str(p1),
                         "--alpha-port", str(p2), "--beta-port", str(p3))
        try:
            url, lines = read_ready_line(proc)
            assert any("alpha" in line for line in lines)
            import requests
            page = requests.get(url + "/processes", timeout=5).json()
            assert page["total"] == 3
            # chained comfort execution through the platform works in the demo
            payload = {"inputs": {
                "grid": uniform_grid(), "sources": [
                    {"x": 1.5, "y": 1.5, "attributes": {"level": 55.0}}]}}
            resp = requests.post(url + "/processes/beta:comfort-index/execution",
                                 json=payload, timeout=30)
            assert resp.status_code == 200
            assert len(resp.json()["index"]["values"]) == 9
        finally:
            proc.send_signal(signal.SIGTERM)
        assert proc.wait(timeout=15) == 0
        # teardown leaves the ports free again (REUSEADDR skips TIME_WAIT residue
        # but still fails if a live listener survived)
        for port in (p1, p2, p3):
            with socket.socket() as sock:
                sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
                sock.bind(("127.0.0.1", port))

    def test_demo_kill_one_server_degrades_only_its_processes(self):
        topo = build_demo()
        try:
            import requests
            topo.beta.stop()
            topo.platform.refresh_catalog()
            health = requests.get(topo.platform_url + "/health", timeout=5).json()
            reachable = {p["providerId"]: p["reachable"] for p in health["providers"]}
            assert reachable == {"alpha": True, "beta": False}
            ok = requests.post(
                topo.platform_url + "/processes/alpha:heat-diffusion/execution",
                json={"inputs": {"grid": uniform_grid()}}, timeout=10)
            assert ok.status_code == 200
            dead = requests.post(
                topo.platform_url + "/processes/beta:comfort-index/execution",
                json={"inputs": {"grid": uniform_grid(), "sources": []}}, timeout=10)
            assert dead.status_code in (502, 504)
        finally:
            topo.stop()


class TestUsageErrors:
    def test_unknown_command_exit_1(self):
        result = run_cli("client", "frobnicate")
        assert result.returncode == 1

    def test_help_works_everywhere(self):
        for args in [["--help"], ["client", "--help"], ["serve", "--help"],
                     ["admin", "--help"], ["client", "execute", "--help"]]:
            result = run_cli(*args)
            assert result.returncode == 0
            assert "Usage" in result.stdout or "usage" in result.stdout
