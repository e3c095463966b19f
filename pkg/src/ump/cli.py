"""Single operational entry point: serve, client, admin and demo commands.

Exit codes: 0 success, 1 usage error, 2 remote error, 3 local fault.
Flags override environment variables (UMP_CONFIG, UMP_PORT, UMP_TOKEN,
MODEL_SERVER_CONFIG, MODEL_SERVER_PORT), which override the config file.
"""

from __future__ import annotations

import json
import signal
import sys
import threading

import click

from .client import ApiClient, RemoteError
from .demo import build_demo, bundled_registrations
from .federation import ConfigError, Platform, PlatformConfig
from .microservice import SubprocessExecutor
from .processes import ComfortIndexExecutor, comfort_index_description
from .protocol import ProcessDescription
from .server import ModelServer, ProcessRegistration, ServerConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REMOTE = 2
EXIT_LOCAL = 3


class LocalFault(Exception):
    pass


def _emit(doc, as_json: bool, human: str | None = None):
    if as_json:
        click.echo(json.dumps(doc, sort_keys=True, indent=2))
    else:
        click.echo(human if human is not None else json.dumps(doc, sort_keys=True, indent=2))


def _client(base_url: str, token: str | None, timeout: float = 30.0) -> ApiClient:
    return ApiClient(base_url, token=token, timeout=timeout)


@click.group()
def cli():
    """Simulation process servers, federation platform, client and admin tools."""


# ---------------------------------------------------------------------------
# serve


def _override_port(bind_address: str, port: int | None) -> str:
    if port is None:
        return bind_address
    host = bind_address.rsplit(":", 1)[0]
    return f"{host}:{port}"


def _run_until_signal(stop_fn, ready_url: str, as_json: bool = False):
    done = threading.Event()

    def handler(_signum, _frame):
        done.set()

    signal.signal(signal.SIGTERM, handler)
    signal.signal(signal.SIGINT, handler)
    if as_json:
        click.echo(json.dumps({"ready": ready_url}))
    click.echo(f"READY {ready_url}")
    sys.stdout.flush()
    done.wait()
    stop_fn()


def _register_configured_processes(server: ModelServer, entries):
    for entry in entries:
        if isinstance(entry, str):
            registrations = bundled_registrations()
            if entry not in registrations:
                raise ConfigError(
                    f"process {entry!r} is not bundled; use a mapping with id/platformUrl or id/argv"
                )
            server.register_process(registrations[entry])
            continue
        pid = entry.get("id")
        if pid == "comfort-index" and "platformUrl" in entry:
            executor = ComfortIndexExecutor(
                entry["platformUrl"],
                heat_process_id=entry.get("heatProcessId", "heat-diffusion"),
                noise_process_id=entry.get("noiseProcessId", "noise-map"),
                token=entry.get("authToken"),
            )
            server.register_process(ProcessRegistration(comfort_index_description(), executor))
        elif "argv" in entry and "descriptionFile" in entry:
            with open(entry["descriptionFile"], "rb") as fh:
                description = ProcessDescription.from_dict(json.load(fh))
            server.register_process(
                ProcessRegistration(description, SubprocessExecutor(entry["argv"]))
            )
        else:
            raise ConfigError(f"unsupported process entry {entry!r}")


@cli.group()
def serve():
    """Run a model server or a federation platform."""


@serve.command("model-server")
@click.option("--config", "config_path", envvar="MODEL_SERVER_CONFIG", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--port", envvar="MODEL_SERVER_PORT", type=int, default=None)
@click.option("--json", "as_json", is_flag=True, help="machine-readable readiness line")
def serve_model_server(config_path, port, as_json):
    """Host simulation processes behind the standard route set."""
    try:
        config = ServerConfig.from_file(config_path)
    except (ValueError, TypeError, KeyError) as exc:
        raise click.UsageError(f"config {config_path}: {exc}") from exc
    config.bindAddress = _override_port(config.bindAddress, port)
    server = ModelServer(config)
    try:
        _register_configured_processes(server, config.processes)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    try:
        server.start()
    except OSError as exc:
        raise LocalFault(f"cannot bind {config.bindAddress}: {exc}") from exc
    _run_until_signal(server.stop, server.url, as_json)


@serve.command("platform")
@click.option("--config", "config_path", envvar="UMP_CONFIG", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--port", envvar="UMP_PORT", type=int, default=None)
@click.option("--json", "as_json", is_flag=True, help="machine-readable readiness line")
def serve_platform(config_path, port, as_json):
    """Federate configured model servers under one access point."""
    try:
        config = PlatformConfig.from_file(config_path)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    if port is not None:
        config = PlatformConfig(**{**config.__dict__, "bindAddress": _override_port(config.bindAddress, port)})
    platform = Platform(config)

    def reload_handler(_signum, _frame):
        try:
            platform.apply_config(PlatformConfig.from_file(config_path))
        except ConfigError as exc:
            click.echo(f"reload rejected, keeping previous configuration: {exc}", err=True)

    signal.signal(signal.SIGHUP, reload_handler)
    try:
        platform.start()
    except OSError as exc:
        raise LocalFault(f"cannot bind {config.bindAddress}: {exc}") from exc
    _run_until_signal(platform.stop, platform.url, as_json)


# ---------------------------------------------------------------------------
# client


@cli.group()
def client():
    """Talk to a server or platform over HTTP."""


_base_url = click.option("--base-url", required=True, help="server or platform base URL")
_token = click.option("--token", envvar="UMP_TOKEN", default=None, help="bearer token")
_as_json = click.option("--json", "as_json", is_flag=True, help="machine-readable output")
_timeout = click.option("--timeout", type=float, default=30.0, help="HTTP timeout in seconds")


@client.command("processes")
@_base_url
@_token
@_as_json
@_timeout
def client_processes(base_url, token, as_json, timeout):
    page = _client(base_url, token, timeout).processes(limit=1000)
    lines = [f"{p['id']}\t{p.get('version', '')}\t{p.get('title', '')}" for p in page["processes"]]
    _emit(page, as_json, "\n".join(lines) if lines else "(no processes)")


@client.command("describe")
@click.argument("process_id")
@_base_url
@_token
@_as_json
@_timeout
def client_describe(process_id, base_url, token, as_json, timeout):
    doc = _client(base_url, token, timeout).describe(process_id)
    _emit(doc, as_json)


@client.command("execute")
@click.argument("process_id")
@_base_url
@_token
@_as_json
@click.option("--inputs", "inputs_path", default="-", help="JSON inputs file, - for stdin")
@click.option("--async", "asynchronous", is_flag=True, help="queue the execution")
@click.option("--wait", is_flag=True, help="poll an async job until it finishes")
@_timeout
def client_execute(process_id, base_url, token, as_json, inputs_path, asynchronous, wait, timeout):
    raw = sys.stdin.read() if inputs_path == "-" else open(inputs_path).read()
    try:
        inputs = json.loads(raw) if raw.strip() else {}
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"inputs are not valid JSON: {exc}") from exc
    api = _client(base_url, token, timeout)
    result = api.execute(process_id, inputs, prefer_async=asynchronous or wait)
    if not (asynchronous or wait):
        _emit(result, as_json)
        return
    if wait:
        job = api.wait_for_job(result["jobId"])
        if job["state"] != "successful":
            raise RemoteError(None, None, f"job {job['jobId']} ended {job['state']}: {job.get('message', '')}")
        outputs = api.results(job["jobId"])
        _emit(outputs, as_json)
    else:
        _emit(result, as_json, f"job {result['jobId']} {result['state']}")


@client.command("status")
@click.argument("job_id")
@_base_url
@_token
@_as_json
@_timeout
def client_status(job_id, base_url, token, as_json, timeout):
    job = _client(base_url, token, timeout).job(job_id)
    _emit(job, as_json, f"{job['jobId']} {job['state']} progress={job['progress']} {job.get('message', '')}")


@client.command("results")
@click.argument("job_id")
@_base_url
@_token
@_as_json
@_timeout
def client_results(job_id, base_url, token, as_json, timeout):
    _emit(_client(base_url, token, timeout).results(job_id), as_json)


@client.command("dismiss")
@click.argument("job_id")
@_base_url
@_token
@_as_json
@_timeout
def client_dismiss(job_id, base_url, token, as_json, timeout):
    job = _client(base_url, token, timeout).dismiss(job_id)
    _emit(job, as_json, f"{job['jobId']} {job['state']}")


# ---------------------------------------------------------------------------
# admin


@cli.group()
def admin():
    """Operator commands (admin token required)."""


@admin.command("sweep")
@_base_url
@_token
@_as_json
@click.option("--now", "now_ts", default=None, help="sweep as of this UTC timestamp")
@_timeout
def admin_sweep(base_url, token, as_json, now_ts, timeout):
    doc = _client(base_url, token, timeout).sweep(now_ts)
    _emit(doc, as_json, f"purged {doc['purged']} expired results")


@admin.command("usage")
@_base_url
@_token
@_as_json
@click.option("--subject", default=None)
@_timeout
def admin_usage(base_url, token, as_json, subject, timeout):
    doc = _client(base_url, token, timeout).usage(subject)
    if subject:
        human = f"{doc['subject']}: {doc['totalComputeSeconds']:.6f} compute seconds over {len(doc['records'])} records"
    else:
        human = "\n".join(
            f"{s['subject']}\t{s['totalComputeSeconds']:.6f}s\t{s['records']} records"
            for s in doc.get("subjects", [])
        ) or "(no usage recorded)"
    _emit(doc, as_json, human)


# ---------------------------------------------------------------------------
# demo


@cli.command("demo")
@click.argument("action", type=click.Choice(["up"]))
@click.option("--platform-port", type=int, default=8080)
@click.option("--alpha-port", type=int, default=8081)
@click.option("--beta-port", type=int, default=8082)
@click.option("--duration", type=float, default=None, help="stop automatically after N seconds")
@click.option("--json", "as_json", is_flag=True, help="machine-readable endpoint table")
def demo(action, platform_port, alpha_port, beta_port, duration, as_json):
    """Launch the two-server, one-platform demo topology."""
    try:
        topo = build_demo(platform_port=platform_port, alpha_port=alpha_port, beta_port=beta_port)
    except OSError as exc:
        raise LocalFault(f"cannot bind demo ports: {exc}") from exc
    if as_json:
        click.echo(json.dumps(topo.endpoints(), sort_keys=True))
    else:
        for name, url in topo.endpoints().items():
            click.echo(f"{name}: {url}")
    if duration is not None:
        click.echo(f"READY {topo.platform_url}")
        sys.stdout.flush()
        threading.Event().wait(duration)
        topo.stop()
        return
    _run_until_signal(topo.stop, topo.platform_url, as_json=False)


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    try:
        cli(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except RemoteError as exc:
        problem = exc.problem_text() if exc.problem else str(exc)
        click.echo(f"remote error: {problem}", err=True)
        return EXIT_REMOTE
    except LocalFault as exc:
        click.echo(f"local fault: {exc}", err=True)
        return EXIT_LOCAL
    except OSError as exc:
        click.echo(f"local fault: {exc}", err=True)
        return EXIT_LOCAL


if __name__ == "__main__":
    sys.exit(main())
