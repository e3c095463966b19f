import sys
import textwrap
import threading
import time

import pytest

from ump.jobs import ExecutionCancelled, ExecutionContext
from ump.microservice import SubprocessExecutor
from ump.protocol import InputDescription
from ump.server import ModelServer, ProcessRegistration
from ump.client import ApiClient

from conftest import make_description


@pytest.fixture
def doubler_script(tmp_path):
    script = tmp_path / "doubler.py"
    script.write_text(textwrap.dedent("""
        import sys
        from ump.microservice import stdio_worker_main

        def run(inputs, report_progress):
            report_progress(50)
            return {"answer": inputs.get("x", 0) * 2}

        sys.exit(stdio_worker_main(run))
    """))
    return script


def test_subprocess_executor_round_trip(doubler_script):
    executor = SubprocessExecutor([sys.executable, str(doubler_script)])
    outputs = executor({"x": 21}, ExecutionContext())
    assert outputs == {"answer": 42}


def test_subprocess_error_frame_raises(tmp_path):
    script = tmp_path / "broken.py"
    script.write_text(textwrap.dedent("""
        import sys
        from ump.microservice import stdio_worker_main
        sys.exit(stdio_worker_main(lambda inputs, progress: 1 / 0))
    """))
    executor = SubprocessExecutor([sys.executable, str(script)])
    with pytest.raises(RuntimeError, match="division"):
        executor({}, ExecutionContext())


def test_subprocess_cancellation_terminates_child(tmp_path):
    script = tmp_path / "sleeper.py"
    script.write_text(textwrap.dedent("""
        import sys, time
        from ump.microservice import stdio_worker_main

        def run(inputs, report_progress):
            time.sleep(60)
            return {}

        sys.exit(stdio_worker_main(run))
    """))
    executor = SubprocessExecutor([sys.executable, str(script)], cancel_poll_seconds=0.05)
    ctx = ExecutionContext()
    timer = threading.Timer(0.3, ctx.cancel)
    timer.start()
    started = time.monotonic()
    with pytest.raises(ExecutionCancelled):
        executor({}, ctx)
    assert time.monotonic() - started < 10
    timer.cancel()


def test_registered_as_server_process(doubler_script):
    server = ModelServer()
    description = make_description(
        "doubler", inputs={"x": InputDescription(title="x", dataKind="integer")})
    server.register_process(ProcessRegistration(description, SubprocessExecutor(
        [sys.executable, str(doubler_script)])))
    server.start()
    try:
        api = ApiClient(server.url)
        assert api.execute("doubler", {"x": 8}) == {"answer": 16}
        job = api.execute("doubler", {"x": 5}, prefer_async=True)
        final = api.wait_for_job(job["jobId"], timeout=20)
        assert final["state"] == "successful"
        assert api.results(job["jobId"]) == {"answer": 10}
    finally:
        server.stop()
