import json
import random

import pytest

from ump.protocol import (
    InputDescription,
    OutputDescription,
    ProcessDescription,
    ProcessSummary,
)
from ump.web import Request


def make_description(process_id="demo", inputs=None, outputs=None) -> ProcessDescription:
    return ProcessDescription(
        summary=ProcessSummary(id=process_id, title=process_id),
        inputs=inputs or {},
        outputs=outputs or {"answer": OutputDescription(title="answer", dataKind="number")},
    )


def constant_executor(value=42):
    def run(inputs, ctx=None):
        return {"answer": value}

    return run


def echo_executor(inputs, ctx=None):
    return {"answer": inputs.get("x", 0)}


def failing_executor(inputs, ctx=None):
    return {"answer": 1 / 0}


def number_input(lo=None, hi=None, default=None, required=True):
    return InputDescription(
        title="n",
        dataKind="number",
        minOccurs=1 if required else 0,
        bounds=(lo, hi) if lo is not None else None,
        defaultValue=default,
        has_default=default is not None,
    )


def call(app, method, path, body=None, headers=None, query=None):
    """Dispatch a request straight into an App, skipping sockets."""
    raw = b""
    if body is not None:
        raw = body if isinstance(body, bytes) else json.dumps(body).encode()
    request = Request(
        method=method,
        path=path,
        query=query or {},
        headers={k.lower(): v for k, v in (headers or {}).items()},
        body=raw,
    )
    return app.dispatch(request)


def body_json(response):
    return json.loads(response.body.decode("utf-8"))


@pytest.fixture
def rng():
    return random.Random(20260808)


# ---------------------------------------------------------------------------
# acceptance summary


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for outcome, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in report.nodeid:
                name = report.nodeid.split("::")[-1]
                lines.append((name, label))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, label in sorted(lines):
            terminalreporter.write_line(f"ACCEPTANCE {label}: {name}")
