"""Out-of-process executor adapter.

A processing microservice can run as a subprocess speaking length-prefixed
JSON frames over stdio: the parent sends one `{"inputs": ...}` frame, the
child replies with any number of `{"progress": n}` frames followed by a
final `{"outputs": ...}` or `{"error": ...}` frame. Frames are a 4-byte
big-endian length followed by UTF-8 JSON.
"""

from __future__ import annotations

import json
import os
import select
import struct
import subprocess
import sys

from .jobs import ExecutionCancelled

_HEADER = struct.Struct(">I")
_MAX_FRAME = 64 * 1024 * 1024


def write_frame(stream, doc: dict):
    data = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    stream.write(_HEADER.pack(len(data)) + data)
    stream.flush()


def read_frame(stream) -> dict | None:
    header = stream.read(_HEADER.size)
    if not header or len(header) < _HEADER.size:
        return None
    (length,) = _HEADER.unpack(header)
    if length > _MAX_FRAME:
        raise ValueError(f"frame of {length} bytes exceeds the limit")
    data = stream.read(length)
    if len(data) < length:
        return None
    return json.loads(data.decode("utf-8"))


class SubprocessExecutor:
    """Executor that delegates one execution to a fresh subprocess."""

    def __init__(self, argv: list[str], cancel_poll_seconds: float = 0.1):
        self.argv = list(argv)
        self.cancel_poll_seconds = cancel_poll_seconds

    def __call__(self, inputs: dict, ctx=None) -> dict:
        proc = subprocess.Popen(
            self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
        )
        try:
            write_frame(proc.stdin, {"inputs": inputs})
            proc.stdin.close()
            fd = proc.stdout.fileno()
            buffered = b""
            while True:
                if ctx is not None and ctx.cancelled:
                    proc.terminate()
                    raise ExecutionCancelled()
                ready, _, _ = select.select([fd], [], [], self.cancel_poll_seconds)
                if not ready:
                    continue
                chunk = os.read(fd, 65536)
                if not chunk:
                    raise RuntimeError(f"microservice {self.argv[0]!r} exited without a result frame")
                buffered += chunk
                frame, buffered = _take_frame(buffered)
                while frame is not None:
                    if "error" in frame:
                        raise RuntimeError(str(frame["error"]))
                    if "outputs" in frame:
                        return frame["outputs"]
                    if "progress" in frame and ctx is not None:
                        ctx.report_progress(int(frame["progress"]))
                    frame, buffered = _take_frame(buffered)
        finally:
            if proc.poll() is None:
                proc.terminate()
                try:
                    proc.wait(timeout=2.0)
                except subprocess.TimeoutExpired:
                    proc.kill()


def _take_frame(buffered: bytes):
    if len(buffered) < _HEADER.size:
        return None, buffered
    (length,) = _HEADER.unpack(buffered[:_HEADER.size])
    end = _HEADER.size + length
    if len(buffered) < end:
        return None, buffered
    return json.loads(buffered[_HEADER.size:end].decode("utf-8")), buffered[end:]


def stdio_worker_main(fn):
    """Entry point for a microservice script: reads the inputs frame from
    stdin, runs `fn(inputs, report_progress)`, writes the result frame."""
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    frame = read_frame(stdin)
    if frame is None:
        write_frame(stdout, {"error": "no input frame"})
        return 1
    try:
        outputs = fn(frame.get("inputs", {}),
                     lambda pct: write_frame(stdout, {"progress": pct}))
        write_frame(stdout, {"outputs": outputs})
        return 0
    except Exception as exc:  # noqa: BLE001 - reported to the parent
        write_frame(stdout, {"error": str(exc)})
        return 1
