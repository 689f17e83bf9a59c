"""Client for selection scripts served by an external host process.

The host speaks line-delimited JSON over stdio: one request line, one
response line, strictly alternating.  A request carries the population
phenotypes (case_values, predicted_values, y, nodes, height), k, status and
a seed; the response is either {"selected_indices": [...]} or an error
object.  The client owns the subprocess and enforces a per-request
deadline, killing the host when it is exceeded.
"""

from __future__ import annotations

import importlib.util
import json
import os
import select
import subprocess
import sys

DEFAULT_REQUEST_TIMEOUT = 300.0
HOST_MODULE = "operator_host"


class HostError(RuntimeError):
    reason = "runtime_error"


class HostStartupError(HostError):
    """The host process could not load the script (or start at all)."""

    reason = "syntax"


class HostTimeoutError(HostError):
    reason = "timeout"


class HostBadOutputError(HostError):
    reason = "bad_output"


class HostScriptError(HostError):
    """The hosted script raised while handling one request."""

    reason = "runtime_error"


def default_host_command() -> list | None:
    """Run the host module with the current interpreter when installed."""
    if importlib.util.find_spec(HOST_MODULE) is not None:
        return [sys.executable, "-m", HOST_MODULE]
    return None


def host_available() -> bool:
    return default_host_command() is not None


class HostedOperator:
    """Callable selection operator backed by a script in a host subprocess."""

    def __init__(self, script_path: str, command: list | None = None,
                 timeout: float = DEFAULT_REQUEST_TIMEOUT):
        self.script_path = script_path
        self.timeout = timeout
        self._command = command if command is not None else default_host_command()
        if self._command is None:
            raise HostStartupError(
                f"no script host available to run {script_path!r}; "
                f"install the {HOST_MODULE} package or pass an explicit command"
            )
        self._proc: subprocess.Popen | None = None
        self._buffer = b""

    # -- process management -------------------------------------------------

    def _ensure_started(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        stderr = None if os.environ.get("EVOSR_HOST_STDERR") == "inherit" else subprocess.DEVNULL
        self._buffer = b""
        self._proc = subprocess.Popen(
            [*self._command, self.script_path],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=stderr,
            bufsize=0,
        )

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
            if proc.poll() is None:
                proc.wait(timeout=2)
        except Exception:
            proc.kill()
            proc.wait()
        finally:
            if proc.stdout:
                proc.stdout.close()

    def _kill(self) -> None:
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    # -- wire protocol -------------------------------------------------------

    def _read_line(self, deadline: float) -> bytes:
        import time

        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self._kill()
                raise HostTimeoutError(
                    f"script {self.script_path!r} exceeded {self.timeout}s"
                )
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                self._raise_startup_failure()
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def _raise_startup_failure(self) -> None:
        # EOF on stdout: the host died.  Whatever is buffered may be its
        # load-error line; surface it.
        proc, self._proc = self._proc, None
        detail = self._buffer.decode(errors="replace").strip()
        self._buffer = b""
        proc.wait()
        message = f"host for {self.script_path!r} exited with code {proc.returncode}"
        if detail:
            try:
                err = json.loads(detail.splitlines()[0]).get("error", {})
                message += f": {err.get('message', detail)}"
            except (ValueError, AttributeError):
                message += f": {detail}"
        raise HostStartupError(message)

    def __call__(self, request) -> list:
        import time

        self._ensure_started()
        population = request.population
        payload = {
            "population": [
                {
                    "case_values": _as_list(ind.case_values),
                    "predicted_values": _as_list(ind.predicted_values),
                    "y": _as_list(ind.y),
                    "nodes": len(ind),
                    "height": int(ind.height),
                }
                for ind in population
            ],
            "k": request.k,
            "status": {"evolutionary_stage": request.status.stage},
            "seed": request.seed,
        }
        line = (json.dumps(payload) + "\n").encode()
        try:
            self._proc.stdin.write(line)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._drain_and_raise_startup()
        deadline = time.monotonic() + self.timeout
        raw = self._read_line(deadline)
        try:
            response = json.loads(raw)
        except ValueError:
            self._kill()
            raise HostBadOutputError(f"unparseable response line: {raw[:200]!r}") from None
        if "error" in response:
            err = response["error"]
            raise _error_class(err.get("type", ""))(
                f"{err.get('type', 'error')}: {err.get('message', '')}"
            )
        indices = response.get("selected_indices")
        if (
            not isinstance(indices, list)
            or len(indices) != request.k
            or any(not isinstance(i, int) or not 0 <= i < len(population) for i in indices)
        ):
            raise HostBadOutputError(f"invalid selected_indices for k={request.k}")
        return [population[i] for i in indices]

    def _drain_and_raise_startup(self) -> None:
        # The write failed because the host already exited; collect its
        # parting output for the error message.
        import time

        fd = self._proc.stdout.fileno()
        deadline = time.monotonic() + 2.0
        while time.monotonic() < deadline:
            ready, _, _ = select.select([fd], [], [], 0.1)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                break
            self._buffer += chunk
        self._raise_startup_failure()


def _as_list(values) -> list:
    return [float(v) for v in values]


def _error_class(error_type: str):
    if error_type == "load_error":
        return HostStartupError
    if error_type == "bad_output":
        return HostBadOutputError
    return HostScriptError
