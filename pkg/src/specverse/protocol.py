"""Wire protocol v1: line-delimited strict JSON over stdin/stdout.

One request line in, exactly one response line out. The full schema, the
well-known diagnostic keys, and the conformance rules for external runners
live in PROTOCOL.md; the golden fixtures under protocol_fixtures/ are shared
with external runner test suites. Unknown response fields are ignored for
forward compatibility; missing required fields and version mismatches are
protocol errors, never silent parses.
"""

from __future__ import annotations

import json
import logging
import os
import selectors
import subprocess
import sys
import time
from dataclasses import dataclass, field

from .errors import SpecverseError
from .version import PROTOCOL_VERSION

log = logging.getLogger(__name__)

READ_CHUNK = 65536


class ProtocolError(SpecverseError):
    """Malformed, truncated, incomplete, or version-mismatched message."""


class DispatchTimeout(SpecverseError):
    """Runner did not answer within the per-trial timeout; it was killed."""


class RunnerCrashed(SpecverseError):
    """Runner process ended (or its pipe broke) before answering."""


@dataclass(frozen=True)
class AnalysisRequest:
    universe_id: int
    trial_index: int
    seed: int
    assignment: dict[str, str]
    payloads: dict[str, dict]
    timeout_hint: float
    protocol_version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class AnalysisResponse:
    universe_id: int
    trial_index: int
    status: str  # "ok" | "error"
    estimate: float | None = None
    interval: tuple[float, float, float] | None = None  # (lower, upper, level)
    samples: list[float] | None = None
    loglik: float | None = None
    n_params: int | None = None
    n_obs: int | None = None
    diagnostics: dict[str, float] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()
    error_message: str | None = None
    protocol_version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class RunnerSpec:
    """Either a named builtin analysis or an external command line."""

    kind: str  # "builtin" | "external"
    builtin_name: str | None = None
    command: tuple[str, ...] | None = None
    env: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("builtin", "external"):
            raise ValueError(f"unknown runner kind {self.kind!r}")
        if (self.builtin_name is None) == (self.command is None):
            raise ValueError("exactly one of builtin_name/command must be set")

    def argv(self) -> list[str]:
        if self.kind == "builtin":
            return [sys.executable, "-m", "specverse.builtin_runner", self.builtin_name]
        return list(self.command)

    def describe(self) -> dict:
        if self.kind == "builtin":
            return {"kind": "builtin", "name": self.builtin_name}
        return {"kind": "external", "command": list(self.command), "env": dict(self.env)}


def encode_request(req: AnalysisRequest) -> bytes:
    """One UTF-8 JSON line, newline-terminated, fixed field names."""
    doc = {
        "protocol_version": req.protocol_version,
        "universe_id": req.universe_id,
        "trial_index": req.trial_index,
        "seed": req.seed,
        "assignment": req.assignment,
        "payloads": req.payloads,
        "timeout_hint": req.timeout_hint,
    }
    return (json.dumps(doc, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def _reject_constant(name):
    raise ValueError(f"non-finite number {name!r} is not valid strict JSON")


def _parse_line(line: bytes) -> dict:
    try:
        doc = json.loads(line.decode("utf-8"), parse_constant=_reject_constant)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"malformed message: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProtocolError(f"message is not a JSON object: {type(doc).__name__}")
    return doc


def _require(doc: dict, name: str, kinds, where: str):
    if name not in doc:
        raise ProtocolError(f"{where} is missing required field {name!r}")
    value = doc[name]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise ProtocolError(f"{where} field {name!r} has invalid type {type(value).__name__}")
    return value


def _check_version(doc: dict, where: str) -> int:
    version = _require(doc, "protocol_version", int, where)
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"{where} protocol_version {version} != {PROTOCOL_VERSION}")
    return version


def decode_request(line: bytes) -> AnalysisRequest:
    doc = _parse_line(line)
    _check_version(doc, "request")
    assignment = _require(doc, "assignment", dict, "request")
    payloads = _require(doc, "payloads", dict, "request")
    if set(assignment) != set(payloads):
        raise ProtocolError("request assignment and payloads have different key sets")
    return AnalysisRequest(
        universe_id=_require(doc, "universe_id", int, "request"),
        trial_index=_require(doc, "trial_index", int, "request"),
        seed=_require(doc, "seed", int, "request"),
        assignment=dict(assignment),
        payloads=dict(payloads),
        timeout_hint=float(_require(doc, "timeout_hint", (int, float), "request")),
    )


def encode_response(resp: AnalysisResponse) -> bytes:
    doc = {
        "protocol_version": resp.protocol_version,
        "universe_id": resp.universe_id,
        "trial_index": resp.trial_index,
        "status": resp.status,
    }
    if resp.estimate is not None:
        doc["estimate"] = resp.estimate
    if resp.interval is not None:
        lower, upper, level = resp.interval
        doc["interval"] = {"lower": lower, "upper": upper, "level": level}
    if resp.samples is not None:
        doc["samples"] = list(resp.samples)
    if resp.loglik is not None:
        doc["loglik"] = resp.loglik
    if resp.n_params is not None:
        doc["n_params"] = resp.n_params
    if resp.n_obs is not None:
        doc["n_obs"] = resp.n_obs
    if resp.diagnostics:
        doc["diagnostics"] = resp.diagnostics
    if resp.warnings:
        doc["warnings"] = list(resp.warnings)
    if resp.error_message is not None:
        doc["error_message"] = resp.error_message
    return (json.dumps(doc, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def decode_response(line: bytes) -> AnalysisResponse:
    """Parse one response line; raises ProtocolError on any defect."""
    doc = _parse_line(line)
    _check_version(doc, "response")
    status = _require(doc, "status", str, "response")
    if status not in ("ok", "error"):
        raise ProtocolError(f"response status {status!r} is not ok/error")

    estimate = doc.get("estimate")
    if estimate is not None and (isinstance(estimate, bool) or not isinstance(estimate, (int, float))):
        raise ProtocolError("response estimate must be a number")
    interval = None
    if doc.get("interval") is not None:
        raw = doc["interval"]
        if not isinstance(raw, dict):
            raise ProtocolError("response interval must be an object")
        try:
            interval = (float(raw["lower"]), float(raw["upper"]), float(raw["level"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"response interval is malformed: {exc}") from exc

    if status == "ok":
        if estimate is None:
            raise ProtocolError("ok response is missing the estimate")
        if interval is not None and not (interval[0] <= estimate <= interval[1]):
            raise ProtocolError(
                f"ok response interval [{interval[0]}, {interval[1]}] "
                f"does not bracket estimate {estimate}"
            )
    if status == "error" and not doc.get("error_message"):
        raise ProtocolError("error response is missing error_message")

    samples = doc.get("samples")
    if samples is not None:
        if not isinstance(samples, list) or any(
            isinstance(s, bool) or not isinstance(s, (int, float)) for s in samples
        ):
            raise ProtocolError("response samples must be a list of numbers")
        samples = [float(s) for s in samples]

    diagnostics = doc.get("diagnostics") or {}
    if not isinstance(diagnostics, dict):
        raise ProtocolError("response diagnostics must be an object")
    warnings = doc.get("warnings") or []
    if not isinstance(warnings, list):
        raise ProtocolError("response warnings must be a list")

    for count_field in ("n_params", "n_obs"):
        value = doc.get(count_field)
        if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
            raise ProtocolError(f"response {count_field} must be an integer")

    return AnalysisResponse(
        universe_id=_require(doc, "universe_id", int, "response"),
        trial_index=_require(doc, "trial_index", int, "response"),
        status=status,
        estimate=None if estimate is None else float(estimate),
        interval=interval,
        samples=samples,
        loglik=None if doc.get("loglik") is None else float(doc["loglik"]),
        n_params=doc.get("n_params"),
        n_obs=doc.get("n_obs"),
        diagnostics={str(k): float(v) for k, v in diagnostics.items()},
        warnings=tuple(str(w) for w in warnings),
        error_message=doc.get("error_message"),
    )


class RunnerHandle:
    """One runner subprocess owned by exactly one worker at a time."""

    def __init__(self, spec: RunnerSpec):
        self.spec = spec
        self.proc = subprocess.Popen(
            spec.argv(),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            env={**os.environ, **spec.env},
        )
        os.set_blocking(self.proc.stdout.fileno(), False)
        self._buffer = bytearray()

    def alive(self) -> bool:
        return self.proc.poll() is None

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
        self.proc.wait()
        for stream in (self.proc.stdin, self.proc.stdout):
            if stream is not None:
                stream.close()

    def _take_line(self) -> bytes | None:
        idx = self._buffer.find(b"\n")
        if idx < 0:
            return None
        line = bytes(self._buffer[: idx + 1])
        del self._buffer[: idx + 1]
        return line

    def _discard_stale(self) -> None:
        dropped = 0
        while self._take_line() is not None:
            dropped += 1
        if self._buffer:
            dropped += 1
            self._buffer.clear()
        if dropped:
            log.warning("discarded %d stale line(s) from runner before new request", dropped)

    def read_line(self, deadline: float) -> bytes | None:
        """Next newline-terminated line, or None once the deadline passes."""
        sel = selectors.DefaultSelector()
        sel.register(self.proc.stdout, selectors.EVENT_READ)
        try:
            while True:
                line = self._take_line()
                if line is not None:
                    return line
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                if not sel.select(timeout=remaining):
                    continue  # deadline re-checked above
                try:
                    chunk = os.read(self.proc.stdout.fileno(), READ_CHUNK)
                except BlockingIOError:
                    continue
                if chunk == b"":
                    raise RunnerCrashed(
                        f"runner exited (code {self.proc.poll()}) before responding"
                    )
                self._buffer.extend(chunk)
        finally:
            sel.close()


def dispatch(handle: RunnerHandle, req: AnalysisRequest, timeout: float) -> AnalysisResponse:
    """Send one request, read exactly one response line within the timeout.

    On timeout the runner process is killed and DispatchTimeout raised; the
    handle must be respawned by the caller. Extra response lines are discarded
    with a logged warning.
    """
    if not handle.alive():
        raise RunnerCrashed("runner process is not alive")
    handle._discard_stale()
    try:
        handle.proc.stdin.write(encode_request(req))
        handle.proc.stdin.flush()
    except (BrokenPipeError, OSError) as exc:
        raise RunnerCrashed(f"could not write request: {exc}") from exc

    deadline = time.monotonic() + timeout
    line = handle.read_line(deadline)
    if line is None:
        handle.close()
        raise DispatchTimeout(f"no response within {timeout} s")
    remainder = handle._buffer.count(b"\n")
    if remainder:
        log.warning(
            "runner emitted %d extra line(s) after its response; discarding", remainder
        )
        handle._buffer.clear()
    return decode_response(line)
