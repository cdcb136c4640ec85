"""Deterministic mock tool server.

Responses are a pure function of (tool name, canonicalized args, server
seed), optionally overridden by a fixture table and interrupted by a failure
plan that injects errors at specific call ordinals. The server speaks the
newline-delimited record protocol either in-process or over TCP.
"""

from __future__ import annotations

import csv
import socketserver
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from gatewright.naming import nearest_name
from gatewright.toollink.access import AccessState, Admission, admit_request
from gatewright.toollink.errors import TransportError, UnknownTool
from gatewright.toollink.protocol import (
    ArgSpec,
    ToolDescriptor,
    ToolResponse,
    args_digest,
    decode_record,
    digest_fraction,
    encode_transfer,
    error_line,
    ok_line,
    seeded_digest,
)

SYNTH_FILE_BYTES = 256


@dataclass(frozen=True)
class FailurePlan:
    """Maps (tool_name, call ordinal) to the error text to inject."""

    schedule: dict[tuple[str, int], str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for (tool, ordinal) in self.schedule:
            if ordinal < 1:
                raise ValueError(f"ordinals are 1-based, got {ordinal} for {tool}")

    def lookup(self, tool: str, ordinal: int) -> str | None:
        return self.schedule.get((tool, ordinal))


@dataclass
class Session:
    """Per-connection state: who authenticated, and with what license."""

    client_id: str | None = None
    license_key: str | None = None

    @property
    def authenticated(self) -> bool:
        return self.client_id is not None


class MockToolServer:
    def __init__(self, registry: list[ToolDescriptor], *, seed: int = 0,
                 fixtures: dict[tuple[str, str], dict] | None = None,
                 failure_plan: FailurePlan | None = None,
                 access: AccessState | None = None,
                 files: dict[str, bytes] | None = None,
                 clock=time.time):
        self._descriptors = {d.tool_name: d for d in registry}
        self.seed = seed
        self.fixtures = fixtures or {}
        self.failure_plan = failure_plan or FailurePlan()
        self.access = access or AccessState(license_keys={"open"},
                                            window_seconds=60.0,
                                            max_requests_per_window=10_000)
        self.files = dict(files or {})
        self.clock = clock
        self._ordinals: dict[str, int] = {}
        self._lock = threading.Lock()

    # -- registry ----------------------------------------------------------

    def register(self, descriptor: ToolDescriptor) -> None:
        with self._lock:
            self._descriptors[descriptor.tool_name] = descriptor

    def descriptors(self) -> list[ToolDescriptor]:
        with self._lock:
            return sorted(self._descriptors.values(), key=lambda d: d.tool_name)

    def descriptor(self, name: str) -> ToolDescriptor | None:
        with self._lock:
            return self._descriptors.get(name)

    # -- execution ---------------------------------------------------------

    def execute(self, name: str, args: dict,
                plan: FailurePlan | None = None) -> ToolResponse:
        """Run one deterministic mock call, honoring the failure plan."""
        plan = plan if plan is not None else self.failure_plan
        with self._lock:
            descriptor = self._descriptors.get(name)
            if descriptor is None:
                raise UnknownTool(name, nearest_name(name, list(self._descriptors)))
            ordinal = self._ordinals.get(name, 0) + 1
            self._ordinals[name] = ordinal

            injected = plan.lookup(name, ordinal)
            if injected is not None:
                return ToolResponse(tool_name=name, status="ToolError",
                                    error_detail=injected)

            digest_key = args_digest(name, args)
            value_digest = seeded_digest(self.seed, name, digest_key)
            values = {"value": digest_fraction(value_digest)}
            values.update(self.fixtures.get((name, digest_key), {}))

            file_paths: tuple[str, ...] = ()
            if descriptor.returns_files:
                remote = f"/remote/{name}/{digest_key[:12]}_0.dat"
                self.files.setdefault(remote, self._synthesize_content(name, digest_key))
                file_paths = (remote,)
            return ToolResponse(tool_name=name, status="Ok",
                                values=values, file_paths=file_paths)

    def _synthesize_content(self, name: str, digest_key: str) -> bytes:
        block = seeded_digest(self.seed, "file", name, digest_key)
        content = bytearray()
        while len(content) < SYNTH_FILE_BYTES:
            content.extend(block)
            block = seeded_digest(self.seed, "next", block.hex())
        return bytes(content[:SYNTH_FILE_BYTES])

    # -- protocol ----------------------------------------------------------

    def handle_line(self, line: str, session: Session) -> str:
        try:
            record = decode_record(line)
        except TransportError as exc:
            return error_line(-1, "TransportError", str(exc))
        record_id = record["id"]
        kind = record.get("kind")
        payload = record.get("payload") or {}

        if kind == "auth":
            return self._handle_auth(record_id, payload, session)
        if not session.authenticated:
            return error_line(record_id, "AuthRejected", "session not authenticated")
        admission = admit_request(self.access, session.client_id,
                                  session.license_key, self.clock())
        if admission is Admission.AUTH_REJECTED:
            return error_line(record_id, "AuthRejected", "license no longer valid")
        if admission is Admission.THROTTLED:
            return error_line(record_id, "Throttled",
                              "request budget for this window is spent")

        if kind == "list":
            return ok_line(record_id, [d.to_payload() for d in self.descriptors()])
        if kind == "call":
            return self._handle_call(record_id, payload)
        if kind == "fetch":
            return self._handle_fetch(record_id, payload)
        return error_line(record_id, "TransportError", f"unknown record kind {kind!r}")

    def _handle_auth(self, record_id: int, payload: dict, session: Session) -> str:
        license_key = payload.get("license", "")
        client_id = payload.get("client_id", "")
        if license_key not in self.access.license_keys:
            return error_line(record_id, "AuthRejected", "unknown license")
        session.client_id = client_id or "anonymous"
        session.license_key = license_key
        return ok_line(record_id, {"authenticated": True})

    def _handle_call(self, record_id: int, payload: dict) -> str:
        name = payload.get("tool", "")
        args = payload.get("args") or {}
        try:
            response = self.execute(name, args)
        except UnknownTool as exc:
            return error_line(record_id, "UnknownTool", str(exc),
                              nearest=exc.nearest)
        return ok_line(record_id, response.to_payload())

    def _handle_fetch(self, record_id: int, payload: dict) -> str:
        path = payload.get("path", "")
        with self._lock:
            content = self.files.get(path)
        if content is None:
            return error_line(record_id, "RemoteMissing", f"no remote file {path!r}")
        return ok_line(record_id, {"path": path,
                                   "content_b64": encode_transfer(content)})

    # -- TCP ---------------------------------------------------------------

    def serve_tcp(self, host: str = "127.0.0.1", port: int = 0):
        """Serve the line protocol over TCP; returns the bound server object."""
        mock = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                session = Session()
                for raw in self.rfile:
                    reply = mock.handle_line(raw.decode("utf-8"), session)
                    self.wfile.write(reply.encode("utf-8"))
                    self.wfile.flush()

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        return Server((host, port), Handler)


# ---------------------------------------------------------------------------
# File loaders for the CLI surface


def load_registry_toml(path: str | Path) -> list[ToolDescriptor]:
    """Registry file: repeated [[tool]] tables with args and unit tags."""
    with open(path, "rb") as handle:
        data = tomllib.load(handle)
    descriptors = []
    for entry in data.get("tool", []):
        schema = {arg: ArgSpec(kind=spec.get("kind", "text"),
                               required=spec.get("required", False))
                  for arg, spec in entry.get("args", {}).items()}
        descriptors.append(ToolDescriptor(
            tool_name=entry["name"],
            arg_schema=schema,
            returns_files=entry.get("returns_files", False),
            output_units=dict(entry.get("units", {})),
        ))
    return descriptors


def _parse_fixture_value(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def load_fixtures_csv(path: str | Path) -> dict[tuple[str, str], dict]:
    """Fixture table: tool_name,arg_digest,key,value rows override mock values."""
    fixtures: dict[tuple[str, str], dict] = {}
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        expected = ["tool_name", "arg_digest", "key", "value"]
        if reader.fieldnames != expected:
            raise TransportError(
                f"fixture CSV must have header {','.join(expected)}")
        for row in reader:
            key = (row["tool_name"], row["arg_digest"])
            fixtures.setdefault(key, {})[row["key"]] = _parse_fixture_value(row["value"])
    return fixtures


def load_failure_plan_csv(path: str | Path) -> FailurePlan:
    """Failure plan: tool_name,ordinal,error_text rows."""
    schedule: dict[tuple[str, int], str] = {}
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        expected = ["tool_name", "ordinal", "error_text"]
        if reader.fieldnames != expected:
            raise TransportError(
                f"failure CSV must have header {','.join(expected)}")
        for row in reader:
            schedule[(row["tool_name"], int(row["ordinal"]))] = row["error_text"]
    return FailurePlan(schedule)


def mock_execute(server: MockToolServer, name: str, args: dict,
                 plan: FailurePlan | None = None) -> ToolResponse:
    """Direct server-side execution (no wire, no auth)."""
    return server.execute(name, args, plan)
