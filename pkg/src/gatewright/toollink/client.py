"""Client side of the tool protocol: validated calls, listing, and the
download-verify file transfer, plus the download policy over artifacts.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass
from pathlib import Path

from gatewright.naming import NameKind, classify_name, nearest_name
from gatewright.toollink.errors import (
    AuthRejected,
    EmptyFile,
    NamingViolation,
    RemoteMissing,
    SchemaViolation,
    Throttled,
    TransportError,
    UnknownTool,
)
from gatewright.toollink.protocol import (
    FileArtifact,
    ToolDescriptor,
    ToolResponse,
    decode_record,
    decode_transfer,
    request_line,
)
from gatewright.toollink.server import MockToolServer, Session

_KIND_CHECKS = {
    "text": lambda v: isinstance(v, str),
    "path": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "list": lambda v: isinstance(v, (list, tuple)),
}


class InProcessTransport:
    """Feeds lines straight into a server instance, one session per transport."""

    def __init__(self, server: MockToolServer):
        self._server = server
        self._session = Session()

    def request(self, line: str) -> str:
        return self._server.handle_line(line, self._session)

    def close(self) -> None:
        pass


class TcpTransport:
    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")

    def request(self, line: str) -> str:
        self._sock.sendall(line.encode("utf-8"))
        reply = self._reader.readline()
        if not reply:
            raise TransportError("connection closed mid-request")
        return reply

    def close(self) -> None:
        try:
            self._reader.close()
        finally:
            self._sock.close()


_ERROR_CLASSES = {
    "UnknownTool": UnknownTool,
    "AuthRejected": AuthRejected,
    "Throttled": Throttled,
    "RemoteMissing": RemoteMissing,
}


class ToolClient:
    """Blocking client; independent clients may run concurrently."""

    def __init__(self, transport, downloads_dir: str | Path | None = None):
        self._transport = transport
        self._next_id = 0
        self.downloads_dir = Path(downloads_dir) if downloads_dir else None

    def close(self) -> None:
        self._transport.close()

    # -- plumbing ------------------------------------------------------------

    def _roundtrip(self, kind: str, payload: dict) -> dict:
        self._next_id += 1
        reply = self._transport.request(request_line(self._next_id, kind, payload))
        record = decode_record(reply)
        if record.get("ok"):
            return record.get("payload")
        error = record.get("error") or {}
        code = error.get("code", "TransportError")
        detail = error.get("detail", "")
        if code == "UnknownTool":
            raise UnknownTool(payload.get("tool", ""), error.get("nearest"))
        raise _ERROR_CLASSES.get(code, TransportError)(detail)

    # -- operations ----------------------------------------------------------

    def authenticate(self, license_key: str, client_id: str) -> None:
        self._roundtrip("auth", {"license": license_key, "client_id": client_id})

    def call_tool(self, registry, name: str, args: dict) -> ToolResponse:
        """Validate the call against the registry, then forward it.

        The registry may be a list of descriptors or a name-keyed mapping.
        """
        kind = classify_name(name)
        if kind is not NameKind.TOOL_NAME:
            raise NamingViolation(
                f"{name!r} is not a snake_case tool name"
                + (" (skill names are documents, not calls)"
                   if kind is NameKind.SKILL_NAME else ""))
        descriptors = registry.values() if hasattr(registry, "values") else registry
        by_name = {d.tool_name: d for d in descriptors}
        descriptor = by_name.get(name)
        if descriptor is None:
            raise UnknownTool(name, nearest_name(name, list(by_name)))
        self._check_schema(descriptor, args)
        payload = self._roundtrip("call", {"tool": name, "args": args})
        return ToolResponse.from_payload(payload)

    @staticmethod
    def _check_schema(descriptor: ToolDescriptor, args: dict) -> None:
        for arg, spec in descriptor.arg_schema.items():
            if spec.required and arg not in args:
                raise SchemaViolation(
                    f"{descriptor.tool_name}: missing required argument {arg!r}")
        for arg, value in args.items():
            spec = descriptor.arg_schema.get(arg)
            if spec is None:
                raise SchemaViolation(
                    f"{descriptor.tool_name}: unexpected argument {arg!r}")
            if not _KIND_CHECKS[spec.kind](value):
                raise SchemaViolation(
                    f"{descriptor.tool_name}: argument {arg!r} must be of kind "
                    f"{spec.kind}, got {type(value).__name__}")

    def list_tools(self) -> list[ToolDescriptor]:
        payload = self._roundtrip("list", {})
        return [ToolDescriptor.from_payload(entry) for entry in payload]

    def fetch_file(self, remote_path: str, category: str = "A") -> FileArtifact:
        """Download-verify: decode, check size > 0, then write locally."""
        payload = self._roundtrip("fetch", {"path": remote_path})
        content = decode_transfer(payload["content_b64"])
        if len(content) == 0:
            raise EmptyFile(f"{remote_path} decoded to zero bytes")
        local_path = None
        if self.downloads_dir is not None:
            self.downloads_dir.mkdir(parents=True, exist_ok=True)
            local = self.downloads_dir / remote_path.strip("/").replace("/", "__")
            local.write_bytes(content)
            local_path = str(local)
        return FileArtifact(remote_path=remote_path, category=category,
                            fetched=True, local_size_bytes=len(content),
                            local_path=local_path)


@dataclass(frozen=True)
class PolicyDecision:
    proceed: bool
    blocked: tuple[str, ...] = ()


def enforce_download_policy(response: ToolResponse,
                            artifacts: list[FileArtifact]) -> PolicyDecision:
    """Block until every Category A or B path is fetched; C never blocks."""
    covered = {artifact.remote_path for artifact in artifacts}
    expected = set(response.file_paths)
    if covered != expected:
        raise ValueError(
            f"artifacts must cover exactly the response paths; "
            f"missing {sorted(expected - covered)}, extra {sorted(covered - expected)}")
    blocked = tuple(artifact.remote_path for artifact in artifacts
                    if artifact.category in ("A", "B") and not artifact.fetched)
    return PolicyDecision(proceed=not blocked, blocked=blocked)
