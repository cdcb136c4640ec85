"""Wire records and deterministic canonicalization for the tool protocol.

Every message is one UTF-8 line holding a self-describing JSON record:
requests are {id, kind: call|list|fetch|auth, payload}, responses echo the
id with either {ok: true, payload} or {ok: false, error: {code, detail}}.
File content crosses the wire as strict base64.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
from dataclasses import dataclass, field

from gatewright.naming import NameKind, classify_name
from gatewright.toollink.errors import DecodeError, NamingViolation, TransportError

ARG_KINDS = ("text", "number", "path", "list")


@dataclass(frozen=True)
class ArgSpec:
    kind: str
    required: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ARG_KINDS:
            raise SchemaError(f"argument kind must be one of {ARG_KINDS}, got {self.kind!r}")


class SchemaError(TransportError):
    """A descriptor itself is malformed."""


@dataclass(frozen=True)
class ToolDescriptor:
    tool_name: str
    arg_schema: dict[str, ArgSpec] = field(default_factory=dict)
    returns_files: bool = False
    output_units: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if classify_name(self.tool_name) is not NameKind.TOOL_NAME:
            raise NamingViolation(
                f"descriptor name {self.tool_name!r} is not a snake_case tool name")

    def to_payload(self) -> dict:
        return {
            "tool_name": self.tool_name,
            "arg_schema": {name: {"kind": spec.kind, "required": spec.required}
                           for name, spec in self.arg_schema.items()},
            "returns_files": self.returns_files,
            "output_units": dict(self.output_units),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ToolDescriptor":
        return cls(
            tool_name=payload["tool_name"],
            arg_schema={name: ArgSpec(entry["kind"], entry["required"])
                        for name, entry in payload.get("arg_schema", {}).items()},
            returns_files=payload.get("returns_files", False),
            output_units=dict(payload.get("output_units", {})),
        )


@dataclass(frozen=True)
class ToolResponse:
    tool_name: str
    status: str  # "Ok" or "ToolError"
    values: dict = field(default_factory=dict)
    file_paths: tuple[str, ...] = ()
    error_detail: str | None = None

    def __post_init__(self) -> None:
        if self.status not in ("Ok", "ToolError"):
            raise TransportError(f"bad response status {self.status!r}")
        if self.status == "Ok" and self.error_detail is not None:
            raise TransportError("Ok responses carry no error detail")
        if any(not path for path in self.file_paths):
            raise TransportError("file paths must be non-empty text")

    @property
    def ok(self) -> bool:
        return self.status == "Ok"

    def to_payload(self) -> dict:
        return {
            "tool_name": self.tool_name,
            "status": self.status,
            "values": dict(self.values),
            "file_paths": list(self.file_paths),
            "error_detail": self.error_detail,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ToolResponse":
        return cls(
            tool_name=payload["tool_name"],
            status=payload["status"],
            values=dict(payload.get("values", {})),
            file_paths=tuple(payload.get("file_paths", ())),
            error_detail=payload.get("error_detail"),
        )


@dataclass
class FileArtifact:
    remote_path: str
    category: str = "A"
    fetched: bool = False
    local_size_bytes: int = 0
    local_path: str | None = None

    def __post_init__(self) -> None:
        if self.category not in ("A", "B", "C"):
            raise TransportError(f"category must be A/B/C, got {self.category!r}")
        if self.fetched and self.local_size_bytes <= 0:
            raise TransportError("fetched artifacts must have positive size")


# ---------------------------------------------------------------------------
# Record framing


def encode_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"


def decode_record(line: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TransportError(f"record is not valid JSON: {exc}") from exc
    if not isinstance(record, dict) or "id" not in record:
        raise TransportError("record must be a JSON object with an id")
    return record


def request_line(record_id: int, kind: str, payload: dict) -> str:
    return encode_record({"id": record_id, "kind": kind, "payload": payload})


def ok_line(record_id: int, payload) -> str:
    return encode_record({"id": record_id, "ok": True, "payload": payload})


def error_line(record_id: int, code: str, detail: str, **extra) -> str:
    error = {"code": code, "detail": detail}
    error.update(extra)
    return encode_record({"id": record_id, "ok": False, "error": error})


# ---------------------------------------------------------------------------
# Canonicalization and digests


def _canonical_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return f"{value:.9g}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_canonical_value(item) for item in value) + "]"
    if isinstance(value, dict):
        inner = ",".join(f"{key}={_canonical_value(value[key])}"
                         for key in sorted(value))
        return "{" + inner + "}"
    return str(value)


def canonical_args(args: dict) -> str:
    """Sorted-key rendering with numbers at 9 significant digits."""
    return "|".join(f"{key}={_canonical_value(args[key])}" for key in sorted(args))


def args_digest(tool_name: str, args: dict) -> str:
    """Seed-independent digest used to key fixture overrides."""
    material = f"{tool_name}|{canonical_args(args)}".encode("utf-8")
    return hashlib.sha256(material).hexdigest()


def seeded_digest(seed: int, *parts: str) -> bytes:
    material = "|".join([str(seed), *parts]).encode("utf-8")
    return hashlib.sha256(material).digest()


def digest_fraction(digest: bytes) -> float:
    """Map the first 8 digest bytes onto [0, 1)."""
    return int.from_bytes(digest[:8], "big") / 2 ** 64


# ---------------------------------------------------------------------------
# Transfer encoding


def encode_transfer(content: bytes) -> str:
    return base64.b64encode(content).decode("ascii")


def decode_transfer(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise DecodeError(f"transfer payload is not strict base64: {exc}") from exc
