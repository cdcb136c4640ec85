"""SCP-style tool protocol: client, deterministic mock server, access control."""

from gatewright.toollink.access import AccessState, Admission, admit_request
from gatewright.toollink.client import (
    InProcessTransport,
    PolicyDecision,
    TcpTransport,
    ToolClient,
    enforce_download_policy,
)
from gatewright.toollink.errors import (
    AuthRejected,
    DecodeError,
    EmptyFile,
    NamingViolation,
    RemoteMissing,
    SchemaViolation,
    Throttled,
    ToolLinkError,
    TransportError,
    UnknownTool,
)
from gatewright.toollink.protocol import (
    ArgSpec,
    FileArtifact,
    ToolDescriptor,
    ToolResponse,
    args_digest,
    canonical_args,
)
from gatewright.toollink.server import (
    FailurePlan,
    MockToolServer,
    Session,
    load_failure_plan_csv,
    load_fixtures_csv,
    load_registry_toml,
    mock_execute,
)

__all__ = [
    "AccessState", "Admission", "admit_request",
    "InProcessTransport", "PolicyDecision", "TcpTransport", "ToolClient",
    "enforce_download_policy",
    "AuthRejected", "DecodeError", "EmptyFile", "NamingViolation",
    "RemoteMissing", "SchemaViolation", "Throttled", "ToolLinkError",
    "TransportError", "UnknownTool",
    "ArgSpec", "FileArtifact", "ToolDescriptor", "ToolResponse",
    "args_digest", "canonical_args",
    "FailurePlan", "MockToolServer", "Session",
    "load_failure_plan_csv", "load_fixtures_csv", "load_registry_toml",
    "mock_execute",
]
