"""Errors raised across the tool-invocation protocol."""

from __future__ import annotations

from gatewright.errors import GatewrightError


class ToolLinkError(GatewrightError):
    """Base for protocol, transport, and invocation failures."""


class UnknownTool(ToolLinkError):
    """Tool name not registered; carries the nearest registered name."""

    def __init__(self, name: str, nearest: str | None = None):
        self.name = name
        self.nearest = nearest
        hint = f", nearest registered name is {nearest!r}" if nearest else ""
        super().__init__(f"unknown tool {name!r}{hint}")


class NamingViolation(ToolLinkError):
    """A skill name (or other non-tool token) used where a tool name belongs."""


class SchemaViolation(ToolLinkError):
    """Arguments do not satisfy the tool's declared schema."""


class TransportError(ToolLinkError):
    """The wire carried something unusable."""


class AuthRejected(ToolLinkError):
    """License unknown or session not authenticated."""


class Throttled(ToolLinkError):
    """Per-client request budget for the current window is spent."""


class RemoteMissing(ToolLinkError):
    """Requested remote path does not exist on the server."""


class EmptyFile(ToolLinkError):
    """Decoded transfer was zero bytes; the artifact stays unfetched."""


class DecodeError(ToolLinkError):
    """Transfer payload was not valid printable encoding."""
