"""Shared exception base for the gatewright package."""


class GatewrightError(Exception):
    """Base class for all domain errors raised by this package."""
