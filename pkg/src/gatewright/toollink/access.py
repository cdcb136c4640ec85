"""License authentication and fixed-window rate limiting."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field


class Admission(enum.Enum):
    ADMITTED = "Admitted"
    AUTH_REJECTED = "AuthRejected"
    THROTTLED = "Throttled"


@dataclass
class AccessState:
    license_keys: set[str]
    window_seconds: float = 60.0
    max_requests_per_window: int = 100
    per_client_counters: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.window_seconds <= 0:
            raise ValueError("window_seconds must be positive")
        if self.max_requests_per_window < 1:
            raise ValueError("max_requests_per_window must be at least 1")


def admit_request(state: AccessState, client_id: str, license_key: str,
                  now: float) -> Admission:
    """Admit, reject, or throttle one request.

    Unknown licenses are rejected without touching the counters. Counting is
    per client over fixed windows: the window index is floor(now / width), so
    a rollover simply starts a fresh count.
    """
    if license_key not in state.license_keys:
        return Admission.AUTH_REJECTED
    window = math.floor(now / state.window_seconds)
    start, count = state.per_client_counters.get(client_id, (window, 0))
    if start != window:
        start, count = window, 0
    if count >= state.max_requests_per_window:
        state.per_client_counters[client_id] = (start, count)
        return Admission.THROTTLED
    state.per_client_counters[client_id] = (start, count + 1)
    return Admission.ADMITTED
