"""Drug-likeness aggregation: weighted geometric mean over eight component
desirabilities, and the ceiling that a locked component imposes on the score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from gatewright.errors import GatewrightError


class NonpositiveComponent(GatewrightError):
    """A component desirability must be strictly positive."""


class UnknownLabel(GatewrightError):
    """A component label is not part of the weight set."""


LABELS = ("MW", "ALOGP", "HBA", "HBD", "PSA", "ROTB", "AROM", "ALERTS")

DEFAULT_WEIGHT_VALUES = (0.66, 0.46, 0.05, 0.59, 0.06, 0.65, 0.48, 0.95)


@dataclass(frozen=True)
class QedWeights:
    """Ordered component labels with their aggregation weights."""

    components: tuple[tuple[str, float], ...] = field(
        default=tuple(zip(LABELS, DEFAULT_WEIGHT_VALUES)))

    def __post_init__(self) -> None:
        labels = [label for label, _ in self.components]
        if len(set(labels)) != len(labels):
            raise UnknownLabel("component labels must be unique")
        for label, weight in self.components:
            if weight <= 0.0:
                raise NonpositiveComponent(f"weight for {label} must be > 0, got {weight}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.components)

    @property
    def total(self) -> float:
        return sum(weight for _, weight in self.components)


def default_weights() -> QedWeights:
    return QedWeights()


def qed_score(d, w: QedWeights | None = None) -> float:
    """exp( sum_i w_i * ln(d_i) / W ) over the eight components.

    ``d`` is either a mapping label -> desirability covering every component,
    or a sequence aligned with the weight order.
    """
    weights = w or default_weights()
    if isinstance(d, dict):
        extra = set(d) - set(weights.labels)
        missing = set(weights.labels) - set(d)
        if extra or missing:
            raise UnknownLabel(
                f"component mismatch: missing {sorted(missing)}, unknown {sorted(extra)}")
        values = [d[label] for label in weights.labels]
    else:
        values = list(d)
        if len(values) != len(weights.labels):
            raise UnknownLabel(
                f"expected {len(weights.labels)} components, got {len(values)}")

    log_sum = 0.0
    for (label, weight), value in zip(weights.components, values):
        if value <= 0.0:
            raise NonpositiveComponent(f"desirability for {label} must be > 0, got {value}")
        log_sum += weight * math.log(value)
    return math.exp(log_sum / weights.total)


def qed_ceiling(locked: dict[str, float], assumed_max: float = 1.0,
                w: QedWeights | None = None) -> float:
    """Best achievable score when some components are pinned.

    Locked components keep their given desirabilities; every other component
    is optimistically set to ``assumed_max``.
    """
    weights = w or default_weights()
    unknown = set(locked) - set(weights.labels)
    if unknown:
        raise UnknownLabel(f"unknown component labels: {sorted(unknown)}")
    if assumed_max <= 0.0:
        raise NonpositiveComponent(f"assumed_max must be > 0, got {assumed_max}")
    d = {label: locked.get(label, assumed_max) for label in weights.labels}
    return qed_score(d, weights)
