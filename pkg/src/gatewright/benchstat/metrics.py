"""Benchmark metric evaluation.

Predictions are compared against ground truth by exact canonical-text
equality; no chemical normalization happens here, the benchmark files are
assumed pre-canonicalized. Each task kind reports its own metric set:
set-equality accuracy plus per-item F1 for property filtering, plain
exact-match accuracy for retrieval/affinity/editing, mean hits in the top 3
for docking ranking, and mean improvement plus success fraction for property
optimization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from gatewright.errors import GatewrightError


class LengthMismatch(GatewrightError):
    """Predictions are not aligned one-to-one with the items."""


class KindMismatch(GatewrightError):
    """Items of mixed kinds, or a prediction of the wrong shape."""


class WeightSumInvalid(GatewrightError):
    """Rubric weights must be nonnegative and sum to 1."""


class PointsOutOfRange(GatewrightError):
    """Rubric points must be 0, 1, or 2."""


KINDS = ("PropertyFiltering", "SimilarityRetrieval", "AffinityPair",
         "DockingRanking", "Editing", "PropertyOptimization")

_EXACT_KINDS = ("SimilarityRetrieval", "AffinityPair", "Editing")


@dataclass(frozen=True)
class DockingTruth:
    """Ground truth for one docking-ranking item."""

    actives: frozenset[str]
    pool: frozenset[str]

    def __post_init__(self) -> None:
        if not self.actives <= self.pool:
            raise KindMismatch("actives must be a subset of the candidate pool")


@dataclass(frozen=True)
class OptimizationTruth:
    """Baseline value and the threshold an optimized value must meet."""

    baseline: float
    threshold: float
    direction: str  # "increase" or "decrease"

    def __post_init__(self) -> None:
        if self.direction not in ("increase", "decrease"):
            raise KindMismatch(f"direction must be increase/decrease, got {self.direction!r}")


@dataclass(frozen=True)
class BenchmarkItem:
    kind: str
    payload: object
    item_id: str = ""

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise KindMismatch(f"unknown task kind {self.kind!r}")


@dataclass(frozen=True)
class MetricReport:
    """Per-kind metric summary; fields not applicable to the kind stay None."""

    kind: str
    n_items: int
    accuracy: float | None = None
    f1: float | None = None
    hits_at_3: float | None = None
    delta: float | None = None
    success_rate: float | None = None


def _item_f1(pred: frozenset[str], truth: frozenset[str]) -> float:
    if not pred and not truth:
        return 1.0
    denom = len(pred) + len(truth)
    if denom == 0:
        return 0.0
    return 2.0 * len(pred & truth) / denom


def evaluate_benchmark(items: list[BenchmarkItem], predictions: list) -> MetricReport:
    """Score aligned predictions against ground-truth items of one kind."""
    if len(items) != len(predictions):
        raise LengthMismatch(
            f"{len(items)} items but {len(predictions)} predictions")
    if not items:
        raise LengthMismatch("cannot evaluate an empty item list")
    kinds = {item.kind for item in items}
    if len(kinds) != 1:
        raise KindMismatch(f"mixed task kinds in one evaluation: {sorted(kinds)}")
    kind = items[0].kind
    n = len(items)

    if kind == "PropertyFiltering":
        acc = 0
        f1_total = 0.0
        for item, pred in zip(items, predictions):
            truth = frozenset(item.payload)
            try:
                pred_set = frozenset(pred)
            except TypeError as exc:
                raise KindMismatch("filtering predictions must be sets of texts") from exc
            if pred_set == truth:
                acc += 1
            f1_total += _item_f1(pred_set, truth)
        return MetricReport(kind=kind, n_items=n, accuracy=acc / n, f1=f1_total / n)

    if kind in _EXACT_KINDS:
        acc = sum(1 for item, pred in zip(items, predictions) if pred == item.payload)
        return MetricReport(kind=kind, n_items=n, accuracy=acc / n)

    if kind == "DockingRanking":
        hits_total = 0.0
        for item, pred in zip(items, predictions):
            truth = item.payload
            if not isinstance(truth, DockingTruth):
                raise KindMismatch("docking items need a DockingTruth payload")
            if isinstance(pred, str):
                raise KindMismatch("docking predictions must be ranked lists")
            hits_total += len(frozenset(pred[:3]) & truth.actives)
        return MetricReport(kind=kind, n_items=n, hits_at_3=hits_total / n)

    # PropertyOptimization
    delta_total = 0.0
    successes = 0
    for item, pred in zip(items, predictions):
        truth = item.payload
        if not isinstance(truth, OptimizationTruth):
            raise KindMismatch("optimization items need an OptimizationTruth payload")
        achieved = float(pred)
        if truth.direction == "increase":
            delta_total += achieved - truth.baseline
            if achieved >= truth.threshold:
                successes += 1
        else:
            delta_total += truth.baseline - achieved
            if achieved <= truth.threshold:
                successes += 1
    return MetricReport(kind=kind, n_items=n,
                        delta=delta_total / n, success_rate=successes / n)


def rubric_score(scores: list[tuple[float, int]]) -> float:
    """Weighted rubric on a 0-2 point scale, normalized to [0, 1]."""
    total_weight = 0.0
    for weight, points in scores:
        if weight < 0.0:
            raise WeightSumInvalid(f"weights must be nonnegative, got {weight}")
        if points not in (0, 1, 2):
            raise PointsOutOfRange(f"points must be 0, 1, or 2, got {points}")
        total_weight += weight
    if abs(total_weight - 1.0) > 1e-9:
        raise WeightSumInvalid(f"weights must sum to 1, got {total_weight}")
    return sum(weight * (points / 2.0) for weight, points in scores)


# ---------------------------------------------------------------------------
# CSV ingestion
#
# Truth headers by kind:
#   PropertyFiltering:      item_id,member             (multi-row sets)
#   SimilarityRetrieval,
#   AffinityPair, Editing:  item_id,answer
#   DockingRanking:         item_id,candidate,active_flag,rank_truth
#   PropertyOptimization:   item_id,baseline,threshold,direction
# Predictions: item_id,prediction (multi-row per item for set/ranked kinds;
# rank order for docking follows row order).


def _read_rows(path: Path, expected: list[str]) -> list[dict[str, str]]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        if header != expected:
            raise KindMismatch(
                f"{path}: expected header {','.join(expected)}, got {','.join(header)}")
        return list(reader)


def load_truth_csv(kind: str, path: str | Path) -> list[BenchmarkItem]:
    path = Path(path)
    if kind not in KINDS:
        raise KindMismatch(f"unknown task kind {kind!r}")

    if kind == "PropertyFiltering":
        groups: dict[str, set[str]] = {}
        for row in _read_rows(path, ["item_id", "member"]):
            groups.setdefault(row["item_id"], set())
            if row["member"]:
                groups[row["item_id"]].add(row["member"])
        return [BenchmarkItem(kind, frozenset(members), item_id)
                for item_id, members in sorted(groups.items())]

    if kind in _EXACT_KINDS:
        return [BenchmarkItem(kind, row["answer"], row["item_id"])
                for row in _read_rows(path, ["item_id", "answer"])]

    if kind == "DockingRanking":
        pools: dict[str, set[str]] = {}
        actives: dict[str, set[str]] = {}
        for row in _read_rows(path, ["item_id", "candidate", "active_flag", "rank_truth"]):
            pools.setdefault(row["item_id"], set()).add(row["candidate"])
            actives.setdefault(row["item_id"], set())
            if row["active_flag"] == "1":
                actives[row["item_id"]].add(row["candidate"])
        return [BenchmarkItem(kind,
                              DockingTruth(frozenset(actives[item_id]),
                                           frozenset(pools[item_id])),
                              item_id)
                for item_id in sorted(pools)]

    rows = _read_rows(path, ["item_id", "baseline", "threshold", "direction"])
    return [BenchmarkItem(kind,
                          OptimizationTruth(float(row["baseline"]),
                                            float(row["threshold"]),
                                            row["direction"]),
                          row["item_id"])
            for row in rows]


def load_predictions_csv(kind: str, path: str | Path,
                         items: list[BenchmarkItem]) -> list:
    """Read predictions and align them with the given items by item_id."""
    path = Path(path)
    rows = _read_rows(path, ["item_id", "prediction"])

    if kind == "PropertyFiltering":
        by_id: dict[str, set[str]] = {}
        for row in rows:
            by_id.setdefault(row["item_id"], set())
            if row["prediction"]:
                by_id[row["item_id"]].add(row["prediction"])
    elif kind == "DockingRanking":
        ranked: dict[str, list[str]] = {}
        for row in rows:
            ranked.setdefault(row["item_id"], []).append(row["prediction"])
        by_id = ranked
    elif kind == "PropertyOptimization":
        by_id = {row["item_id"]: float(row["prediction"]) for row in rows}
    else:
        by_id = {row["item_id"]: row["prediction"] for row in rows}

    missing = [item.item_id for item in items if item.item_id not in by_id]
    if missing:
        raise LengthMismatch(f"missing predictions for items: {missing}")
    extra = set(by_id) - {item.item_id for item in items}
    if extra:
        raise LengthMismatch(f"predictions for unknown items: {sorted(extra)}")
    return [by_id[item.item_id] for item in items]
