"""Round-by-round control of iterative optimization campaigns.

Tracks candidates, enforces the per-round justification gate, schedules
the exploration-to-convergence strategy ladder, and decides after every
round whether to continue, pivot to a different modification site, or
stop. All chemistry arrives as numbers computed elsewhere; this module
only orders, counts, and compares them.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from gatewright.errors import GatewrightError


class LoopError(GatewrightError):
    """Base class for campaign control errors."""


class IndexGap(LoopError):
    """A round arrived out of order."""


class BelowFloor(LoopError):
    """A docking box dimension fell below the 25.0 angstrom floor."""


class DegenerateCenter(LoopError):
    """A pocket center of exactly (0, 0, 0) is a tool failure, not a site."""


class EmptyLibrary(LoopError):
    """Screening-tier selection needs at least one molecule."""


class NegativeProbability(LoopError):
    """An endpoint probability fell outside [0, 1]."""


class AlreadyLocked(LoopError):
    """Locked docking parameters must never change."""


CANDIDATE_SOURCES = ("Generator", "AgentDesigned", "Manual")
PHASES = ("Exploration", "Targeted", "Convergence")
VERDICTS = ("Continue", "Pivot", "StopSuccess", "StopConverged",
            "StopResourceLimit", "StopTradeoff")
DIRECTIONS = ("maximize", "minimize")


@dataclass(frozen=True)
class Objective:
    """The campaign's single ranking rule: one metric, one direction."""

    metric: str
    direction: str
    threshold: float | None = None

    def __post_init__(self) -> None:
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction: {self.direction!r}")

    def value(self, candidate: "CandidateRecord") -> float:
        return float(candidate.metrics[self.metric])

    def sort_key(self, candidate: "CandidateRecord") -> float:
        value = self.value(candidate)
        return value if self.direction == "maximize" else -value

    def better(self, a: "CandidateRecord", b: "CandidateRecord") -> bool:
        return self.sort_key(a) > self.sort_key(b)

    def meets_threshold(self, candidate: "CandidateRecord") -> bool:
        if self.threshold is None:
            return False
        value = self.value(candidate)
        if self.direction == "maximize":
            return value >= self.threshold
        return value <= self.threshold


@dataclass(frozen=True)
class CandidateRecord:
    smiles: str
    metrics: Mapping[str, float]
    source: str
    qualifying: bool
    target_met: bool = False

    def __post_init__(self) -> None:
        if self.source not in CANDIDATE_SOURCES:
            raise ValueError(f"unknown candidate source: {self.source!r}")
        if self.target_met and not self.qualifying:
            raise ValueError("only qualifying candidates may meet the target")


@dataclass(frozen=True)
class Strategy:
    phase: str
    similarity_band: tuple[float, float]
    batch_size_band: tuple[int, int]

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase: {self.phase!r}")


def schedule_strategy(round_index: int) -> Strategy:
    """Strategy bands by round: explore, then target, then converge."""
    if round_index < 1:
        raise ValueError("round indices start at 1")
    if round_index <= 2:
        return Strategy("Exploration", (0.4, 0.5), (30, 50))
    if round_index <= 4:
        return Strategy("Targeted", (0.6, 0.7), (10, 20))
    return Strategy("Convergence", (0.8, 1.0), (5, 10))


@dataclass(frozen=True)
class ThreeAnswers:
    """The per-round justification: what, why, and how success is judged."""

    improve_what: str
    strategy_why: str
    success_metric: str
    success_threshold: float | None = None
    cited_metric: str | None = None
    cited_value: float | None = None


@dataclass(frozen=True)
class RoundRecord:
    index: int
    strategy: Strategy
    answers: ThreeAnswers
    candidates: tuple[CandidateRecord, ...]
    best: CandidateRecord | None
    delta_vs_prev: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("round indices start at 1")


def pick_best(candidates: Sequence[CandidateRecord],
              objective: Objective) -> CandidateRecord | None:
    """The qualifying candidate that ranks best; earlier wins ties."""
    best = None
    for candidate in candidates:
        if not candidate.qualifying:
            continue
        if best is None or objective.better(candidate, best):
            best = candidate
    return best


def build_round(index: int, answers: ThreeAnswers,
                candidates: Sequence[CandidateRecord],
                objective: Objective,
                prev_best: CandidateRecord | None = None) -> RoundRecord:
    """Assemble one round record with its best pick and metric deltas."""
    best = pick_best(candidates, objective)
    delta: dict[str, float] = {}
    if best is not None and prev_best is not None:
        for name, value in best.metrics.items():
            if name in prev_best.metrics:
                delta[name] = float(value) - float(prev_best.metrics[name])
    return RoundRecord(index=index, strategy=schedule_strategy(index),
                       answers=answers, candidates=tuple(candidates),
                       best=best, delta_vs_prev=delta)


# ---------------------------------------------------------------------------
# round gate

GENERIC_BLOCKLIST = frozenset({
    "continue optimizing",
    "improve the molecule",
    "keep optimizing",
    "make it better",
    "optimize further",
    "try more molecules",
})


@dataclass(frozen=True)
class GateResult:
    passed: bool
    reasons: tuple[str, ...] = ()


def round_gate(answers: ThreeAnswers,
               history: Sequence[RoundRecord]) -> GateResult:
    """Admit a round only when its three answers are specific and cited.

    The first round may cite the baseline assessment instead of a prior
    round, since no round record exists yet.
    """
    reasons = []
    normalized = answers.improve_what.strip().lower()
    if not normalized or normalized in GENERIC_BLOCKLIST:
        reasons.append("improve_what is generic or empty")
    if answers.strategy_why.strip().lower() in GENERIC_BLOCKLIST \
            or not answers.strategy_why.strip():
        reasons.append("strategy_why is generic or empty")
    if history:
        if answers.cited_metric is None or answers.cited_value is None:
            reasons.append("improve_what lacks a citable prior datum")
        elif not _datum_in_history(answers.cited_metric,
                                   answers.cited_value, history):
            reasons.append(
                f"cited datum {answers.cited_metric}="
                f"{answers.cited_value} not found in prior rounds")
    if not answers.success_metric.strip():
        reasons.append("success_metric is empty")
    if answers.success_threshold is None:
        reasons.append("success_metric lacks a numeric threshold")
    return GateResult(passed=not reasons, reasons=tuple(reasons))


def _datum_in_history(metric: str, value: float,
                      history: Sequence[RoundRecord]) -> bool:
    for record in history:
        for candidate in record.candidates:
            stored = candidate.metrics.get(metric)
            if stored is not None and math.isclose(float(stored), value,
                                                   rel_tol=1e-9,
                                                   abs_tol=1e-12):
                return True
        stored = record.delta_vs_prev.get(metric)
        if stored is not None and math.isclose(float(stored), value,
                                               rel_tol=1e-9, abs_tol=1e-12):
            return True
    return False


# ---------------------------------------------------------------------------
# tracker and verdicts


@dataclass(frozen=True)
class GlobalTargetTracker:
    required: int
    max_rounds: int
    target_met_count: int = 0
    best_ever: CandidateRecord | None = None
    stagnation: int = 0

    def __post_init__(self) -> None:
        if self.required < 1:
            raise ValueError("required count must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be positive")


@dataclass(frozen=True)
class CampaignRules:
    objective: Objective
    stagnation_limit: int = 3
    convergence_rel: float = 0.05


def advance(tracker: GlobalTargetTracker, history: Sequence[RoundRecord],
            new_round: RoundRecord, rules: CampaignRules, *,
            tradeoff_declared: bool = False
            ) -> tuple[GlobalTargetTracker, str]:
    """Fold one finished round into the tracker and pick a verdict.

    Verdicts are checked in a fixed precedence: success, resource limit,
    declared trade-off, convergence, pivot, continue. Convergence means
    two consecutive rounds of real but sub-5% relative movement; rounds
    with no movement at all accrue stagnation toward a pivot instead.
    """
    expected = history[-1].index + 1 if history else 1
    if new_round.index != expected:
        raise IndexGap(f"round {new_round.index} after round {expected - 1}")
    objective = rules.objective
    recomputed = pick_best(new_round.candidates, objective)
    if recomputed != new_round.best:
        raise ValueError("round best must maximize the objective among "
                         "qualifying candidates")

    new_count = tracker.target_met_count + sum(
        1 for c in new_round.candidates if c.qualifying and c.target_met)
    best_ever = tracker.best_ever
    stagnation = tracker.stagnation
    if new_round.best is not None and (
            best_ever is None or objective.better(new_round.best, best_ever)):
        best_ever = new_round.best
        stagnation = 0
    else:
        stagnation += 1

    if new_count >= tracker.required:
        verdict = "StopSuccess"
    elif new_round.index >= tracker.max_rounds:
        verdict = "StopResourceLimit"
    elif tradeoff_declared:
        verdict = "StopTradeoff"
    elif _converged(history, new_round, rules):
        verdict = "StopConverged"
    elif stagnation >= rules.stagnation_limit:
        verdict = "Pivot"
        stagnation = 0
    else:
        verdict = "Continue"
    updated = replace(tracker, target_met_count=new_count,
                      best_ever=best_ever, stagnation=stagnation)
    return updated, verdict


def _converged(history: Sequence[RoundRecord], new_round: RoundRecord,
               rules: CampaignRules) -> bool:
    rounds = list(history[-2:]) + [new_round]
    if len(rounds) < 3:
        return False
    values = []
    for record in rounds:
        if record.best is None:
            return False
        values.append(rules.objective.value(record.best))
    for prev, cur in zip(values, values[1:]):
        if prev == 0:
            return False
        change = abs(cur - prev) / abs(prev)
        if not 0.0 < change < rules.convergence_rel:
            return False
    return True


def select_seed(round_record: RoundRecord,
                tracker: GlobalTargetTracker) -> CandidateRecord | None:
    """Seed for the next round: this round's best, else the best ever."""
    if round_record.best is not None:
        return round_record.best
    return tracker.best_ever


# ---------------------------------------------------------------------------
# docking parameters and box ladder

BOX_LADDER = (25.0, 30.0, 40.0, 50.0)
BOX_FLOOR = 25.0


@dataclass(frozen=True)
class DockingParams:
    center: tuple[float, float, float]
    box: tuple[float, float, float]
    engine_tag: str
    locked: bool = False


def lock_params(params: DockingParams) -> DockingParams:
    """Freeze docking parameters for the rest of the campaign."""
    if params.locked:
        raise AlreadyLocked("parameters are already locked")
    if any(dim < BOX_FLOOR for dim in params.box):
        raise BelowFloor(f"box {params.box} below {BOX_FLOOR} floor")
    if params.center == (0.0, 0.0, 0.0):
        raise DegenerateCenter("center (0, 0, 0) rejected")
    return replace(params, locked=True)


def mutate_params(params: DockingParams, **changes) -> DockingParams:
    """Adjust unlocked parameters; locked ones refuse any change."""
    if params.locked:
        raise AlreadyLocked("locked parameters cannot be mutated")
    return replace(params, **changes)


def params_equal(a: DockingParams, b: DockingParams) -> bool:
    """Bit-equal comparison used to validate per-round parameter reuse."""
    return (a.center == b.center and a.box == b.box
            and a.engine_tag == b.engine_tag)


@dataclass(frozen=True)
class BoxStep:
    kind: str
    edge: float | None = None


def next_box_size(last_edge: float | None = None) -> BoxStep:
    """Next rung of the 25 -> 30 -> 40 -> 50 box ladder."""
    if last_edge is None:
        return BoxStep("Use", BOX_LADDER[0])
    if last_edge < BOX_FLOOR:
        raise BelowFloor(f"edge {last_edge} below {BOX_FLOOR} floor")
    for rung in BOX_LADDER:
        if rung > last_edge:
            return BoxStep("Use", rung)
    return BoxStep("SwitchMethod")


# ---------------------------------------------------------------------------
# pocket consensus


@dataclass(frozen=True)
class PocketConsensus:
    kind: str
    center: tuple[float, float, float] | None = None


def consensus_pocket(center_a: tuple[float, float, float],
                     center_b: tuple[float, float, float]) -> PocketConsensus:
    """Reconcile two predicted pocket centers by their separation."""
    for center in (center_a, center_b):
        if not all(math.isfinite(c) for c in center):
            raise ValueError(f"non-finite center: {center}")
        if tuple(center) == (0.0, 0.0, 0.0):
            raise DegenerateCenter("center (0, 0, 0) rejected")
    distance = math.dist(center_a, center_b)
    if distance < 5.0:
        return PocketConsensus("HighConfidence", tuple(center_a))
    if distance <= 10.0:
        midpoint = tuple((a + b) / 2.0 for a, b in zip(center_a, center_b))
        return PocketConsensus("Midpoint", midpoint)
    return PocketConsensus("Divergent")


# ---------------------------------------------------------------------------
# screening and safety diagnostics


def select_screening_tier(n: int) -> int:
    """Library-size tier: <=10, 11-100, 101-500, 501-2000, >2000."""
    if n <= 0:
        raise EmptyLibrary("screening needs at least one molecule")
    for tier, upper in enumerate((10, 100, 500, 2000), start=1):
        if n <= upper:
            return tier
    return 5


def tanimoto_budget(qualification_rates: Sequence[float]) -> str:
    """Healthy while at least half the latest batch still qualifies."""
    if not qualification_rates:
        raise ValueError("no qualification rates recorded")
    for rate in qualification_rates:
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"rate {rate} outside [0, 1]")
    return "Exhausted" if qualification_rates[-1] < 0.50 else "Healthy"


def marginal_gain_stop(gains: Sequence[float]) -> bool:
    """Stop when the latest gain falls below 1% of the first round's."""
    if not gains:
        raise ValueError("no gains recorded")
    if len(gains) == 1:
        return False
    return gains[-1] < 0.01 * gains[0]


@dataclass(frozen=True)
class AdmetFlag:
    endpoint: str
    delta_abs: float
    delta_rel: float


def admet_alarm(baseline: Mapping[str, float],
                current: Mapping[str, float]) -> list[AdmetFlag]:
    """Flag endpoints that degraded sharply versus the baseline.

    An endpoint is flagged on more than a 0.15 absolute increase or more
    than a doubling relative to baseline, monitored or not.
    """
    flags = []
    for endpoint in sorted(set(baseline) & set(current)):
        base = float(baseline[endpoint])
        cur = float(current[endpoint])
        for value in (base, cur):
            if not 0.0 <= value <= 1.0:
                raise NegativeProbability(
                    f"{endpoint}: probability {value} outside [0, 1]")
        delta = cur - base
        rel = delta / base if base > 0 else (
            math.inf if delta > 0 else 0.0)
        if delta > 0.15 or rel > 1.00:
            flags.append(AdmetFlag(endpoint, delta, rel))
    return flags


# ---------------------------------------------------------------------------
# campaign config and trajectory emission


@dataclass(frozen=True)
class CampaignConfig:
    objective_metric: str
    objective_direction: str
    target_threshold: float
    required_count: int
    max_rounds: int
    similarity_threshold: float

    def objective(self) -> Objective:
        return Objective(self.objective_metric, self.objective_direction,
                         threshold=self.target_threshold)

    def tracker(self) -> GlobalTargetTracker:
        return GlobalTargetTracker(required=self.required_count,
                                   max_rounds=self.max_rounds)


_CONFIG_KEYS = ("objective_metric", "objective_direction", "target_threshold",
                "required_count", "max_rounds", "similarity_threshold")


def parse_campaign_config(text: str) -> CampaignConfig:
    """Read `key = value` lines; `#` starts a comment."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in stripped.split("=", 1))
        raw[key] = value
    missing = [key for key in _CONFIG_KEYS if key not in raw]
    if missing:
        raise ValueError(f"missing config keys: {', '.join(missing)}")
    unknown = sorted(set(raw) - set(_CONFIG_KEYS))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    return CampaignConfig(
        objective_metric=raw["objective_metric"],
        objective_direction=raw["objective_direction"],
        target_threshold=float(raw["target_threshold"]),
        required_count=int(raw["required_count"]),
        max_rounds=int(raw["max_rounds"]),
        similarity_threshold=float(raw["similarity_threshold"]),
    )


def load_campaign_config(path: Path) -> CampaignConfig:
    return parse_campaign_config(Path(path).read_text(encoding="utf-8"))


TRAJECTORY_HEADER = ("round", "smiles", "objective", "tanimoto", "strategy",
                     "outcome")


def emit_trajectory_csv(history: Sequence[RoundRecord],
                        verdicts: Sequence[str],
                        objective: Objective) -> str:
    """One CSV row per round: the best pick, its numbers, and the verdict."""
    if len(history) != len(verdicts):
        raise ValueError("one verdict per round required")
    for verdict in verdicts:
        if verdict not in VERDICTS:
            raise ValueError(f"unknown verdict: {verdict!r}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    for record, verdict in zip(history, verdicts):
        if record.best is None:
            writer.writerow((record.index, "", "", "",
                             record.strategy.phase, verdict))
            continue
        tanimoto = record.best.metrics.get("tanimoto_to_start", "")
        writer.writerow((record.index, record.best.smiles,
                         objective.value(record.best), tanimoto,
                         record.strategy.phase, verdict))
    return buf.getvalue()
