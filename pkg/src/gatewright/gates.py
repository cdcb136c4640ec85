"""Quality gates for tool-driven runs: plan readiness, self-audit
checkpoints, count verification, claim provenance, and funnel tracking.

The gates never repair data. They record what was claimed, what the files
actually hold, and whether the two agree; a failed gate blocks forward
progress instead of patching the numbers.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from gatewright.errors import GatewrightError
from gatewright.toollink.protocol import FileArtifact, ToolDescriptor, ToolResponse


class GateError(GatewrightError):
    """Base class for gate failures."""


class PlanIncomplete(GateError):
    """The planner stopped before all required plan fields were set."""


class PrematureToolCall(GateError):
    """A tool call was attempted before the plan was marked ready."""


class CheckpointFailed(GateError):
    """A checkpoint found violations; they ride along on the exception."""

    def __init__(self, kind: str, violations: Sequence[str],
                 table: "IntegrityTable | None" = None) -> None:
        super().__init__(f"checkpoint {kind} failed: " + "; ".join(violations))
        self.kind = kind
        self.violations = tuple(violations)
        self.table = table


class FileMissing(GateError):
    """The file named by a verification record does not exist."""


class CounterUnsupported(GateError):
    """The requested counter cannot read the file's format."""


class IncompleteCitation(GateError):
    """A literature claim lacks authors, year, or doi."""


class MissingSource(GateError):
    """A claim lacks the source its category requires."""


class TierOrderViolation(GateError):
    """A funnel tier was recorded before its predecessor."""


TASK_TYPES = ("screening", "design", "evaluation", "structural",
              "protein_design")

# The planner must populate every one of these before the plan is ready.
# Declaring a numbering translation is a flag armed on top of them, not a
# seventh requirement.
REQUIRED_PLAN_FIELDS = ("task_type", "hard_constraints", "soft_constraints",
                        "execution_path", "file_collection_needs",
                        "must_compute")


@dataclass(frozen=True)
class MappingNeed:
    """Scheme pair recorded when the task requires numbering translation."""

    from_kind: str
    to_kind: str


@dataclass(frozen=True)
class Phase0Plan:
    task_type: str
    hard_constraints: tuple[str, ...]
    soft_constraints: tuple[str, ...]
    execution_path: tuple[str, ...]
    file_collection_needs: tuple[str, ...]
    must_compute: tuple[str, ...]
    mapping_needed: MappingNeed | None = None

    def __post_init__(self) -> None:
        if self.task_type not in TASK_TYPES:
            raise ValueError(f"unknown task type: {self.task_type!r}")


CLAIM_CATEGORIES = ("ToolComputed", "AgentInterpretation", "LiteratureValue")

LITERATURE_LABEL = "LITERATURE VALUE --- not computed in this session"


@dataclass(frozen=True)
class AuditEntry:
    claim_id: str
    value: Any
    category: str
    source: Mapping[str, Any]
    label: str | None = None

    def __post_init__(self) -> None:
        if self.category not in CLAIM_CATEGORIES:
            raise ValueError(f"unknown claim category: {self.category!r}")
        if self.category == "LiteratureValue":
            for key in ("authors", "year", "doi"):
                if not self.source.get(key):
                    raise IncompleteCitation(f"citation lacks {key}")
            if self.label != LITERATURE_LABEL:
                raise ValueError("literature entries must carry the "
                                 "warning label verbatim")


def label_claim(value: Any, category: str, source: Mapping[str, Any], *,
                claim_id: str = "claim-0") -> AuditEntry:
    """Record one claim with its provenance category.

    Tool-computed values name the tool and response that produced them,
    interpretations carry the rationale text, and literature values carry
    a full citation plus the warning label.
    """
    if category == "ToolComputed":
        if not source.get("tool"):
            raise MissingSource("tool-computed claims must name the tool")
        return AuditEntry(claim_id, value, category, dict(source))
    if category == "AgentInterpretation":
        if not source.get("rationale"):
            raise MissingSource("interpretation claims need rationale text")
        return AuditEntry(claim_id, value, category, dict(source))
    if category == "LiteratureValue":
        return AuditEntry(claim_id, value, category, dict(source),
                          label=LITERATURE_LABEL)
    raise ValueError(f"unknown claim category: {category!r}")


# ---------------------------------------------------------------------------
# counters and value probes

COUNTER_KINDS = ("json_array_length", "csv_rows", "line_match", "pdb_models")
PROBE_KINDS = ("json_field", "csv_cell", "tool_response")


@dataclass(frozen=True)
class CounterSpec:
    """A structured description of how to count items in a file.

    Stored instead of an executable command so the verification step is
    auditable without running arbitrary shell strings.
    """

    kind: str
    pattern: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in COUNTER_KINDS:
            raise ValueError(f"unknown counter kind: {self.kind!r}")
        if self.kind == "line_match" and not self.pattern:
            raise ValueError("line_match counters require a pattern")

    def describe(self) -> str:
        if self.kind == "line_match":
            return f"line_match({self.pattern})"
        return self.kind


def _as_counter(counter: "CounterSpec | str") -> CounterSpec:
    if isinstance(counter, CounterSpec):
        return counter
    return CounterSpec(counter)


def run_counter(path: Path, counter: "CounterSpec | str") -> int:
    """Count items in a local file with the named counter."""
    spec = _as_counter(counter)
    path = Path(path)
    if not path.is_file():
        raise FileMissing(str(path))
    text = path.read_text(encoding="utf-8")
    if spec.kind == "json_array_length":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CounterUnsupported(f"not JSON: {path}") from exc
        if not isinstance(payload, list):
            raise CounterUnsupported(f"JSON root is not an array: {path}")
        return len(payload)
    if spec.kind == "csv_rows":
        rows = [row for row in csv.reader(text.splitlines()) if row]
        if not rows:
            raise CounterUnsupported(f"CSV has no header: {path}")
        return len(rows) - 1
    if spec.kind == "line_match":
        matcher = re.compile(spec.pattern or "")
        return sum(1 for line in text.splitlines() if matcher.search(line))
    models = sum(1 for line in text.splitlines()
                 if line.startswith("MODEL "))
    if models:
        return models
    if any(line.startswith(("ATOM", "HETATM"))
           for line in text.splitlines()):
        return 1
    raise CounterUnsupported(f"no coordinate records: {path}")


@dataclass(frozen=True)
class ValueProbe:
    """How to re-read one claimed value from its source.

    ``json_field`` walks a dotted path into a JSON file, ``csv_cell``
    addresses a column in a data row, and ``tool_response`` reads a key
    straight from a recorded tool response.
    """

    kind: str
    field: str
    row: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in PROBE_KINDS:
            raise ValueError(f"unknown probe kind: {self.kind!r}")
        if self.kind == "csv_cell" and self.row is None:
            raise ValueError("csv_cell probes require a row index")

    def describe(self) -> str:
        if self.kind == "csv_cell":
            return f"csv_cell({self.field}, row {self.row})"
        return f"{self.kind}({self.field})"


def run_value_probe(source: "Path | str | ToolResponse",
                    probe: ValueProbe) -> Any:
    """Re-derive one value from a file or recorded response."""
    if probe.kind == "tool_response":
        if not isinstance(source, ToolResponse):
            raise CounterUnsupported("tool_response probes need a response")
        if probe.field not in source.values:
            raise CounterUnsupported(f"response lacks key {probe.field!r}")
        return source.values[probe.field]
    path = Path(source)
    if not path.is_file():
        raise FileMissing(str(path))
    text = path.read_text(encoding="utf-8")
    if probe.kind == "json_field":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CounterUnsupported(f"not JSON: {path}") from exc
        node = payload
        for part in probe.field.split("."):
            if isinstance(node, list):
                try:
                    node = node[int(part)]
                except (ValueError, IndexError) as exc:
                    raise CounterUnsupported(
                        f"no element {part!r} in {path}") from exc
            elif isinstance(node, dict) and part in node:
                node = node[part]
            else:
                raise CounterUnsupported(f"no field {part!r} in {path}")
        return node
    rows = list(csv.DictReader(text.splitlines()))
    if probe.row is None or probe.row >= len(rows):
        raise CounterUnsupported(f"no row {probe.row} in {path}")
    row = rows[probe.row]
    if probe.field not in row:
        raise CounterUnsupported(f"no column {probe.field!r} in {path}")
    value = row[probe.field]
    try:
        return float(value)
    except ValueError:
        return value


def values_match(claimed: Any, actual: Any) -> bool:
    """Compare a claimed value against its re-derived counterpart."""
    if isinstance(claimed, bool) or isinstance(actual, bool):
        return claimed is actual
    if isinstance(claimed, (int, float)) and isinstance(actual, (int, float)):
        return math.isclose(float(claimed), float(actual),
                            rel_tol=1e-9, abs_tol=1e-12)
    return claimed == actual


# ---------------------------------------------------------------------------
# count gate and funnel


@dataclass(frozen=True)
class CountGateRecord:
    claimed: int
    source_file: str
    counter: CounterSpec
    actual: int
    passed: bool
    verification_note: str

    def __post_init__(self) -> None:
        if self.passed != (self.claimed == self.actual):
            raise ValueError("passed flag must reflect claimed == actual")


def count_gate(claimed: int, source_file: Path,
               counter: "CounterSpec | str") -> CountGateRecord:
    """Verify a claimed count against the file it came from.

    On mismatch the record still carries the actual count, which is the
    authoritative number for anything downstream.
    """
    spec = _as_counter(counter)
    actual = run_counter(source_file, spec)
    note = f"{spec.describe()} on {source_file}: actual {actual}"
    return CountGateRecord(claimed=int(claimed), source_file=str(source_file),
                           counter=spec, actual=actual,
                           passed=int(claimed) == actual,
                           verification_note=note)


@dataclass(frozen=True)
class FunnelRecord:
    tier: int
    molecules_in: int
    molecules_out: int
    verified: bool
    gate: CountGateRecord | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.tier <= 4:
            raise ValueError("tier must be between 1 and 4")
        if self.molecules_out > self.molecules_in:
            raise ValueError("a tier cannot emit more molecules than it took")


def record_funnel_tier(tier: int, in_count: int, out_count: int,
                       source_file: Path, counter: "CounterSpec | str", *,
                       previous: Sequence[FunnelRecord] = ()) -> FunnelRecord:
    """Record one screening tier, verifying its output count from file."""
    if tier != len(previous) + 1:
        raise TierOrderViolation(
            f"tier {tier} recorded after {len(previous)} tiers")
    gate = count_gate(out_count, source_file, counter)
    return FunnelRecord(tier=tier, molecules_in=in_count,
                        molecules_out=out_count, verified=gate.passed,
                        gate=gate)


# ---------------------------------------------------------------------------
# integrity table


@dataclass(frozen=True)
class IntegrityRow:
    claim_id: str
    claimed: Any
    source: str
    verification: str
    actual: Any
    match: bool


@dataclass(frozen=True)
class IntegrityTable:
    rows: tuple[IntegrityRow, ...]

    @property
    def all_match(self) -> bool:
        return all(row.match for row in self.rows)

    def mismatches(self) -> tuple[IntegrityRow, ...]:
        return tuple(row for row in self.rows if not row.match)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass(frozen=True)
class CheckpointReport:
    kind: str
    passed: bool
    violations: tuple[str, ...] = ()
    table: IntegrityTable | None = None


@dataclass(frozen=True)
class CheckpointAEvidence:
    """One tool response plus the artifacts fetched for it."""

    response: ToolResponse
    artifacts: tuple[FileArtifact, ...] = ()
    descriptor: ToolDescriptor | None = None


@dataclass(frozen=True)
class ValueCheck:
    """Pairs a named value with the probe that re-derives it."""

    name: str
    source: Any
    probe: ValueProbe


@dataclass(frozen=True)
class CheckpointBEvidence:
    """A round summary plus one re-derivation probe per numeric field."""

    summary: Mapping[str, Any]
    checks: tuple[ValueCheck, ...] = ()


@dataclass(frozen=True)
class CheckpointCEvidence:
    """The full claim ledger plus verification probes for numeric claims."""

    entries: tuple[AuditEntry, ...]
    checks: tuple[ValueCheck, ...] = ()


PROBABILITY_UNIT = "probability"
DOCKING_UNIT = "kcal/mol_docking"


def _is_probability_key(key: str, unit: str | None) -> bool:
    return unit == PROBABILITY_UNIT or key.startswith("prob")


def _checkpoint_a(evidence: CheckpointAEvidence) -> list[str]:
    violations = []
    units = (evidence.descriptor.output_units
             if evidence.descriptor is not None else {})
    for key, value in sorted(evidence.response.values.items()):
        unit = units.get(key)
        if unit == DOCKING_UNIT:
            if not isinstance(value, (int, float)) or value >= 0:
                violations.append(
                    f"docking score sign: {key}={value!r} must be negative")
        if _is_probability_key(key, unit):
            if (not isinstance(value, (int, float))
                    or not 0.0 <= float(value) <= 1.0):
                violations.append(
                    f"probability range: {key}={value!r} outside [0, 1]")
    by_path = {a.remote_path: a for a in evidence.artifacts}
    for remote in evidence.response.file_paths:
        artifact = by_path.get(remote)
        if artifact is None:
            violations.append(f"file not collected: {remote}")
        elif artifact.category in ("A", "B") and not artifact.fetched:
            violations.append(
                f"category {artifact.category} file not fetched: {remote}")
        elif artifact.fetched and artifact.local_size_bytes <= 0:
            violations.append(f"empty download: {remote}")
    return violations


def _run_checks(checks: Sequence[ValueCheck],
                claimed: Mapping[str, Any]) -> tuple[list[IntegrityRow], list[str]]:
    rows: list[IntegrityRow] = []
    violations: list[str] = []
    for check in checks:
        claim_value = claimed[check.name]
        try:
            actual = run_value_probe(check.source, check.probe)
        except GateError as exc:
            rows.append(IntegrityRow(check.name, claim_value,
                                     str(check.source),
                                     check.probe.describe(), None, False))
            violations.append(f"{check.name}: probe failed ({exc})")
            continue
        match = values_match(claim_value, actual)
        rows.append(IntegrityRow(check.name, claim_value, str(check.source),
                                 check.probe.describe(), actual, match))
        if not match:
            violations.append(
                f"{check.name}: claimed {claim_value!r}, file holds {actual!r}")
    return rows, violations


def _checkpoint_b(evidence: CheckpointBEvidence) -> list[str]:
    checked = {check.name for check in evidence.checks}
    violations = []
    for name, value in sorted(evidence.summary.items()):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            continue
        if name not in checked:
            violations.append(f"{name}: no re-derivation recorded")
    _, check_violations = _run_checks(evidence.checks, dict(evidence.summary))
    return violations + check_violations


def _checkpoint_c(evidence: CheckpointCEvidence) -> tuple[list[str], IntegrityTable]:
    claimed = {}
    violations = []
    checked = {check.name for check in evidence.checks}
    for entry in evidence.entries:
        claimed[entry.claim_id] = entry.value
        numeric = (isinstance(entry.value, (int, float))
                   and not isinstance(entry.value, bool))
        if (entry.category == "ToolComputed" and numeric
                and entry.claim_id not in checked):
            violations.append(f"{entry.claim_id}: numeric claim unverified")
    rows, check_violations = _run_checks(evidence.checks, claimed)
    return violations + check_violations, IntegrityTable(tuple(rows))


def checkpoint(kind: str, evidence) -> CheckpointReport:
    """Run one self-audit checkpoint; raise on any violation.

    Kind A screens a single tool response (score signs, probability
    ranges, download policy). Kind B re-derives a round summary's numerics
    from their source files. Kind C audits the whole claim ledger and
    builds the integrity table that gates report emission.
    """
    if kind == "A":
        if not isinstance(evidence, CheckpointAEvidence):
            raise TypeError("checkpoint A expects CheckpointAEvidence")
        violations = _checkpoint_a(evidence)
        table = None
    elif kind == "B":
        if not isinstance(evidence, CheckpointBEvidence):
            raise TypeError("checkpoint B expects CheckpointBEvidence")
        violations = _checkpoint_b(evidence)
        table = None
    elif kind == "C":
        if not isinstance(evidence, CheckpointCEvidence):
            raise TypeError("checkpoint C expects CheckpointCEvidence")
        violations, table = _checkpoint_c(evidence)
    else:
        raise ValueError(f"unknown checkpoint kind: {kind!r}")
    if violations:
        raise CheckpointFailed(kind, violations, table)
    return CheckpointReport(kind=kind, passed=True, table=table)


# ---------------------------------------------------------------------------
# computation-first fallback ladder

COMPUTATION_LEVELS = ("Direct", "Alternative", "Approximate", "Literature")

LITERATURE_CHECKLIST = (
    "Pause and reassess whether any computational route remains.",
    "Prepend the warning label to the reported value.",
    "Cite the source with authors, year, and doi.",
    "Cross-check the value against a second independent source.",
    "Confirm the cited measurement context matches this task.",
    "Record why computation was impossible at every level.",
)


@dataclass(frozen=True)
class LevelDecision:
    deliverable: str
    level: str
    tool: str | None = None
    checklist: tuple[str, ...] = ()


def select_computation_level(deliverable: str,
                             tool_status: Mapping[str, str], *,
                             primary: str,
                             alternative: str | None = None,
                             proxy: str | None = None) -> LevelDecision:
    """Pick the first workable computation level for a deliverable.

    Order of preference: the primary tool, a declared alternative, an
    approximate proxy, and only then a literature value, which comes with
    its mandatory follow-up checklist.
    """
    ladder = (("Direct", primary), ("Alternative", alternative),
              ("Approximate", proxy))
    for level, tool in ladder:
        if tool is not None and tool_status.get(tool) == "Available":
            return LevelDecision(deliverable, level, tool=tool)
    return LevelDecision(deliverable, "Literature",
                         checklist=LITERATURE_CHECKLIST)
