"""Phased run driver: plan first, call tools under gates, then audit.

A run walks three phases. Phase 0 only collects the plan; any tool call
there is an error. Phase 1 dispatches tool calls through the client, runs
the response checkpoint and download policy after every call, and records
claims. Phase 2 audits the full claim ledger and decides whether a report
may be emitted. Every step lands in an append-only, timestamp-free log so
a rerun with the same script and server seed reproduces it byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from gatewright.errors import GatewrightError
from gatewright.gates import (
    AuditEntry,
    CheckpointAEvidence,
    CheckpointCEvidence,
    CheckpointFailed,
    GateError,
    IntegrityTable,
    MappingNeed,
    Phase0Plan,
    PlanIncomplete,
    PrematureToolCall,
    REQUIRED_PLAN_FIELDS,
    ValueCheck,
    ValueProbe,
    checkpoint,
    label_claim,
)
from gatewright.toollink.client import ToolClient
from gatewright.toollink.errors import ToolLinkError
from gatewright.toollink.protocol import FileArtifact, ToolDescriptor, ToolResponse


class PlannerAborted(GatewrightError):
    """The planner gave up; the run log rides along for inspection."""

    def __init__(self, reason: str, log: "RunLog") -> None:
        super().__init__(reason)
        self.reason = reason
        self.log = log


class ToolExecutionFailed(GatewrightError):
    """A tool ran but reported failure; planners may branch on this."""

    def __init__(self, tool_name: str, detail: str) -> None:
        super().__init__(f"{tool_name}: {detail}")
        self.tool_name = tool_name
        self.detail = detail


ACTION_KINDS = ("SetPlanField", "CallTool", "ListTools", "DeclareClaim",
                "AdvancePhase", "RetryWith", "Abort")


@dataclass(frozen=True)
class PlannerAction:
    """One scripted step, with an optional branch taken after an error."""

    kind: str
    payload: Mapping[str, Any] = field(default_factory=dict)
    on_error: tuple["PlannerAction", ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind: {self.kind!r}")


class ScriptedPlanner:
    """Replays a fixed action list, splicing in error branches.

    When the engine reports that the last action failed, the branch
    attached to that action (if any) runs before the rest of the script.
    Without a branch the error simply propagates to the caller.
    """

    def __init__(self, actions: Sequence[PlannerAction]) -> None:
        self._queue = list(actions)
        self._last: PlannerAction | None = None

    def next(self, last_error: Exception | None = None) -> PlannerAction | None:
        if last_error is not None:
            if self._last is None or not self._last.on_error:
                raise last_error
            self._queue[:0] = self._last.on_error
        if not self._queue:
            self._last = None
            return None
        self._last = self._queue.pop(0)
        return self._last


class RunLog:
    """Append-only run record: one `SEQ KIND PAYLOAD` line per event."""

    def __init__(self) -> None:
        self._lines: list[str] = []

    def append(self, kind: str, payload: Mapping[str, Any]) -> None:
        body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        self._lines.append(f"{len(self._lines) + 1} {kind} {body}")

    def lines(self) -> tuple[str, ...]:
        return tuple(self._lines)

    def render(self) -> str:
        return "\n".join(self._lines) + "\n" if self._lines else ""


@dataclass(frozen=True)
class RunConfig:
    downloads_dir: Path | None = None
    default_category: str = "A"
    max_actions: int = 10_000
    confidence_thresholds: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class RunOutcome:
    status: str
    plan: Phase0Plan
    log: RunLog
    claims: tuple[AuditEntry, ...]
    integrity: IntegrityTable | None
    artifacts: tuple[FileArtifact, ...]


def _build_plan(fields: Mapping[str, Any]) -> Phase0Plan:
    def as_tuple(name: str) -> tuple[str, ...]:
        value = fields[name]
        if isinstance(value, str):
            return (value,)
        return tuple(str(item) for item in value)

    mapping = fields.get("mapping_needed")
    need = None
    if mapping:
        need = MappingNeed(from_kind=str(mapping["from"]),
                           to_kind=str(mapping["to"]))
    return Phase0Plan(
        task_type=str(fields["task_type"]),
        hard_constraints=as_tuple("hard_constraints"),
        soft_constraints=as_tuple("soft_constraints"),
        execution_path=as_tuple("execution_path"),
        file_collection_needs=as_tuple("file_collection_needs"),
        must_compute=as_tuple("must_compute"),
        mapping_needed=need,
    )


def run_phase0(task: str, skills: Sequence, planner,
               log: RunLog | None = None) -> Phase0Plan:
    """Collect the six-field plan from the planner before any tool runs."""
    log = log if log is not None else RunLog()
    log.append("PHASE", {"phase": 0, "task": task,
                         "skills": [getattr(s, "name", str(s))
                                    for s in skills]})
    fields: dict[str, Any] = {}
    while True:
        action = planner.next()
        if action is None:
            missing = [name for name in REQUIRED_PLAN_FIELDS
                       if name not in fields]
            raise PlanIncomplete(f"missing plan fields: {', '.join(missing)}")
        if action.kind == "CallTool":
            raise PrematureToolCall(
                f"tool call before plan ready: "
                f"{action.payload.get('tool', '?')}")
        if action.kind == "Abort":
            raise PlannerAborted(str(action.payload.get("reason", "abort")),
                                 log)
        if action.kind == "SetPlanField":
            name = action.payload["field"]
            fields[name] = action.payload["value"]
            log.append("PLAN_FIELD", {"field": name,
                                      "value": action.payload["value"]})
            continue
        if action.kind == "AdvancePhase":
            missing = [name for name in REQUIRED_PLAN_FIELDS
                       if name not in fields]
            if missing:
                raise PlanIncomplete(
                    f"missing plan fields: {', '.join(missing)}")
            plan = _build_plan(fields)
            log.append("PLAN_READY", {
                "task_type": plan.task_type,
                "mapping_needed": bool(plan.mapping_needed),
            })
            return plan
        raise PrematureToolCall(
            f"action {action.kind} not allowed during planning")


class _RunState:
    def __init__(self, client: ToolClient, registry, config: RunConfig,
                 log: RunLog) -> None:
        self.client = client
        self.registry = registry
        self.config = config
        self.log = log
        self.claims: list[AuditEntry] = []
        self.checks: list[ValueCheck] = []
        self.artifacts: list[FileArtifact] = []
        self.local_paths: dict[str, Path] = {}
        self.last_response: ToolResponse | None = None
        self.last_call: tuple[str, dict[str, Any]] | None = None


def _descriptor_for(registry, name: str) -> ToolDescriptor | None:
    if isinstance(registry, Mapping):
        return registry.get(name)
    return None


def _dispatch_call(state: _RunState, tool: str, args: dict[str, Any],
                   payload: Mapping[str, Any]) -> None:
    state.last_call = (tool, dict(args))
    state.log.append("TOOL_CALL", {"args": args, "tool": tool})
    response = state.client.call_tool(state.registry, tool, args)
    if not response.ok:
        state.log.append("TOOL_ERROR", {"detail": response.error_detail,
                                        "tool": tool})
        raise ToolExecutionFailed(tool, response.error_detail or "failed")
    state.last_response = response
    state.log.append("TOOL_OK", {
        "files": list(response.file_paths),
        "tool": tool,
        "values": {k: response.values[k] for k in sorted(response.values)},
    })
    artifacts = []
    category = str(payload.get("file_category",
                               state.config.default_category))
    if not payload.get("skip_fetch", False):
        for remote in response.file_paths:
            artifact = state.client.fetch_file(remote, category=category)
            artifacts.append(artifact)
            if artifact.local_path is not None:
                state.local_paths[remote] = artifact.local_path
            state.log.append("FETCH", {
                "category": category,
                "path": remote,
                "size": artifact.local_size_bytes,
            })
    else:
        artifacts = [FileArtifact(remote, category=category)
                     for remote in response.file_paths]
    state.artifacts.extend(artifacts)
    try:
        checkpoint("A", CheckpointAEvidence(
            response=response,
            artifacts=tuple(artifacts),
            descriptor=_descriptor_for(state.registry, tool)))
    except CheckpointFailed as exc:
        state.log.append("GATE_A", {"passed": False,
                                    "violations": list(exc.violations)})
        raise
    state.log.append("GATE_A", {"passed": True, "violations": []})


def _resolve_check_source(state: _RunState, source: Any) -> Any:
    if source == "last_response":
        if state.last_response is None:
            raise GateError("no response recorded for claim check")
        return state.last_response
    if isinstance(source, str) and source in state.local_paths:
        return state.local_paths[source]
    return source


def _declare_claim(state: _RunState, payload: Mapping[str, Any]) -> None:
    claim_id = payload.get("claim_id", f"claim-{len(state.claims) + 1:04d}")
    entry = label_claim(payload["value"], payload["category"],
                        payload.get("source", {}), claim_id=claim_id)
    state.claims.append(entry)
    check = payload.get("check")
    if check is not None:
        probe = ValueProbe(**check["probe"])
        source = _resolve_check_source(state, check["source"])
        state.checks.append(ValueCheck(claim_id, source, probe))
    state.log.append("CLAIM", {
        "category": entry.category,
        "claim_id": entry.claim_id,
        "value": entry.value,
        "verified": check is not None,
    })


def drive(planner, client: ToolClient, registry,
          config: RunConfig | None = None, *,
          task: str = "run", skills: Sequence = ()) -> RunOutcome:
    """Execute a full phased run under gates and return its outcome.

    Tool failures and response-checkpoint failures are offered back to the
    planner, which may branch (retry, rename, abort). Ledger-audit failures
    at the end of the run are terminal: no branch can emit the report.
    """
    config = config or RunConfig()
    log = RunLog()
    plan = run_phase0(task, skills, planner, log)
    state = _RunState(client, registry, config, log)
    log.append("PHASE", {"phase": 1})

    last_error: Exception | None = None
    for _ in range(config.max_actions):
        action = planner.next(last_error)
        last_error = None
        if action is None:
            break
        if action.kind == "Abort":
            reason = str(action.payload.get("reason", "abort"))
            log.append("ABORT", {"reason": reason})
            raise PlannerAborted(reason, log)
        if action.kind == "AdvancePhase":
            break
        try:
            if action.kind == "CallTool":
                _dispatch_call(state, action.payload["tool"],
                               dict(action.payload.get("args", {})),
                               action.payload)
            elif action.kind == "RetryWith":
                if state.last_call is None:
                    raise GateError("nothing to retry")
                tool, args = state.last_call
                merged = {**args, **dict(action.payload.get("args", {}))}
                log.append("RETRY", {"tool": tool})
                _dispatch_call(state, tool, merged, action.payload)
            elif action.kind == "ListTools":
                names = state.client.list_tools()
                log.append("LIST_TOOLS", {"count": len(names)})
            elif action.kind == "DeclareClaim":
                _declare_claim(state, action.payload)
            elif action.kind == "SetPlanField":
                raise GateError("plan is frozen after phase 0")
        except (ToolLinkError, GateError, ToolExecutionFailed) as exc:
            if not isinstance(exc, CheckpointFailed):
                log.append("ERROR", {"detail": str(exc),
                                     "kind": type(exc).__name__})
            last_error = exc
    else:
        raise GateError("action budget exhausted")

    log.append("PHASE", {"phase": 2})
    evidence = CheckpointCEvidence(entries=tuple(state.claims),
                                   checks=tuple(state.checks))
    try:
        report = checkpoint("C", evidence)
    except CheckpointFailed as exc:
        log.append("GATE_C", {"passed": False,
                              "violations": list(exc.violations)})
        raise
    log.append("GATE_C", {"passed": True, "violations": []})
    return RunOutcome(status="Success", plan=plan, log=log,
                      claims=tuple(state.claims), integrity=report.table,
                      artifacts=tuple(state.artifacts))
