"""Tests for the phased run driver and the scripted planner port."""

from __future__ import annotations

import random

import pytest

from gatewright.engine import (
    PlannerAborted,
    PlannerAction,
    RunConfig,
    RunLog,
    ScriptedPlanner,
    ToolExecutionFailed,
    drive,
    run_phase0,
)
from gatewright.gates import (
    CheckpointFailed,
    GateError,
    PlanIncomplete,
    PrematureToolCall,
)
from gatewright.toollink.client import InProcessTransport, ToolClient
from gatewright.toollink.errors import UnknownTool
from gatewright.toollink.protocol import ArgSpec, ToolDescriptor, args_digest
from gatewright.toollink.server import FailurePlan, MockToolServer

PLAN_FIELDS = {
    "task_type": "screening",
    "hard_constraints": ["MW < 500"],
    "soft_constraints": ["prefer known scaffolds"],
    "execution_path": ["filter", "dock", "rank"],
    "file_collection_needs": ["poses from docking"],
    "must_compute": ["docking scores"],
}


def plan_actions(fields=None) -> list[PlannerAction]:
    fields = fields if fields is not None else PLAN_FIELDS
    actions = [PlannerAction("SetPlanField", {"field": name, "value": value})
               for name, value in fields.items()]
    actions.append(PlannerAction("AdvancePhase"))
    return actions


def make_registry() -> dict[str, ToolDescriptor]:
    return {
        "run_docking": ToolDescriptor(
            "run_docking", {"ligand": ArgSpec("text", required=True)},
            returns_files=True, output_units={"score": "kcal/mol_docking"}),
        "run_goca_pipeline": ToolDescriptor(
            "run_goca_pipeline", {"target": ArgSpec("text", required=True)},
            returns_files=False),
        "extract_frames": ToolDescriptor(
            "extract_frames", {"trajectory": ArgSpec("text", required=True),
                               "encoding": ArgSpec("text")},
            returns_files=True),
    }


def make_client(tmp_path, registry, *, seed=0, fixtures=None,
                failure_plan=None) -> ToolClient:
    server = MockToolServer(list(registry.values()), seed=seed,
                            fixtures=fixtures, failure_plan=failure_plan)
    client = ToolClient(InProcessTransport(server),
                        downloads_dir=tmp_path / "downloads")
    client.authenticate("open", "test-client")
    return client


def docking_fixture(score: float = -7.5):
    digest = args_digest("run_docking", {"ligand": "CCO"})
    return {("run_docking", digest): {"score": score}}


# ---------------------------------------------------------------------------
# phase 0


def test_phase0_collects_full_plan():
    plan = run_phase0("screen library", [], ScriptedPlanner(plan_actions()))
    assert plan.task_type == "screening"
    assert plan.execution_path == ("filter", "dock", "rank")
    assert plan.mapping_needed is None


def test_phase0_arms_mapping_flag():
    fields = dict(PLAN_FIELDS)
    fields["mapping_needed"] = {"from": "PdbAuthor", "to": "UniProt"}
    plan = run_phase0("structural", [], ScriptedPlanner(plan_actions(fields)))
    assert plan.mapping_needed is not None
    assert plan.mapping_needed.from_kind == "PdbAuthor"


def test_phase0_rejects_premature_tool_call():
    actions = [PlannerAction("SetPlanField",
                             {"field": "task_type", "value": "screening"}),
               PlannerAction("CallTool", {"tool": "run_docking", "args": {}})]
    with pytest.raises(PrematureToolCall):
        run_phase0("task", [], ScriptedPlanner(actions))


def test_phase0_incomplete_when_script_ends():
    actions = [PlannerAction("SetPlanField",
                             {"field": "task_type", "value": "screening"})]
    with pytest.raises(PlanIncomplete) as err:
        run_phase0("task", [], ScriptedPlanner(actions))
    assert "hard_constraints" in str(err.value)


def test_phase0_incomplete_on_early_advance():
    actions = plan_actions()
    del actions[2]
    with pytest.raises(PlanIncomplete):
        run_phase0("task", [], ScriptedPlanner(actions))


def test_phase0_empty_script():
    with pytest.raises(PlanIncomplete):
        run_phase0("task", [], ScriptedPlanner([]))


def test_phase0_abort():
    actions = [PlannerAction("Abort", {"reason": "bad task"})]
    with pytest.raises(PlannerAborted) as err:
        run_phase0("task", [], ScriptedPlanner(actions))
    assert err.value.reason == "bad task"


def test_phase0_never_calls_tools_property():
    rng = random.Random(11)
    field_actions = plan_actions()[:-1]
    for _ in range(40):
        actions = field_actions[:rng.randint(0, len(field_actions))]
        actions.insert(rng.randint(0, len(actions)), PlannerAction(
            "CallTool", {"tool": "run_docking", "args": {}}))
        actions.append(PlannerAction("AdvancePhase"))
        with pytest.raises(PrematureToolCall):
            run_phase0("task", [], ScriptedPlanner(actions))


# ---------------------------------------------------------------------------
# scripted planner


def test_planner_branches_on_error():
    branch = PlannerAction("ListTools")
    planner = ScriptedPlanner([
        PlannerAction("CallTool", {"tool": "x"}, on_error=(branch,)),
        PlannerAction("Abort"),
    ])
    first = planner.next()
    assert first.kind == "CallTool"
    assert planner.next(RuntimeError("boom")) is branch
    assert planner.next().kind == "Abort"
    assert planner.next() is None


def test_planner_propagates_unbranched_error():
    planner = ScriptedPlanner([PlannerAction("ListTools")])
    planner.next()
    with pytest.raises(RuntimeError):
        planner.next(RuntimeError("boom"))


# ---------------------------------------------------------------------------
# full runs


def happy_path_actions() -> list[PlannerAction]:
    return plan_actions() + [
        PlannerAction("CallTool", {"tool": "run_docking",
                                   "args": {"ligand": "CCO"}}),
        PlannerAction("DeclareClaim", {
            "value": -7.5,
            "category": "ToolComputed",
            "source": {"tool": "run_docking"},
            "check": {"source": "last_response",
                      "probe": {"kind": "tool_response", "field": "score"}},
        }),
        PlannerAction("AdvancePhase"),
    ]


def test_drive_happy_path(tmp_path):
    registry = make_registry()
    client = make_client(tmp_path, registry, fixtures=docking_fixture())
    outcome = drive(ScriptedPlanner(happy_path_actions()), client, registry)
    assert outcome.status == "Success"
    assert outcome.integrity.all_match
    assert len(outcome.artifacts) == 1
    assert outcome.artifacts[0].fetched
    kinds = [line.split(" ", 2)[1] for line in outcome.log.lines()]
    assert kinds.count("GATE_A") == 1
    assert kinds[-1] == "GATE_C"
    ready_at = kinds.index("PLAN_READY")
    assert "TOOL_CALL" not in kinds[:ready_at]


def test_drive_recovers_from_unknown_tool(tmp_path):
    registry = make_registry()
    client = make_client(tmp_path, registry, fixtures=docking_fixture())
    recovery = (
        PlannerAction("ListTools"),
        PlannerAction("CallTool", {"tool": "run_goca_pipeline",
                                   "args": {"target": "EGFR"}}),
    )
    actions = plan_actions() + [
        PlannerAction("CallTool",
                      {"tool": "goca_pipeline", "args": {"target": "EGFR"}},
                      on_error=recovery),
        PlannerAction("AdvancePhase"),
    ]
    outcome = drive(ScriptedPlanner(actions), client, registry)
    assert outcome.status == "Success"
    kinds = [line.split(" ", 2)[1] for line in outcome.log.lines()]
    assert "ERROR" in kinds and "LIST_TOOLS" in kinds
    error_line = next(l for l in outcome.log.lines() if " ERROR " in l)
    assert "run_goca_pipeline" in error_line


def test_drive_unknown_tool_without_branch_raises(tmp_path):
    registry = make_registry()
    client = make_client(tmp_path, registry)
    actions = plan_actions() + [
        PlannerAction("CallTool", {"tool": "goca_pipeline", "args": {}}),
        PlannerAction("AdvancePhase"),
    ]
    with pytest.raises(UnknownTool):
        drive(ScriptedPlanner(actions), client, registry)


def test_drive_retries_failed_tool(tmp_path):
    registry = make_registry()
    plan = FailurePlan({("extract_frames", 1): "Unicode encoding error"})
    client = make_client(tmp_path, registry, failure_plan=plan)
    actions = plan_actions() + [
        PlannerAction("CallTool",
                      {"tool": "extract_frames",
                       "args": {"trajectory": "md.xtc"}},
                      on_error=(PlannerAction(
                          "RetryWith", {"args": {"encoding": "utf-8"}}),)),
        PlannerAction("AdvancePhase"),
    ]
    outcome = drive(ScriptedPlanner(actions), client, registry)
    assert outcome.status == "Success"
    kinds = [line.split(" ", 2)[1] for line in outcome.log.lines()]
    assert "TOOL_ERROR" in kinds and "RETRY" in kinds
    error_line = next(l for l in outcome.log.lines() if " TOOL_ERROR " in l)
    assert "Unicode encoding error" in error_line


def test_drive_blocks_on_skipped_fetch(tmp_path):
    registry = make_registry()
    client = make_client(tmp_path, registry, fixtures=docking_fixture())
    actions = plan_actions() + [
        PlannerAction("CallTool", {"tool": "run_docking",
                                   "args": {"ligand": "CCO"},
                                   "skip_fetch": True}),
        PlannerAction("AdvancePhase"),
    ]
    with pytest.raises(CheckpointFailed) as err:
        drive(ScriptedPlanner(actions), client, registry)
    assert err.value.kind == "A"
    assert any("not fetched" in v for v in err.value.violations)


def test_drive_blocks_report_on_ledger_mismatch(tmp_path):
    registry = make_registry()
    client = make_client(tmp_path, registry, fixtures=docking_fixture())
    actions = plan_actions() + [
        PlannerAction("CallTool", {"tool": "run_docking",
                                   "args": {"ligand": "CCO"}}),
        PlannerAction("DeclareClaim", {
            "value": -9.9,
            "category": "ToolComputed",
            "source": {"tool": "run_docking"},
            "check": {"source": "last_response",
                      "probe": {"kind": "tool_response", "field": "score"}},
        }),
        PlannerAction("AdvancePhase"),
    ]
    with pytest.raises(CheckpointFailed) as err:
        drive(ScriptedPlanner(actions), client, registry)
    assert err.value.kind == "C"
    assert err.value.table.mismatches()[0].actual == -7.5


def test_drive_abort_mid_run(tmp_path):
    registry = make_registry()
    client = make_client(tmp_path, registry)
    actions = plan_actions() + [PlannerAction("Abort", {"reason": "stuck"})]
    with pytest.raises(PlannerAborted) as err:
        drive(ScriptedPlanner(actions), client, registry)
    assert any(" ABORT " in line for line in err.value.log.lines())


def test_drive_rejects_plan_edits_after_phase0(tmp_path):
    registry = make_registry()
    client = make_client(tmp_path, registry)
    actions = plan_actions() + [
        PlannerAction("SetPlanField", {"field": "task_type",
                                       "value": "design"}),
        PlannerAction("AdvancePhase"),
    ]
    with pytest.raises(GateError):
        drive(ScriptedPlanner(actions), client, registry)


def test_drive_action_budget(tmp_path):
    registry = make_registry()
    client = make_client(tmp_path, registry)
    actions = plan_actions() + [PlannerAction("ListTools")] * 5
    with pytest.raises(GateError):
        drive(ScriptedPlanner(actions), client, registry,
              RunConfig(max_actions=3))


def test_drive_replay_is_identical(tmp_path):
    registry = make_registry()
    outcomes = []
    for attempt in ("first", "second"):
        client = make_client(tmp_path / attempt, registry,
                             fixtures=docking_fixture())
        outcome = drive(ScriptedPlanner(happy_path_actions()), client,
                        registry)
        outcomes.append(outcome)
    assert outcomes[0].log.lines() == outcomes[1].log.lines()


def test_drive_seed_changes_break_replay(tmp_path):
    registry = make_registry()
    lines = []
    for seed in (0, 1):
        client = make_client(tmp_path / str(seed), registry, seed=seed,
                             fixtures=docking_fixture())
        outcome = drive(ScriptedPlanner(happy_path_actions()), client,
                        registry)
        lines.append(outcome.log.lines())
    assert lines[0] != lines[1]


def test_run_log_is_sequenced():
    log = RunLog()
    log.append("PHASE", {"phase": 0})
    log.append("PLAN_FIELD", {"field": "task_type", "value": "screening"})
    assert log.lines()[0].startswith("1 PHASE ")
    assert log.lines()[1].startswith("2 PLAN_FIELD ")
    assert log.render().endswith("\n")


def test_tool_execution_failed_carries_detail():
    err = ToolExecutionFailed("extract_frames", "Unicode encoding error")
    assert err.tool_name == "extract_frames"
    assert "Unicode" in str(err)
