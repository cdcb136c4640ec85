"""Command-line entry point.

One dispatcher covers every module surface: skill-library validation, the
mock tool server, gated runs, residue-numbering tables, benchmark scoring
and statistics, the drug-likeness ceiling, and campaign report skeletons.

Exit status contract: 0 on success, 1 on a domain failure (bad input data,
failed gate, invalid library), 2 on a usage error (unknown subcommand or
flag, malformed flag value). Structured output goes to stdout; diagnostics
go to stderr.

Numeric formatting is pinned per quantity so outputs are byte-stable:
scores get 1 decimal place, probabilities 3, statistics 4.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from gatewright.benchstat import (
    adjust_pvalues,
    cohens_h,
    evaluate_benchmark,
    fisher_exact,
    friedman,
    load_predictions_csv,
    load_truth_csv,
    mann_whitney,
    qed_ceiling,
    wilson_ci,
)
from gatewright.engine import (
    PlannerAborted,
    PlannerAction,
    RunConfig,
    ScriptedPlanner,
    drive,
)
from gatewright.errors import GatewrightError
from gatewright.gates import CheckpointFailed
from gatewright.loop import load_campaign_config
from gatewright.residues import (
    NumberingScheme,
    build_mapping,
    emit_csv,
    extract_sequence,
    lookup,
    parse_query,
)
from gatewright.skills import load_library, validate_library
from gatewright.toollink.client import TcpTransport, ToolClient
from gatewright.toollink.server import (
    MockToolServer,
    load_failure_plan_csv,
    load_fixtures_csv,
    load_registry_toml,
)


class UsageError(Exception):
    """Flag values that parse as text but are semantically malformed."""


def fmt_score(value: float) -> str:
    return f"{value:.1f}"


def fmt_prob(value: float) -> str:
    return f"{value:.3f}"


def fmt_stat(value: float) -> str:
    return f"{value:.4f}"


# ---------------------------------------------------------------------------
# validate-skills


def _cmd_validate_skills(args) -> int:
    docs = load_library(args.directory)
    report = validate_library(docs)
    for tier in ("L1", "L2", "L3"):
        print(f"{tier} {report.counts.get(tier, 0)}")
    for violation in report.violations:
        print(f"VIOLATION {violation.document} {violation.rule} "
              f"{violation.detail}")
    return 0 if report.valid else 1


# ---------------------------------------------------------------------------
# serve-mock


def _cmd_serve_mock(args) -> int:
    descriptors = load_registry_toml(args.registry)
    fixtures = load_fixtures_csv(args.fixtures) if args.fixtures else None
    failures = load_failure_plan_csv(args.failures) if args.failures else None
    mock = MockToolServer(descriptors, seed=args.seed, fixtures=fixtures,
                          failure_plan=failures)
    server = mock.serve_tcp(args.host, args.port)
    host, port = server.server_address[:2]
    print(f"LISTENING {host} {port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


# ---------------------------------------------------------------------------
# run


def _parse_actions(raw) -> list[PlannerAction]:
    if not isinstance(raw, list):
        raise UsageError("planner script must be a JSON list of actions")
    actions = []
    for item in raw:
        if not isinstance(item, dict) or "kind" not in item:
            raise UsageError("each action needs at least a 'kind' key")
        actions.append(PlannerAction(
            kind=item["kind"],
            payload=item.get("payload", {}),
            on_error=tuple(_parse_actions(item.get("on_error", []))),
        ))
    return actions


def _cmd_run(args) -> int:
    docs = load_library(args.skills)
    report = validate_library(docs)
    if not report.valid:
        raise GatewrightError(
            f"skill library has {len(report.violations)} violation(s); "
            f"run validate-skills for details")
    script = json.loads(Path(args.planner).read_text(encoding="utf-8"))
    planner = ScriptedPlanner(_parse_actions(script))

    host, _, port_text = args.server.partition(":")
    if not host or not port_text.isdigit():
        raise UsageError(f"--server expects host:port, got {args.server!r}")
    transport = TcpTransport(host, int(port_text))
    client = ToolClient(transport, downloads_dir=args.downloads)
    try:
        client.authenticate(args.license, args.client_id)
        registry = {d.tool_name: d for d in client.list_tools()}
        outcome = drive(planner, client, registry,
                        RunConfig(downloads_dir=Path(args.downloads)),
                        task=args.task, skills=docs)
    except PlannerAborted as exc:
        for line in exc.log.lines():
            print(line)
        print(f"OUTCOME Aborted reason={exc.reason}")
        print(f"error: planner aborted: {exc.reason}", file=sys.stderr)
        return 1
    except CheckpointFailed as exc:
        for violation in exc.violations:
            print(f"error: {violation}", file=sys.stderr)
        print(f"OUTCOME Blocked gate={exc.kind}")
        return 1
    finally:
        client.close()
    for line in outcome.log.lines():
        print(line)
    print(f"OUTCOME {outcome.status} claims={len(outcome.claims)}")
    return 0


# ---------------------------------------------------------------------------
# map-residues


def _cmd_map_residues(args) -> int:
    pdb_text = Path(args.pdb).read_text(encoding="utf-8")
    token = args.strategy
    if token == "dbref":
        table = build_mapping("dbref", pdb_text=pdb_text, chain=args.chain)
    elif token.startswith("arith:"):
        seq = extract_sequence(pdb_text, args.chain)
        numbers = [n for n, icode in zip(seq.numbers, seq.icodes)
                   if not icode.strip()]
        table = build_mapping(
            token, numbers=numbers, codes=seq.author_codes(),
            scheme_from=NumberingScheme("PdbAuthor", args.chain),
            scheme_to=NumberingScheme("UniProt"))
    elif token == "align":
        if not args.seq_to:
            raise UsageError("--seq-to is required with the align strategy")
        seq = extract_sequence(pdb_text, args.chain)
        table = build_mapping(
            token, seq_from=seq.sequence, seq_to=args.seq_to,
            scheme_from=NumberingScheme("PdbAuthor", args.chain),
            scheme_to=NumberingScheme("UniProt"),
            from_numbers=seq.numbers)
    else:
        raise UsageError(f"unknown strategy {token!r}")

    full = emit_csv(table)
    if args.out:
        Path(args.out).write_text(full, encoding="utf-8")
    if not args.query:
        if not args.out:
            print(full, end="")
        return 0

    direction = "Reverse" if args.reverse else "Forward"
    reference = table.scheme_to if args.reverse else table.scheme_from
    lines = full.splitlines()
    print(lines[0])
    for query in parse_query(args.query):
        result = lookup(table, query, direction=direction,
                        reference_scheme=reference)
        source = query.number if direction == "Forward" else result.number
        prefix = f"{table.scheme_from.kind},{table.scheme_to.kind}," \
                 f"{table.strategy_token},{source},"
        for line in lines[1:]:
            if line.startswith(prefix):
                print(line)
                break
    return 0


# ---------------------------------------------------------------------------
# bench


def _print_metric_report(report) -> None:
    print(f"kind {report.kind}")
    print(f"n_items {report.n_items}")
    for name in ("accuracy", "f1", "hits_at_3", "delta", "success_rate"):
        value = getattr(report, name)
        if value is not None:
            print(f"{name} {fmt_stat(value)}")


def _cmd_bench_score(args) -> int:
    items = load_truth_csv(args.task, args.truth)
    predictions = load_predictions_csv(args.task, args.pred, items)
    _print_metric_report(evaluate_benchmark(items, predictions))
    return 0


def _floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") \
            from exc


def _load_matrix(path: str) -> list[list[float]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(_floats(line))
    return rows


def _print_stat_result(result) -> None:
    print(f"statistic {fmt_stat(result.statistic)}")
    print(f"p_value {fmt_stat(result.p_value)}")
    if result.effect is not None:
        print(f"effect {fmt_stat(result.effect)}")
    if result.ranks is not None:
        for index, rank in enumerate(result.ranks, start=1):
            print(f"rank {index} {fmt_stat(rank)}")


def _cmd_bench_stats(args) -> int:
    op = args.op
    if op == "fisher":
        if None in (args.k1, args.n1, args.k2, args.n2):
            raise UsageError("--op fisher requires --k1 --n1 --k2 --n2")
        _print_stat_result(fisher_exact(args.k1, args.n1, args.k2, args.n2))
    elif op == "wilson":
        if None in (args.k1, args.n1):
            raise UsageError("--op wilson requires --k1 --n1")
        low, high = wilson_ci(args.k1, args.n1, args.confidence)
        print(f"low {fmt_stat(low)}")
        print(f"high {fmt_stat(high)}")
    elif op == "h":
        if None in (args.p1, args.p2):
            raise UsageError("--op h requires --p1 --p2")
        print(f"h {fmt_stat(cohens_h(args.p1, args.p2))}")
    elif op == "friedman":
        if not args.matrix:
            raise UsageError("--op friedman requires --matrix")
        _print_stat_result(friedman(_load_matrix(args.matrix)))
    elif op == "mwu":
        if args.a is None or args.b is None:
            raise UsageError("--op mwu requires --a and --b")
        result = mann_whitney(_floats(args.a), _floats(args.b),
                              args.sidedness)
        _print_stat_result(result)
    elif op == "adjust":
        if args.p is None:
            raise UsageError("--op adjust requires --p")
        for value in adjust_pvalues(_floats(args.p), args.method):
            print(fmt_stat(value))
    return 0


# ---------------------------------------------------------------------------
# qed-ceiling


def _parse_locked(pairs: list[str]) -> dict[str, float]:
    locked = {}
    for pair in pairs:
        label, sep, value = pair.partition("=")
        if not sep or not label:
            raise UsageError(f"--locked expects LABEL=VALUE, got {pair!r}")
        try:
            locked[label] = float(value)
        except ValueError as exc:
            raise UsageError(f"--locked value must be numeric: {pair!r}") \
                from exc
    return locked


def _cmd_qed_ceiling(args) -> int:
    ceiling = qed_ceiling(_parse_locked(args.locked), args.assumed)
    print(fmt_prob(ceiling))
    return 0


# ---------------------------------------------------------------------------
# report


def _read_trajectory(path: str) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        expected = ["round", "smiles", "objective", "tanimoto", "strategy",
                    "outcome"]
        if reader.fieldnames != expected:
            raise GatewrightError(
                f"trajectory header must be {','.join(expected)}")
        return list(reader)


def _fmt_objective(metric: str, text: str) -> str:
    if not text:
        return ""
    value = float(text)
    if metric == "qed" or metric.startswith("prob"):
        return fmt_prob(value)
    return fmt_score(value)


def _render_run_log(rows, metric: str) -> str:
    out = io.StringIO()
    out.write("# Run Log\n")
    for row in rows:
        out.write(f"\n## Round {row['round']} ({row['strategy']})\n\n")
        if row["smiles"]:
            out.write("- Modification hypothesis: TBD\n")
            out.write(f"- Generated molecules: {row['smiles']} [Generator]\n")
            out.write("- Docking results:\n\n")
            out.write(f"| smiles | {metric} | tanimoto |\n")
            out.write("| --- | --- | --- |\n")
            out.write(f"| {row['smiles']} "
                      f"| {_fmt_objective(metric, row['objective'])} "
                      f"| {fmt_prob(float(row['tanimoto']))} |\n\n")
        else:
            out.write("- Modification hypothesis: TBD\n")
            out.write("- Generated molecules: none qualifying\n\n")
        out.write("- SAR summary: TBD\n")
        out.write(f"- Round decision: {row['outcome']}\n")
    return out.getvalue()


def _render_final_report(rows, config, args) -> str:
    success = any(row["outcome"] == "StopSuccess" for row in rows)
    rounds = max(int(row["round"]) for row in rows)
    best = None
    for row in rows:
        if not row["smiles"]:
            continue
        value = float(row["objective"])
        if best is None or (value < best[1]
                            if config.objective_direction == "minimize"
                            else value > best[1]):
            best = (row["smiles"], value)
    met = args.met
    if met is None:
        met = config.required_count if success else "TBD"

    out = io.StringIO()
    out.write("# Final Report\n\n## Locked Parameters\n\n")
    out.write("| parameter | value |\n| --- | --- |\n")
    out.write(f"| center | {args.center or 'TBD'} |\n")
    out.write(f"| box | {args.box or 'TBD'} |\n")
    out.write(f"| engine | {args.engine or 'TBD'} |\n")
    out.write("\n## Modification Map Summary\n\nTBD\n")
    out.write("\n## Optimization Trajectory\n\n")
    out.write("| round | smiles | objective | tanimoto | strategy "
              "| outcome |\n")
    out.write("| --- | --- | --- | --- | --- | --- |\n")
    metric = config.objective_metric
    for row in rows:
        tanimoto = fmt_prob(float(row["tanimoto"])) if row["tanimoto"] else ""
        out.write(f"| {row['round']} | {row['smiles']} "
                  f"| {_fmt_objective(metric, row['objective'])} "
                  f"| {tanimoto} | {row['strategy']} | {row['outcome']} |\n")
    out.write("\n## Global Target Tracker\n\n")
    out.write(f"- required: {config.required_count}\n")
    out.write(f"- target_met_count: {met}\n")
    out.write(f"- rounds_used: {rounds} of {config.max_rounds}\n")
    out.write("\n## SAR Narrative\n\nTBD\n")
    out.write("\n## Conclusion\n\n")
    if best is not None:
        out.write(f"Best molecule: {best[0]} "
                  f"({metric} {_fmt_objective(metric, str(best[1]))})\n\n")
    out.write(f"{'SUCCESS' if success else 'FAILURE'}, rounds={rounds}\n")
    return out.getvalue()


def _cmd_report(args) -> int:
    config = load_campaign_config(args.config)
    rows = _read_trajectory(args.trajectory)
    if not rows:
        raise GatewrightError("trajectory has no rounds")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_log = out_dir / "run_log.md"
    final_report = out_dir / "final_report.md"
    run_log.write_text(_render_run_log(rows, config.objective_metric),
                       encoding="utf-8")
    final_report.write_text(_render_final_report(rows, config, args),
                            encoding="utf-8")
    print(f"WROTE {run_log}")
    print(f"WROTE {final_report}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatewright",
        description="Skill-governed workflow gating toolkit.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate-skills",
                       help="check a skill library directory")
    p.add_argument("directory")
    p.set_defaults(func=_cmd_validate_skills)

    p = sub.add_parser("serve-mock", help="serve the mock tool server")
    p.add_argument("--registry", required=True)
    p.add_argument("--fixtures")
    p.add_argument("--failures")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=_cmd_serve_mock)

    p = sub.add_parser("run", help="drive a scripted, gated run")
    p.add_argument("--skills", required=True)
    p.add_argument("--planner", required=True,
                   help="JSON list of planner actions")
    p.add_argument("--server", required=True, help="host:port")
    p.add_argument("--downloads", default="downloads")
    p.add_argument("--task", default="run")
    p.add_argument("--license", default="open")
    p.add_argument("--client-id", default="gatewright-cli")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("map-residues", help="build a numbering table")
    p.add_argument("--pdb", required=True)
    p.add_argument("--chain", required=True)
    p.add_argument("--strategy", required=True,
                   help="dbref, arith:<offset>, or align")
    p.add_argument("--query")
    p.add_argument("--reverse", action="store_true")
    p.add_argument("--seq-to", help="target sequence for align")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_map_residues)

    bench = sub.add_parser("bench", help="benchmark scoring and statistics")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)

    p = bench_sub.add_parser("score", help="score predictions against truth")
    p.add_argument("--task", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.set_defaults(func=_cmd_bench_score)

    p = bench_sub.add_parser("stats", help="run one statistical operation")
    p.add_argument("--op", required=True,
                   choices=["fisher", "wilson", "h", "friedman", "mwu",
                            "adjust"])
    p.add_argument("--k1", type=int)
    p.add_argument("--n1", type=int)
    p.add_argument("--k2", type=int)
    p.add_argument("--n2", type=int)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--p1", type=float)
    p.add_argument("--p2", type=float)
    p.add_argument("--matrix", help="CSV file of numbers, one row per method")
    p.add_argument("--a", help="comma-separated sample")
    p.add_argument("--b", help="comma-separated sample")
    p.add_argument("--sidedness", default="two-sided",
                   choices=["two-sided", "greater", "less"])
    p.add_argument("--p", help="comma-separated p-values")
    p.add_argument("--method", default="bonferroni",
                   choices=["bonferroni", "bh"])
    p.set_defaults(func=_cmd_bench_stats)

    p = sub.add_parser("qed-ceiling",
                       help="drug-likeness ceiling with locked components")
    p.add_argument("--locked", action="append", default=[],
                   metavar="LABEL=VALUE")
    p.add_argument("--assumed", type=float, default=1.0)
    p.set_defaults(func=_cmd_qed_ceiling)

    p = sub.add_parser("report", help="emit campaign report skeletons")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--met", type=int)
    p.add_argument("--center")
    p.add_argument("--box")
    p.add_argument("--engine")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (GatewrightError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
