"""Operator-facing command line: plan, simulate, oracle, gen, replay.

Exit codes are fixed so harnesses can assert on them:
0 success, 2 parse failure, 3 validation/reference failure,
4 infeasible instance, 5 budget-truncated result without
--allow-partial (or --prove on an unproven result).
The PARASCHED_LOG environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import (
    InfeasibleError,
    ParaschedError,
    ScenarioParseError,
    SizeLimitError,
)
from . import scenario as sio
from .search import (
    ORACLE_MAX_DEVICES,
    ORACLE_MAX_OPS,
    SearchConfig,
    Solution,
    SearchStats,
    branch_and_bound,
    brute_force_oracle,
    replan,
)
from .sim import Assignment, SimPolicy, check_constraints, simulate
from .topo import Topology, apply_events_until, validate_topology
from .graph import validate_workload
from .transform import apply_provenance
from .units import format_ns

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_INFEASIBLE = 4
EXIT_TRUNCATED = 5

log = logging.getLogger("parasched")


def _configure_logging():
    level = os.environ.get("PARASCHED_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _search_overrides(args) -> dict:
    return {
        "workers": args.workers,
        "node_budget": args.node_budget,
        "time_budget_ms": args.time_budget_ms,
        "variant_cap": args.variant_cap,
    }


def _load_scenario(path: str) -> sio.Scenario:
    scn = sio.parse_scenario(path)
    issues = validate_topology(scn.topology) + validate_workload(scn.workload, scn.topology)
    if issues:
        for issue in issues:
            print(f"validation: {issue}", file=sys.stderr)
        raise _Validation(f"{len(issues)} validation issue(s) in {path}")
    return scn


class _Validation(ParaschedError):
    pass


def _write_solution(path: str, sol: Solution, search_cfg: SearchConfig):
    data = sio.solution_to_dict(sol)
    if search_cfg.split_spec is not None:
        data["split_overhead_factor"] = search_cfg.split_spec.overhead_factor
    sio.write_json(path, data)


def cmd_plan(args) -> int:
    scn = _load_scenario(args.scenario)
    cfg = sio.parse_search_config(scn.raw.get("search", {}), _search_overrides(args))
    sol = branch_and_bound(scn.workload, scn.topology, scn.cost_model, cfg)
    out = args.output or _default_out(args.scenario, "solution")
    _write_solution(out, sol, cfg)
    print(f"objective {format_ns(sol.objective)} (weighted), proven={sol.proven}, "
          f"expanded {sol.stats.nodes_expanded}, pruned {sol.stats.nodes_pruned} -> {out}")
    if args.prove and not sol.proven:
        print("result not proven optimal within budgets", file=sys.stderr)
        return EXIT_TRUNCATED
    if not sol.proven and not args.allow_partial:
        print("search budget exhausted; rerun with --allow-partial to accept", file=sys.stderr)
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_simulate(args) -> int:
    scn = _load_scenario(args.scenario)
    op_device, edge_link, _schedule, meta = sio.parse_solution_file(args.solution)
    workload = apply_provenance(scn.workload, meta.get("provenance", ()),
                                float(meta.get("split_overhead_factor", 0.0)))
    known = {o.key for o in workload.all_ops}
    for key in sorted(op_device):
        if key not in known:
            print(f"reference error: solution names unknown operator {key[0]}/{key[1]}",
                  file=sys.stderr)
            return EXIT_VALIDATION
    for key in sorted(edge_link):
        if edge_link[key] not in scn.topology.link_map:
            print(f"reference error: solution names unknown link {edge_link[key]}",
                  file=sys.stderr)
            return EXIT_VALIDATION
    policy = SimPolicy(bandwidth=args.policy)
    assignment = Assignment(op_device, edge_link)
    schedule, timeline = simulate(assignment, workload, scn.topology, scn.cost_model, policy)
    violations = check_constraints(schedule, workload, scn.topology, policy)
    out = args.output or _default_out(args.solution, "timeline")
    sio.write_json(out, sio.timeline_to_dict(timeline, violations))
    if args.gantt:
        sio.write_gantt(args.gantt, schedule)
    print(f"objective {format_ns(timeline.objective)} (weighted), "
          f"{len(violations)} violation(s) -> {out}")
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_VALIDATION if violations else EXIT_OK


def cmd_oracle(args) -> int:
    scn = _load_scenario(args.scenario)
    try:
        sol = brute_force_oracle(scn.workload, scn.topology, scn.cost_model)
    except SizeLimitError as exc:
        print(f"size error: {exc} (limits: {ORACLE_MAX_OPS} ops, "
              f"{ORACLE_MAX_DEVICES} devices)", file=sys.stderr)
        return EXIT_VALIDATION
    out = args.output or _default_out(args.scenario, "oracle")
    _write_solution(out, sol, SearchConfig())
    print(f"oracle objective {format_ns(sol.objective)} (weighted), "
          f"{sol.stats.leaves_enumerated} leaves -> {out}")
    return EXIT_OK


def cmd_gen(args) -> int:
    preset = args.preset
    kwargs = {}
    if preset == "hetero_cluster":
        kwargs = dict(n_fast=args.n_fast, n_slow=args.n_slow, rate_ratio=args.rate_ratio,
                      bandwidth_bytes_per_sec=int(args.bandwidth),
                      num_ops=args.num_ops, flops_per_op=int(args.flops_per_op),
                      seed=args.seed)
    elif preset == "random_dag":
        kwargs = dict(num_ops=args.num_ops, edge_prob=args.edge_prob, seed=args.seed,
                      num_devices=args.num_devices,
                      max_parallel_links=args.max_parallel_links,
                      with_conflict_group=args.conflict_group)
    elif preset == "layered_llm":
        kwargs = dict(num_layers=args.num_layers, flops_per_layer=int(args.flops_per_layer),
                      bytes_per_layer=int(args.bytes_per_layer),
                      sync_payload_bytes=int(args.sync_payload), seed=args.seed)
    data = sio.GENERATORS[preset](**kwargs)
    sio.write_json(args.output, data)
    print(f"wrote {preset} scenario -> {args.output}")
    return EXIT_OK


def cmd_replay(args) -> int:
    scn = _load_scenario(args.scenario)
    op_device, edge_link, _sched, meta = sio.parse_solution_file(args.solution)
    workload = apply_provenance(scn.workload, meta.get("provenance", ()),
                                float(meta.get("split_overhead_factor", 0.0)))
    events_data = sio.read_json(args.events)
    if isinstance(events_data, dict):
        events_data = events_data.get("events", [])
    if not events_data:
        print("event file contains no events", file=sys.stderr)
        return EXIT_VALIDATION
    new_events = [sio._parse_event(e) for e in events_data]
    first = min(new_events, key=lambda ev: ev.at_time_ns)
    t0 = first.at_time_ns

    assignment = Assignment(op_device, edge_link)
    schedule, timeline = simulate(assignment, workload, scn.topology, scn.cost_model)
    partial = sio.Schedule()
    partial.ops = {k: s for k, s in schedule.ops.items() if s.end_ns <= t0}
    partial.transfers = {k: s for k, s in schedule.transfers.items() if s.end_ns <= t0}

    merged = Topology(scn.topology.devices, scn.topology.links,
                      scn.topology.conflict_groups,
                      scn.topology.events + tuple(new_events))
    snapshot = apply_events_until(merged, t0)
    cfg = sio.parse_search_config(scn.raw.get("search", {}), _search_overrides(args))
    prev = Solution(
        assignment=assignment, schedule=schedule, timeline=timeline,
        objective=timeline.objective, variant_index=int(meta.get("variant_index", 0)),
        provenance=tuple(meta.get("provenance", ())), vector=(),
        proven=bool(meta.get("proven", False)), stats=SearchStats(), workload=workload,
    )
    sol = replan(prev, first, partial, workload, snapshot, scn.cost_model, cfg)
    out = args.output or _default_out(args.solution, "replanned")
    _write_solution(out, sol, cfg)
    print(f"replanned objective {format_ns(sol.objective)} (weighted), "
          f"proven={sol.proven} -> {out}")
    return EXIT_OK


def _default_out(base: str, suffix: str) -> str:
    stem, _ext = os.path.splitext(base)
    return f"{stem}.{suffix}.json"


def _add_common_search_flags(p):
    p.add_argument("--workers", type=int, default=None, help="search worker count")
    p.add_argument("--node-budget", type=int, default=None, dest="node_budget")
    p.add_argument("--time-budget-ms", type=int, default=None, dest="time_budget_ms")
    p.add_argument("--variant-cap", type=int, default=None, dest="variant_cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parasched",
        description="Plan and simulate operator graphs on heterogeneous device clusters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="search for a minimum weighted-completion plan")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", default=None)
    _add_common_search_flags(p)
    p.add_argument("--prove", action="store_true", help="fail unless the result is proven optimal")
    p.add_argument("--allow-partial", action="store_true", dest="allow_partial",
                   help="accept budget-truncated results with exit 0")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="re-simulate a solution file against a scenario")
    p.add_argument("scenario")
    p.add_argument("solution")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--policy", choices=["exclusive", "fluid"], default="exclusive")
    p.add_argument("--gantt", default=None, help="write a resource,label,start_ns,end_ns table")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="exhaustive optimum for small instances")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gen", help="emit a generated scenario file")
    p.add_argument("--preset", choices=sorted(sio.GENERATORS), required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-fast", type=int, default=1, dest="n_fast")
    p.add_argument("--n-slow", type=int, default=1, dest="n_slow")
    p.add_argument("--rate-ratio", type=float, default=2.0, dest="rate_ratio")
    p.add_argument("--bandwidth", type=float, default=1e9)
    p.add_argument("--num-ops", type=int, default=4, dest="num_ops")
    p.add_argument("--flops-per-op", type=float, default=4e9, dest="flops_per_op")
    p.add_argument("--edge-prob", type=float, default=0.3, dest="edge_prob")
    p.add_argument("--num-devices", type=int, default=3, dest="num_devices")
    p.add_argument("--max-parallel-links", type=int, default=2, dest="max_parallel_links")
    p.add_argument("--conflict-group", action="store_true", dest="conflict_group")
    p.add_argument("--num-layers", type=int, default=4, dest="num_layers")
    p.add_argument("--flops-per-layer", type=float, default=4e9, dest="flops_per_layer")
    p.add_argument("--bytes-per-layer", type=float, default=64e6, dest="bytes_per_layer")
    p.add_argument("--sync-payload", type=float, default=4e6, dest="sync_payload")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("replay", help="apply an event file and replan the residual workload")
    p.add_argument("scenario")
    p.add_argument("solution")
    p.add_argument("events")
    p.add_argument("-o", "--output", default=None)
    _add_common_search_flags(p)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except _Validation as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SizeLimitError as exc:
        print(f"size error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ParaschedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
