"""Scenario, solution, and timeline files plus scenario generators.

All files are canonical JSON (sorted keys, two-space indent, trailing
newline) so that emit -> parse -> re-emit is byte-stable and repeated
runs produce identical artifacts. Numeric fields carry explicit units
in their names (`*_bytes_per_sec`, `*_ns`).
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass

from .cost import MODE_ROOFLINE, MODE_TABLE, CostModel, ProfileTable
from .errors import ScenarioParseError
from .graph import (
    KIND_ALL_REDUCE,
    KIND_COMPUTE,
    ComputeGraph,
    DataEdge,
    Operator,
    Workload,
)
from .search import SearchConfig, Solution
from .sim import Schedule, OpSlot, Timeline, TransferSlot
from .topo import (
    ConflictGroup,
    Device,
    LinkEdge,
    Topology,
    TopologyEvent,
    bandwidth_change,
    node_fail,
    node_join,
)
from .transform import SplitSpec

SOLUTION_FORMAT = "parasched-solution-v1"
TIMELINE_FORMAT = "parasched-timeline-v1"


@dataclass
class Scenario:
    topology: Topology
    workload: Workload
    cost_model: CostModel
    search: SearchConfig
    raw: dict


def dumps_canonical(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def write_json(path: str, data) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_canonical(data))


def read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ScenarioParseError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"malformed JSON in {path}: {exc}") from exc


# ------------------------------------------------------------- parsing


def _require(data: dict, section: str, where: str):
    if section not in data:
        raise ScenarioParseError(f"{where} is missing required section `{section}`")
    return data[section]


def parse_scenario(path: str) -> Scenario:
    data = read_json(path)
    return scenario_from_dict(data, base_dir=os.path.dirname(path), where=path)


def scenario_from_dict(data, base_dir: str = "", where: str = "scenario") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioParseError(f"{where} must contain a JSON object")
    topo_data = _require(data, "topology", where)
    _require(topo_data, "devices", f"{where} topology")
    workload_data = _require(data, "workload", where)
    topology = _parse_topology(topo_data, data.get("events", ()))
    workload = _parse_workload(workload_data)
    cost_model = _parse_cost_model(data.get("cost_model", {}), base_dir)
    search = parse_search_config(data.get("search", {}))
    return Scenario(topology, workload, cost_model, search, data)


def _parse_topology(data: dict, extra_events=()) -> Topology:
    devices = [_parse_device(d) for d in data.get("devices", ())]
    links = [_parse_link(l) for l in data.get("links", ())]
    groups = [
        ConflictGroup(g["id"], frozenset(g["member_links"]))
        for g in data.get("conflict_groups", ())
    ]
    events = [_parse_event(e) for e in data.get("events", ())]
    events += [_parse_event(e) for e in extra_events]
    return Topology(tuple(devices), tuple(links), tuple(groups), tuple(events))


def _parse_device(d: dict) -> Device:
    try:
        return Device(
            id=d["id"],
            peak_flops=int(d["peak_flops"]),
            peak_mem_bw=int(d["peak_mem_bw_bytes_per_sec"]),
            mem_capacity=int(d["mem_capacity_bytes"]),
            alive=bool(d.get("alive", True)),
            kind=d.get("kind", ""),
        )
    except KeyError as exc:
        raise ScenarioParseError(f"device entry {d.get('id', d)} missing field {exc}") from exc


def _parse_link(l: dict) -> LinkEdge:
    try:
        return LinkEdge(
            id=l["id"],
            src=l["src"],
            dst=l["dst"],
            bandwidth=int(l["bandwidth_bytes_per_sec"]),
            latency_ns=int(l.get("latency_ns", 0)),
            conflict_group=l.get("conflict_group"),
            bidirectional=bool(l.get("bidirectional", True)),
        )
    except KeyError as exc:
        raise ScenarioParseError(f"link entry {l.get('id', l)} missing field {exc}") from exc


def _parse_event(e: dict) -> TopologyEvent:
    kind = e.get("kind")
    at = int(e.get("at_time_ns", 0))
    if kind == "bandwidth_change":
        return bandwidth_change(at, e["link"], int(e["bandwidth_bytes_per_sec"]))
    if kind == "node_fail":
        return node_fail(at, e["device"])
    if kind == "node_join":
        dev = _parse_device(e["device"])
        links = tuple(_parse_link(l) for l in e.get("links", ()))
        return node_join(at, dev, links)
    raise ScenarioParseError(f"unknown event kind: {kind!r}")


def _parse_workload(data: dict) -> Workload:
    models = _require(data, "models", "workload section")
    graphs = []
    weights = {}
    for m in models:
        model_id = m["id"]
        weights[model_id] = float(m.get("weight", 1.0))
        if "layered" in m:
            ops, edges = layered_stack(model_id, **m["layered"])
        else:
            ops = [_parse_operator(model_id, o) for o in m.get("operators", ())]
            edges = [_parse_edge(e) for e in m.get("edges", ())]
        graphs.append(ComputeGraph(model_id, ops, edges))
    return Workload(graphs, weights)


def _parse_operator(model_id: str, o: dict) -> Operator:
    return Operator(
        id=o["id"],
        model_id=model_id,
        kind=o.get("kind", KIND_COMPUTE),
        flops=int(o.get("flops", 0)),
        mem_bytes=int(o.get("mem_bytes", 0)),
        mem_op=int(o.get("mem_op_bytes", 0)),
        pinned_device=o.get("pinned_device"),
        participants=int(o.get("participants", 2)),
    )


def _parse_edge(e: dict) -> DataEdge:
    mem_data = e.get("mem_data_bytes")
    return DataEdge(
        src=e["from"],
        dst=e["to"],
        size_bytes=int(e.get("size_bytes", 0)),
        mem_data=None if mem_data is None else int(mem_data),
    )


def _parse_cost_model(data: dict, base_dir: str) -> CostModel:
    mode = data.get("mode", MODE_ROOFLINE)
    table = None
    path = data.get("profile_table_path")
    if path:
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        table = ProfileTable.load(path)
        if mode == MODE_ROOFLINE:
            mode = MODE_TABLE
    return CostModel(mode=mode, table=table, efficiency=float(data.get("efficiency", 1.0)))


def parse_search_config(data: dict, overrides: dict | None = None) -> SearchConfig:
    merged = dict(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    split_spec = None
    counts = merged.get("allowed_counts")
    max_splits = merged.get("max_splits")
    if counts or (max_splits or 1) > 1:
        max_splits = int(max_splits or max(counts))
        counts = tuple(int(c) for c in (counts or range(1, max_splits + 1)))
        split_spec = SplitSpec(
            max_splits=max_splits,
            allowed_counts=counts,
            overhead_factor=float(merged.get("overhead_factor", 0.0)),
        )
    return SearchConfig(
        workers=int(merged.get("workers", 1)),
        node_budget=int(merged.get("node_budget", 500_000)),
        time_budget_ms=(None if merged.get("time_budget_ms") is None
                        else int(merged["time_budget_ms"])),
        variant_cap=int(merged.get("variant_cap", 16)),
        split_spec=split_spec,
        rewrite_collectives=bool(merged.get("rewrite_collectives", True)),
        rewrite_fusions=bool(merged.get("rewrite_fusions", True)),
    )


# ------------------------------------------------------------- emission


def device_to_dict(d: Device) -> dict:
    return {
        "id": d.id,
        "kind": d.kind,
        "peak_flops": d.peak_flops,
        "peak_mem_bw_bytes_per_sec": d.peak_mem_bw,
        "mem_capacity_bytes": d.mem_capacity,
        "alive": d.alive,
    }


def link_to_dict(l: LinkEdge) -> dict:
    return {
        "id": l.id,
        "src": l.src,
        "dst": l.dst,
        "bandwidth_bytes_per_sec": l.bandwidth,
        "latency_ns": l.latency_ns,
        "conflict_group": l.conflict_group,
        "bidirectional": l.bidirectional,
    }


def event_to_dict(ev: TopologyEvent) -> dict:
    out = {"at_time_ns": ev.at_time_ns, "kind": ev.kind}
    if ev.kind == "bandwidth_change":
        out["link"] = ev.link_id
        out["bandwidth_bytes_per_sec"] = ev.bandwidth
    elif ev.kind == "node_fail":
        out["device"] = ev.device_id
    else:
        out["device"] = device_to_dict(ev.device)
        out["links"] = [link_to_dict(l) for l in ev.links]
    return out


def scenario_to_dict(topology: Topology, workload: Workload,
                     cost_model: dict | None = None, search: dict | None = None) -> dict:
    models = []
    for g in workload.graphs:
        models.append({
            "id": g.model_id,
            "weight": workload.weights[g.model_id],
            "operators": [
                {
                    "id": o.id,
                    "kind": o.kind,
                    "flops": o.flops,
                    "mem_bytes": o.mem_bytes,
                    "mem_op_bytes": o.mem_op,
                    "pinned_device": o.pinned_device,
                    "participants": o.participants,
                }
                for o in g.operators
            ],
            "edges": [
                {
                    "from": e.src,
                    "to": e.dst,
                    "size_bytes": e.size_bytes,
                    "mem_data_bytes": e.mem_data,
                }
                for e in g.edges
            ],
        })
    return {
        "topology": {
            "devices": [device_to_dict(d) for d in topology.devices],
            "links": [link_to_dict(l) for l in topology.links],
            "conflict_groups": [
                {"id": g.id, "member_links": sorted(g.member_links)}
                for g in topology.conflict_groups
            ],
        },
        "events": [event_to_dict(ev) for ev in topology.events],
        "workload": {"models": models},
        "cost_model": cost_model or {"mode": MODE_ROOFLINE, "efficiency": 1.0},
        "search": search or {},
    }


def solution_to_dict(sol: Solution) -> dict:
    return {
        "format": SOLUTION_FORMAT,
        "objective_weighted_ns": sol.objective,
        "per_model_completion_ns": dict(sorted(sol.timeline.completions.items())),
        "variant_index": sol.variant_index,
        "provenance": list(sol.provenance),
        "proven": sol.proven,
        "assignment": {f"{k[0]}/{k[1]}": dev for k, dev in sorted(sol.assignment.op_device.items())},
        "links": {f"{k[0]}/{k[1]}->{k[2]}": lid for k, lid in sorted(sol.assignment.edge_link.items())},
        "schedule": schedule_to_dict(sol.schedule),
        "stats": {
            "nodes_expanded": sol.stats.nodes_expanded,
            "nodes_pruned": sol.stats.nodes_pruned,
            "incumbent_updates": sol.stats.incumbent_updates,
            "variants_total": sol.stats.variants_total,
            "variants_truncated": sol.stats.variants_truncated,
            "leaves_enumerated": sol.stats.leaves_enumerated,
        },
    }


def schedule_to_dict(s: Schedule) -> dict:
    return {
        "ops": [
            {"model": k[0], "op": k[1], "device": slot.device,
             "start_ns": slot.start_ns, "end_ns": slot.end_ns}
            for k, slot in sorted(s.ops.items())
        ],
        "transfers": [
            {"model": k[0], "from": k[1], "to": k[2], "link": slot.link,
             "start_ns": slot.start_ns, "end_ns": slot.end_ns}
            for k, slot in sorted(s.transfers.items())
        ],
    }


def schedule_from_dict(data: dict) -> Schedule:
    s = Schedule()
    for row in data.get("ops", ()):
        s.ops[(row["model"], row["op"])] = OpSlot(row["device"], int(row["start_ns"]), int(row["end_ns"]))
    for row in data.get("transfers", ()):
        s.transfers[(row["model"], row["from"], row["to"])] = TransferSlot(
            row["link"], int(row["start_ns"]), int(row["end_ns"]))
    return s


def parse_solution_file(path: str):
    """Returns (assignment maps, schedule, provenance, meta dict)."""
    data = read_json(path)
    if data.get("format") != SOLUTION_FORMAT:
        raise ScenarioParseError(f"{path} is not a {SOLUTION_FORMAT} file")
    op_device = {}
    for label, dev in data.get("assignment", {}).items():
        model, op = label.split("/", 1)
        op_device[(model, op)] = dev
    edge_link = {}
    for label, lid in data.get("links", {}).items():
        model, rest = label.split("/", 1)
        src, dst = rest.split("->", 1)
        edge_link[(model, src, dst)] = lid
    schedule = schedule_from_dict(data.get("schedule", {}))
    return op_device, edge_link, schedule, data


def timeline_to_dict(tl: Timeline, violations=()) -> dict:
    return {
        "format": TIMELINE_FORMAT,
        "objective_weighted_ns": tl.objective,
        "per_model_completion_ns": dict(sorted(tl.completions.items())),
        "log": [[t, kind, subject] for t, kind, subject in tl.log],
        "violations": [
            {"kind": v.kind, "subjects": list(v.subjects), "time_ns": v.time_ns,
             "measured": v.measured, "limit": v.limit}
            for v in violations
        ],
    }


def gantt_rows(s: Schedule) -> list[tuple[str, str, int, int]]:
    """Flat `resource, label, start_ns, end_ns` table for plotting."""
    rows = [
        (slot.device, f"{k[0]}/{k[1]}", slot.start_ns, slot.end_ns)
        for k, slot in sorted(s.ops.items())
    ]
    rows += [
        (slot.link, f"{k[0]}/{k[1]}->{k[2]}", slot.start_ns, slot.end_ns)
        for k, slot in sorted(s.transfers.items())
    ]
    rows.sort(key=lambda r: (r[0], r[2], r[1]))
    return rows


def write_gantt(path: str, s: Schedule) -> None:
    with open(path, "w") as fh:
        fh.write("resource,label,start_ns,end_ns\n")
        for resource, label, start, end in gantt_rows(s):
            fh.write(f"{resource},{label},{start},{end}\n")


# ------------------------------------------------------------- generators


DEFAULT_MEM_BW = 10**12
DEFAULT_CAPACITY = 64 << 30


def layered_stack(model_id: str, num_layers: int, flops_per_layer: int = 4_000_000_000,
                  bytes_per_layer: int = 64_000_000, sync_payload_bytes: int = 4_000_000):
    """Forward/backward/grad-sync operator stack for one model."""
    if num_layers < 1:
        raise ScenarioParseError("layered stack needs num_layers >= 1")
    flops_per_layer = int(flops_per_layer)
    bytes_per_layer = int(bytes_per_layer)
    sync_payload_bytes = int(sync_payload_bytes)
    ops = []
    edges = []
    mem = max(1, flops_per_layer // 1000)
    for i in range(num_layers):
        ops.append(Operator(f"fwd{i:02d}", model_id, KIND_COMPUTE,
                            flops=flops_per_layer, mem_bytes=mem, mem_op=bytes_per_layer))
        ops.append(Operator(f"bwd{i:02d}", model_id, KIND_COMPUTE,
                            flops=2 * flops_per_layer, mem_bytes=2 * mem, mem_op=bytes_per_layer))
        ops.append(Operator(f"syn{i:02d}", model_id, KIND_ALL_REDUCE,
                            mem_bytes=sync_payload_bytes, participants=2))
        if i > 0:
            edges.append(DataEdge(f"fwd{i - 1:02d}", f"fwd{i:02d}", bytes_per_layer))
            edges.append(DataEdge(f"bwd{i:02d}", f"bwd{i - 1:02d}", bytes_per_layer))
        edges.append(DataEdge(f"bwd{i:02d}", f"syn{i:02d}", 0))
    edges.append(DataEdge(f"fwd{num_layers - 1:02d}", f"bwd{num_layers - 1:02d}", bytes_per_layer))
    return ops, edges


def gen_hetero_cluster(n_fast: int = 1, n_slow: int = 1, rate_ratio: float = 2.0,
                       bandwidth_bytes_per_sec: int = 1_000_000_000,
                       num_ops: int = 4, flops_per_op: int = 4_000_000_000,
                       slow_peak_flops: int = 2_000_000_000, seed: int = 0) -> dict:
    """Two device classes whose compute-bound rates differ by rate_ratio,
    plus a divisible independent-operator workload."""
    if n_fast < 1 or n_slow < 1 or rate_ratio < 1 or num_ops < 1:
        raise ScenarioParseError("hetero_cluster needs n_fast, n_slow, num_ops >= 1 and ratio >= 1")
    fast_peak = int(round(slow_peak_flops * rate_ratio))
    devices = [
        Device(f"fast{i}", fast_peak, DEFAULT_MEM_BW, DEFAULT_CAPACITY, kind="fast")
        for i in range(n_fast)
    ] + [
        Device(f"slow{i}", slow_peak_flops, DEFAULT_MEM_BW, DEFAULT_CAPACITY, kind="slow")
        for i in range(n_slow)
    ]
    names = [d.id for d in devices]
    links = [
        LinkEdge(f"l{i:02d}", names[i], names[i + 1], int(bandwidth_bytes_per_sec))
        for i in range(len(names) - 1)
    ]
    if len(names) > 2:
        links.append(LinkEdge(f"l{len(names) - 1:02d}", names[-1], names[0],
                              int(bandwidth_bytes_per_sec)))
    flops_per_op = int(flops_per_op)
    ops = [
        Operator(f"op{i:02d}", "m0", KIND_COMPUTE, flops=flops_per_op,
                 mem_bytes=max(1, flops_per_op // 1000), mem_op=1 << 20)
        for i in range(num_ops)
    ]
    topo = Topology(tuple(devices), tuple(links))
    wl = Workload([ComputeGraph("m0", ops, [])], {"m0": 1.0})
    return scenario_to_dict(topo, wl)


def gen_random_dag(num_ops: int = 6, edge_prob: float = 0.3, seed: int = 0,
                   num_devices: int = 3, max_parallel_links: int = 2,
                   with_conflict_group: bool = False) -> dict:
    """Seeded random DAG workload on a small random heterogeneous cluster."""
    if num_ops < 1 or num_devices < 1:
        raise ScenarioParseError("random_dag needs num_ops and num_devices >= 1")
    rng = random.Random(seed)
    devices = [
        Device(
            f"d{i}",
            peak_flops=rng.choice([2, 4, 8]) * 10**9,
            peak_mem_bw=DEFAULT_MEM_BW,
            mem_capacity=DEFAULT_CAPACITY,
        )
        for i in range(num_devices)
    ]
    links = []
    lid = 0
    for i in range(num_devices):
        for j in range(i + 1, num_devices):
            parallel = rng.randint(1, max_parallel_links)
            if with_conflict_group and i == 0 and j == 1:
                parallel = max(parallel, 2)
            for p in range(parallel):
                group = None
                if with_conflict_group and i == 0 and j == 1:
                    group = "g0"
                links.append(LinkEdge(
                    f"l{lid:02d}", f"d{i}", f"d{j}",
                    bandwidth=rng.choice([1, 2, 4, 8]) * 10**9,
                    latency_ns=rng.choice([0, 1000, 10_000]),
                    conflict_group=group,
                ))
                lid += 1
    ops = [
        Operator(
            f"op{i:02d}", "m0", KIND_COMPUTE,
            flops=rng.randint(1, 8) * 10**9,
            mem_bytes=rng.randint(1, 64) * 10**6,
            mem_op=rng.randint(1, 64) * 10**6,
        )
        for i in range(num_ops)
    ]
    edges = []
    for i in range(num_ops):
        for j in range(i + 1, num_ops):
            if rng.random() < edge_prob:
                edges.append(DataEdge(f"op{i:02d}", f"op{j:02d}",
                                      rng.randint(1, 64) * 10**6))
    topo = Topology(tuple(devices), tuple(links))
    wl = Workload([ComputeGraph("m0", ops, edges)], {"m0": 1.0})
    return scenario_to_dict(topo, wl)


def gen_layered_llm(num_layers: int = 4, flops_per_layer: int = 4_000_000_000,
                    bytes_per_layer: int = 64_000_000, sync_payload_bytes: int = 4_000_000,
                    seed: int = 0) -> dict:
    """Transformer-like stack on a two-class device pair."""
    ops, edges = layered_stack("m0", num_layers, flops_per_layer,
                               bytes_per_layer, sync_payload_bytes)
    devices = (
        Device("fast0", 4_000_000_000, DEFAULT_MEM_BW, DEFAULT_CAPACITY, kind="fast"),
        Device("slow0", 2_000_000_000, DEFAULT_MEM_BW, DEFAULT_CAPACITY, kind="slow"),
    )
    links = (LinkEdge("l00", "fast0", "slow0", 8_000_000_000),)
    topo = Topology(devices, links)
    wl = Workload([ComputeGraph("m0", ops, edges)], {"m0": 1.0})
    return scenario_to_dict(topo, wl)


GENERATORS = {
    "hetero_cluster": gen_hetero_cluster,
    "random_dag": gen_random_dag,
    "layered_llm": gen_layered_llm,
}
