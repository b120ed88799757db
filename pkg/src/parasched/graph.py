"""Per-model computation DAGs with operator resource footprints.

Collective operations (all_reduce, reduce_scatter, all_gather) are
first-class operator nodes so rewrites can replace them; their
mem_bytes field carries the collective payload size and `participants`
the ring fan size.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

from .errors import GraphCycleError, Issue
from .topo import Topology

KIND_COMPUTE = "compute"
KIND_REDUCE_SCATTER = "reduce_scatter"
KIND_ALL_GATHER = "all_gather"
KIND_ALL_REDUCE = "all_reduce"
COLLECTIVE_KINDS = frozenset({KIND_REDUCE_SCATTER, KIND_ALL_GATHER, KIND_ALL_REDUCE})
OPERATOR_KINDS = frozenset({KIND_COMPUTE}) | COLLECTIVE_KINDS

OpKey = tuple[str, str]          # (model_id, operator_id)
EdgeKey = tuple[str, str, str]   # (model_id, src_id, dst_id)


@dataclass(frozen=True)
class Operator:
    id: str
    model_id: str
    kind: str = KIND_COMPUTE
    flops: int = 0
    mem_bytes: int = 0           # global-memory traffic; payload size for collectives
    mem_op: int = 0              # resident execution memory
    pinned_device: str | None = None
    participants: int = 2        # ring fan size, collectives only

    @property
    def key(self) -> OpKey:
        return (self.model_id, self.id)

    @property
    def is_collective(self) -> bool:
        return self.kind in COLLECTIVE_KINDS

    def label(self) -> str:
        return f"{self.model_id}/{self.id}"


def wire_volume(op: Operator) -> Fraction:
    """Per-device ring wire volume of a collective operator, in bytes.

    reduce_scatter / all_gather move (n-1)/n of the payload per device;
    an undecomposed all_reduce moves both phases. Compute ops move 0.
    """
    if not op.is_collective:
        return Fraction(0)
    n = op.participants
    if n < 2:
        return Fraction(0)
    phases = 2 if op.kind == KIND_ALL_REDUCE else 1
    return Fraction(phases * (n - 1) * op.mem_bytes, n)


@dataclass(frozen=True)
class DataEdge:
    src: str
    dst: str
    size_bytes: int = 0          # 0 = pure ordering edge
    mem_data: int | None = None  # defaults to size_bytes

    @property
    def mem_data_bytes(self) -> int:
        return self.size_bytes if self.mem_data is None else self.mem_data


class ComputeGraph:
    """One model's operator DAG. Immutable after construction."""

    def __init__(self, model_id: str, operators, edges=()):
        self.model_id = model_id
        self.operators: tuple[Operator, ...] = tuple(sorted(operators, key=lambda o: o.id))
        self.edges: tuple[DataEdge, ...] = tuple(sorted(edges, key=lambda e: (e.src, e.dst)))

    @cached_property
    def op_map(self) -> dict[str, Operator]:
        return {o.id: o for o in self.operators}

    @cached_property
    def preds(self) -> dict[str, tuple[DataEdge, ...]]:
        acc: dict[str, list[DataEdge]] = {o.id: [] for o in self.operators}
        for e in self.edges:
            if e.dst in acc:
                acc[e.dst].append(e)
        return {k: tuple(v) for k, v in acc.items()}

    @cached_property
    def succs(self) -> dict[str, tuple[DataEdge, ...]]:
        acc: dict[str, list[DataEdge]] = {o.id: [] for o in self.operators}
        for e in self.edges:
            if e.src in acc:
                acc[e.src].append(e)
        return {k: tuple(v) for k, v in acc.items()}

    def __eq__(self, other):
        return (
            isinstance(other, ComputeGraph)
            and self.model_id == other.model_id
            and self.operators == other.operators
            and self.edges == other.edges
        )

    def __hash__(self):
        return hash((self.model_id, self.operators, self.edges))


class Workload:
    """A set of model graphs plus per-model priority weights."""

    def __init__(self, graphs, weights=None):
        self.graphs: tuple[ComputeGraph, ...] = tuple(sorted(graphs, key=lambda g: g.model_id))
        if weights is None:
            weights = {g.model_id: 1.0 for g in self.graphs}
        self.weights: dict[str, float] = dict(weights)

    @cached_property
    def graph_map(self) -> dict[str, ComputeGraph]:
        return {g.model_id: g for g in self.graphs}

    def op(self, key: OpKey) -> Operator:
        return self.graph_map[key[0]].op_map[key[1]]

    @cached_property
    def all_ops(self) -> tuple[Operator, ...]:
        return tuple(o for g in self.graphs for o in g.operators)

    @cached_property
    def all_edges(self) -> tuple[tuple[str, DataEdge], ...]:
        return tuple((g.model_id, e) for g in self.graphs for e in g.edges)


def topo_order(g: ComputeGraph) -> list[Operator]:
    """Topological order with ties broken by operator id.

    Raises GraphCycleError listing the operators left in one strongly
    cyclic remainder when the graph is not a DAG.
    """
    indeg = {o.id: 0 for o in g.operators}
    for e in g.edges:
        if e.dst in indeg and e.src in indeg:
            indeg[e.dst] += 1
    ready = [oid for oid, d in sorted(indeg.items()) if d == 0]
    heapq.heapify(ready)
    out: list[Operator] = []
    while ready:
        oid = heapq.heappop(ready)
        out.append(g.op_map[oid])
        for e in g.succs.get(oid, ()):
            if e.src != oid or e.dst not in indeg:
                continue
            indeg[e.dst] -= 1
            if indeg[e.dst] == 0:
                heapq.heappush(ready, e.dst)
    if len(out) != len(g.operators):
        leftover = sorted(oid for oid, d in indeg.items() if d > 0)
        raise GraphCycleError(leftover)
    return out


def global_order(w: Workload) -> list[OpKey]:
    """One fixed topological order over every model, interleaved by op id."""
    indeg: dict[OpKey, int] = {o.key: 0 for o in w.all_ops}
    succs: dict[OpKey, list[OpKey]] = {o.key: [] for o in w.all_ops}
    for model_id, e in w.all_edges:
        s, d = (model_id, e.src), (model_id, e.dst)
        if s in indeg and d in indeg:
            indeg[d] += 1
            succs[s].append(d)
    ready = [(oid, mid) for (mid, oid), deg in indeg.items() if deg == 0]
    heapq.heapify(ready)
    out: list[OpKey] = []
    while ready:
        oid, mid = heapq.heappop(ready)
        out.append((mid, oid))
        for nxt in succs[(mid, oid)]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(ready, (nxt[1], nxt[0]))
    if len(out) != len(indeg):
        leftover = sorted(f"{m}/{o}" for (m, o), d in indeg.items() if d > 0)
        raise GraphCycleError(leftover)
    return out


def validate_workload(w: Workload, t: Topology) -> list[Issue]:
    """Report-style validation of a workload against a topology."""
    issues: list[Issue] = []
    max_cap = max((d.mem_capacity for d in t.devices), default=0)
    seen_models: set[str] = set()
    for g in w.graphs:
        if g.model_id in seen_models:
            issues.append(Issue("duplicate_id", g.model_id, "duplicate model id"))
        seen_models.add(g.model_id)
        issues.extend(_validate_graph(g, t, max_cap))
        weight = w.weights.get(g.model_id)
        if weight is None:
            issues.append(Issue("missing_weight", g.model_id, "model has no weight"))
        elif weight <= 0:
            issues.append(Issue("nonpositive", g.model_id, f"weight must be > 0, got {weight}"))
    return issues


def _validate_graph(g: ComputeGraph, t: Topology, max_cap: int) -> list[Issue]:
    issues: list[Issue] = []
    seen: set[str] = set()
    for o in g.operators:
        if o.id in seen:
            issues.append(Issue("duplicate_id", o.label(), "duplicate operator id"))
        seen.add(o.id)
        if o.kind not in OPERATOR_KINDS:
            issues.append(Issue("bad_kind", o.label(), f"unknown operator kind {o.kind}"))
        if o.flops < 0:
            issues.append(Issue("nonpositive", o.label(), f"flops must be >= 0, got {o.flops}"))
        if o.kind == KIND_COMPUTE and o.flops > 0 and o.mem_bytes <= 0:
            issues.append(Issue("nonpositive", o.label(), "compute operator needs mem_bytes > 0"))
        if o.is_collective and o.participants < 2:
            issues.append(Issue("bad_participants", o.label(), "collective needs participants >= 2"))
        if o.mem_op < 0:
            issues.append(Issue("nonpositive", o.label(), f"mem_op must be >= 0, got {o.mem_op}"))
        if o.mem_op > max_cap:
            issues.append(Issue(
                "infeasible_memory", o.label(),
                f"mem_op {o.mem_op} exceeds every device capacity (max {max_cap})",
            ))
        if o.pinned_device is not None and o.pinned_device not in t.device_map:
            issues.append(Issue("dangling_ref", o.label(), f"pinned device {o.pinned_device} not in topology"))
    for e in g.edges:
        subject = f"{g.model_id}/{e.src}->{e.dst}"
        if e.src == e.dst:
            issues.append(Issue("self_loop", subject, "edge loops on one operator"))
        for end in (e.src, e.dst):
            if end not in g.op_map:
                issues.append(Issue("dangling_ref", subject, f"edge endpoint {end} missing"))
        if e.size_bytes < 0:
            issues.append(Issue("nonpositive", subject, f"size_bytes must be >= 0, got {e.size_bytes}"))
    try:
        topo_order(g)
    except GraphCycleError as exc:
        issues.append(Issue("cycle", g.model_id, str(exc)))
    return issues
