"""Graph rewrites that enlarge the plan search space.

Three rewrite families: splitting a compute operator into k equal
sub-operators (data-parallel style, enabling proportional placement
across unequal devices), fusing single-in/single-out producer-consumer
chains (eliminating the intermediate's global-memory write+read), and
decomposing an all_reduce into reduce_scatter followed by all_gather
with ring-schedule wire volumes.

All rewrites are pure: they return new graphs and never mutate inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

from .errors import RewriteError
from .graph import (
    KIND_ALL_GATHER,
    KIND_ALL_REDUCE,
    KIND_COMPUTE,
    KIND_REDUCE_SCATTER,
    ComputeGraph,
    DataEdge,
    Operator,
    Workload,
    validate_workload,
)
from .topo import Topology

# Full enumeration stops counting beyond this many variants.
ENUMERATION_CEILING = 100_000


@dataclass(frozen=True)
class SplitSpec:
    """Bounds on per-operator splitting."""

    max_splits: int = 1
    allowed_counts: tuple[int, ...] = (1,)
    overhead_factor: float = 0.0

    def __post_init__(self):
        if self.max_splits < 1:
            raise RewriteError(f"max_splits must be >= 1, got {self.max_splits}")
        counts = tuple(sorted(set(self.allowed_counts)))
        if not counts:
            raise RewriteError("allowed_counts must not be empty")
        if any(c < 1 or c > self.max_splits for c in counts):
            raise RewriteError(f"allowed_counts {counts} outside 1..{self.max_splits}")
        if self.overhead_factor < 0:
            raise RewriteError("overhead_factor must be >= 0")
        object.__setattr__(self, "allowed_counts", counts)


@dataclass
class Variant:
    graph: ComputeGraph
    tags: tuple[str, ...]


@dataclass
class VariantSet:
    base_model_id: str
    variants: list[Variant] = field(default_factory=list)
    total_enumerated: int = 0
    truncated: bool = False


def split_even(total: int, k: int) -> list[int]:
    """k parts summing exactly to total; earlier parts take the remainder."""
    base, rem = divmod(total, k)
    return [base + 1 if i < rem else base for i in range(k)]


def split_operator(g: ComputeGraph, op_id: str, k: int, overhead_factor: float = 0.0) -> ComputeGraph:
    """Replace one compute operator by k equal sub-operators.

    Every incoming and outgoing edge fans out into k edges of size/k,
    so totals (flops, mem_bytes, edge bytes) are conserved exactly when
    overhead_factor is 0. k=1 is the identity.
    """
    op = g.op_map.get(op_id)
    if op is None:
        raise RewriteError(f"split target {op_id} not in graph {g.model_id}")
    if op.kind != KIND_COMPUTE:
        raise RewriteError(f"cannot split collective operator {op_id}")
    if k < 1:
        raise RewriteError(f"split count must be >= 1, got {k}")
    if k == 1:
        return g
    flops_parts = split_even(op.flops, k)
    mem_parts = split_even(op.mem_bytes, k)
    mem_op_parts = split_even(op.mem_op, k)
    overhead = math.ceil(op.mem_op * overhead_factor) if overhead_factor else 0
    parts = [
        Operator(
            id=f"{op_id}#p{i}",
            model_id=op.model_id,
            kind=KIND_COMPUTE,
            flops=flops_parts[i],
            mem_bytes=mem_parts[i],
            mem_op=mem_op_parts[i] + overhead,
            pinned_device=op.pinned_device,
        )
        for i in range(k)
    ]
    new_ops = [o for o in g.operators if o.id != op_id] + parts
    new_edges: list[DataEdge] = []
    for e in g.edges:
        if e.src != op_id and e.dst != op_id:
            new_edges.append(e)
            continue
        sizes = split_even(e.size_bytes, k)
        mems = None if e.mem_data is None else split_even(e.mem_data, k)
        for i in range(k):
            mem_i = None if mems is None else mems[i]
            if e.dst == op_id:
                new_edges.append(DataEdge(e.src, parts[i].id, sizes[i], mem_i))
            else:
                new_edges.append(DataEdge(parts[i].id, e.dst, sizes[i], mem_i))
    return ComputeGraph(g.model_id, new_ops, new_edges)


def fuse_pair(g: ComputeGraph, u_id: str, v_id: str) -> ComputeGraph:
    """Fuse a producer-consumer pair into one operator.

    Requires u's only successor to be v and v's only predecessor to be
    u, both compute kind. The intermediate's write+read traffic is
    eliminated from mem_bytes, floored at the larger operand.
    """
    u, v = g.op_map.get(u_id), g.op_map.get(v_id)
    if u is None or v is None:
        raise RewriteError(f"fusion pair {u_id},{v_id} not in graph {g.model_id}")
    if u.kind != KIND_COMPUTE or v.kind != KIND_COMPUTE:
        raise RewriteError(f"fusion requires compute operators: {u_id},{v_id}")
    link = [e for e in g.edges if e.src == u_id and e.dst == v_id]
    if not link:
        raise RewriteError(f"no edge {u_id}->{v_id} to fuse along")
    u_succ = [e.dst for e in g.succs[u_id]]
    v_pred = [e.src for e in g.preds[v_id]]
    if u_succ != [v_id]:
        raise RewriteError(f"{u_id} fans out to {sorted(set(u_succ))}, cannot fuse")
    if v_pred != [u_id]:
        raise RewriteError(f"{v_id} fans in from {sorted(set(v_pred))}, cannot fuse")
    eliminated = 2 * link[0].size_bytes
    fused = Operator(
        id=f"{u_id}+{v_id}",
        model_id=g.model_id,
        kind=KIND_COMPUTE,
        flops=u.flops + v.flops,
        mem_bytes=max(u.mem_bytes + v.mem_bytes - eliminated, max(u.mem_bytes, v.mem_bytes)),
        mem_op=max(u.mem_op, v.mem_op),
        pinned_device=u.pinned_device or v.pinned_device,
    )
    new_ops = [o for o in g.operators if o.id not in (u_id, v_id)] + [fused]
    new_edges = []
    for e in g.edges:
        if e.src == u_id and e.dst == v_id:
            continue
        src = fused.id if e.src in (u_id, v_id) else e.src
        dst = fused.id if e.dst in (u_id, v_id) else e.dst
        new_edges.append(DataEdge(src, dst, e.size_bytes, e.mem_data))
    return ComputeGraph(g.model_id, new_ops, new_edges)


def decompose_allreduce(g: ComputeGraph, op_id: str, participants: int) -> ComputeGraph:
    """Rewrite one all_reduce into reduce_scatter then all_gather.

    Each phase carries the full payload with a ring schedule, so its
    per-device wire volume is (n-1)/n of the payload.
    """
    op = g.op_map.get(op_id)
    if op is None:
        raise RewriteError(f"decompose target {op_id} not in graph {g.model_id}")
    if op.kind != KIND_ALL_REDUCE:
        raise RewriteError(f"decompose target {op_id} has kind {op.kind}, expected {KIND_ALL_REDUCE}")
    if participants < 2:
        raise RewriteError(f"decomposition needs >= 2 participants, got {participants}")
    rs = Operator(
        id=f"{op_id}.rs", model_id=op.model_id, kind=KIND_REDUCE_SCATTER,
        mem_bytes=op.mem_bytes, mem_op=op.mem_op, participants=participants,
        pinned_device=op.pinned_device,
    )
    ag = Operator(
        id=f"{op_id}.ag", model_id=op.model_id, kind=KIND_ALL_GATHER,
        mem_bytes=op.mem_bytes, mem_op=op.mem_op, participants=participants,
        pinned_device=op.pinned_device,
    )
    new_ops = [o for o in g.operators if o.id != op_id] + [rs, ag]
    new_edges = [DataEdge(rs.id, ag.id, 0)]
    for e in g.edges:
        if e.dst == op_id:
            new_edges.append(DataEdge(e.src, rs.id, e.size_bytes, e.mem_data))
        elif e.src == op_id:
            new_edges.append(DataEdge(ag.id, e.dst, e.size_bytes, e.mem_data))
        else:
            new_edges.append(e)
    return ComputeGraph(g.model_id, new_ops, new_edges)


def eligible_fusions(g: ComputeGraph) -> list[tuple[str, str]]:
    """Single-out/single-in compute pairs, in id order."""
    pairs = []
    for u in g.operators:
        if u.kind != KIND_COMPUTE:
            continue
        succ = g.succs[u.id]
        if len(succ) != 1:
            continue
        v = g.op_map.get(succ[0].dst)
        if v is None or v.kind != KIND_COMPUTE:
            continue
        if len(g.preds[v.id]) == 1:
            pairs.append((u.id, v.id))
    return pairs


def enumerate_variants(
    g: ComputeGraph,
    spec: SplitSpec,
    cap: int,
    topology: Topology | None = None,
    rewrite_collectives: bool = True,
    rewrite_fusions: bool = True,
) -> VariantSet:
    """Deterministically enumerate rewritten graphs.

    Enumeration order is lexicographic: per-operator split counts (ops
    by id, counts ascending), then all_reduce decomposition off/on per
    collective, then fusion off/on per eligible pair of the rewritten
    graph. Variants that a topology cannot host (an operator's mem_op
    above every device capacity, or any structural defect) are pruned.
    The first `cap` surviving variants are returned; the total count
    keeps running so callers can tell how much was cut off.
    """
    if cap < 1:
        raise RewriteError(f"variant cap must be >= 1, got {cap}")
    out = VariantSet(base_model_id=g.model_id)
    split_targets = [o.id for o in g.operators if o.kind == KIND_COMPUTE]
    count_options = [spec.allowed_counts] * len(split_targets)
    for counts in product(*count_options):
        base = g
        tags: list[str] = []
        for op_id, k in zip(split_targets, counts):
            if k > 1:
                base = split_operator(base, op_id, k, spec.overhead_factor)
                tags.append(f"split:{op_id}:k={k}")
        for variant, extra in _collective_choices(base, rewrite_collectives):
            for final, fuse_tags in _fusion_choices(variant, rewrite_fusions):
                all_tags = tuple(tags + extra + fuse_tags)
                if topology is not None and _infeasible(final, topology):
                    continue
                out.total_enumerated += 1
                if len(out.variants) < cap:
                    out.variants.append(Variant(final, all_tags))
                elif out.total_enumerated >= ENUMERATION_CEILING:
                    out.truncated = True
                    return out
    out.truncated = out.total_enumerated > len(out.variants)
    return out


def _collective_choices(g: ComputeGraph, enabled: bool):
    targets = [o.id for o in g.operators if o.kind == KIND_ALL_REDUCE] if enabled else []
    if not targets:
        yield g, []
        return
    for flags in product([False, True], repeat=len(targets)):
        variant = g
        tags = []
        for op_id, on in zip(targets, flags):
            if on:
                n = g.op_map[op_id].participants
                variant = decompose_allreduce(variant, op_id, n)
                tags.append(f"rsag:{g.model_id}.{op_id}")
        yield variant, tags


def _fusion_choices(g: ComputeGraph, enabled: bool):
    pairs = eligible_fusions(g) if enabled else []
    if not pairs:
        yield g, []
        return
    for flags in product([False, True], repeat=len(pairs)):
        variant = g
        tags = []
        valid = True
        for (u, v), on in zip(pairs, flags):
            if not on:
                continue
            if u not in variant.op_map or v not in variant.op_map:
                valid = False  # consumed by an earlier fusion in this combo
                break
            variant = fuse_pair(variant, u, v)
            tags.append(f"fuse:{u}+{v}")
        if valid:
            yield variant, tags


def _infeasible(g: ComputeGraph, t: Topology) -> bool:
    report = validate_workload(Workload([g], {g.model_id: 1.0}), t)
    return bool(report)


def apply_provenance(w: Workload, tags, overhead_factor: float = 0.0) -> Workload:
    """Replay recorded rewrite tags onto a base workload.

    Tags are applied in their recorded order: `split:OP:k=N`,
    `rsag:MODEL.OP`, `fuse:U+V`. This reconstructs the exact variant a
    solution file was planned against.
    """
    graphs = {g.model_id: g for g in w.graphs}

    def _owner(op_id: str) -> str:
        for mid in sorted(graphs):
            if op_id in graphs[mid].op_map:
                return mid
        raise RewriteError(f"provenance references unknown operator {op_id}")

    for tag in tags:
        if tag.startswith("split:"):
            _, op_id, kpart = tag.split(":")
            mid = _owner(op_id)
            graphs[mid] = split_operator(graphs[mid], op_id, int(kpart.removeprefix("k=")),
                                         overhead_factor)
        elif tag.startswith("rsag:"):
            mid, op_id = tag.removeprefix("rsag:").split(".", 1)
            if mid not in graphs:
                raise RewriteError(f"provenance references unknown model {mid}")
            n = graphs[mid].op_map[op_id].participants
            graphs[mid] = decompose_allreduce(graphs[mid], op_id, n)
        elif tag.startswith("fuse:"):
            u, v = tag.removeprefix("fuse:").split("+", 1)
            mid = _owner(u)
            graphs[mid] = fuse_pair(graphs[mid], u, v)
        else:
            raise RewriteError(f"unknown provenance tag: {tag}")
    return Workload([graphs[m] for m in sorted(graphs)], dict(w.weights))
