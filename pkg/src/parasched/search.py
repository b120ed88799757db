"""The planner: bounded best-first search over placement choices.

The search tree fixes one global topological order of operators and
branches, per operator, over devices and then over link choices for the
cross-device edges the placement creates (every parallel link is a
distinct choice). Variant graphs produced by rewrites form the first
branching level. Partial prefixes are costed by running the exclusive
simulator on the assigned subset, which lower-bounds the full run
because adding operators only adds contention.

Pruning uses an admissible bound: the weighted per-model maximum of the
partial completion, a zero-communication critical path over remaining
operators at per-operator best-device speed, and a capacity water-fill
of remaining FLOPs over device ceilings net of committed busy time.
A node whose bound exceeds the incumbent objective is pruned; at exact
equality it is pruned only when no descendant can precede the incumbent
in the assignment-vector tie-break, which keeps the returned plan
identical for any worker count.

Workers process the best open nodes in deterministic synchronous
rounds, so repeated runs produce byte-identical results (unless a wall
clock budget cuts the search short).
"""

from __future__ import annotations

import heapq
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

from .cost import CostModel
from .errors import (
    InfeasibleError,
    MemoryInfeasibleError,
    NodeFailureAbort,
    PlacementError,
    SizeLimitError,
)
from .graph import (
    KIND_COMPUTE,
    ComputeGraph,
    EdgeKey,
    OpKey,
    Operator,
    Workload,
    global_order,
    wire_volume,
)
from .sim import Assignment, Schedule, SimPolicy, Timeline, simulate
from .topo import Topology, TopologyEvent
from .transform import SplitSpec, enumerate_variants
from .units import NS_PER_S, ceil_div, ceil_frac

log = logging.getLogger(__name__)

ORACLE_MAX_OPS = 10
ORACLE_MAX_DEVICES = 4

_EXCLUSIVE = SimPolicy()


@dataclass(frozen=True)
class SearchConfig:
    workers: int = 1
    node_budget: int = 500_000
    time_budget_ms: int | None = None
    variant_cap: int = 16
    split_spec: SplitSpec | None = None
    rewrite_collectives: bool = True
    rewrite_fusions: bool = True

    def __post_init__(self):
        if self.workers < 1 or self.node_budget < 1 or self.variant_cap < 1:
            raise InfeasibleError("search budgets and worker count must be positive")
        if self.time_budget_ms is not None and self.time_budget_ms <= 0:
            raise InfeasibleError("time budget must be positive")


@dataclass
class SearchStats:
    nodes_expanded: int = 0
    nodes_pruned: int = 0
    incumbent_updates: int = 0
    variants_total: int = 1
    variants_truncated: bool = False
    leaves_enumerated: int = 0      # oracle only
    proven: bool = True
    wall_time_ms: float = 0.0       # volatile; never serialized


@dataclass
class Solution:
    assignment: Assignment
    schedule: Schedule
    timeline: Timeline
    objective: float                # weighted nanoseconds
    variant_index: int
    provenance: tuple[str, ...]
    vector: tuple
    proven: bool
    stats: SearchStats
    workload: Workload              # the (possibly rewritten) workload scheduled


# --------------------------------------------------------------- contexts


class _Context:
    """Precomputed branching structure for one variant workload."""

    def __init__(self, index: int, workload: Workload, tags: tuple[str, ...],
                 topology: Topology, cost: CostModel,
                 start_time_ns: int = 0, floors=None, reserved_memory=None):
        self.index = index
        self.w = workload
        self.tags = tags
        self.t = topology
        self.cost = cost
        self.start_time = start_time_ns
        self.floors = dict(floors or {})
        self.reserved_memory = dict(reserved_memory or {})
        self.order: list[OpKey] = global_order(workload)
        self.pos = {k: i for i, k in enumerate(self.order)}
        self.devices = sorted(d.id for d in topology.devices if d.alive)
        self.device_map = {d.id: d for d in topology.devices}
        if not self.devices:
            raise InfeasibleError("no alive devices to place operators on")
        self.candidates: dict[OpKey, list[str]] = {}
        self.in_edges: dict[OpKey, list[tuple[EdgeKey, object, OpKey]]] = {k: [] for k in self.order}
        for model_id, e in workload.all_edges:
            dst: OpKey = (model_id, e.dst)
            self.in_edges[dst].append(((model_id, e.src, e.dst), e, (model_id, e.src)))
        for k in self.order:
            self.in_edges[k].sort(key=lambda item: item[0])
            op = workload.op(k)
            if op.pinned_device is not None:
                self.candidates[k] = [op.pinned_device] if op.pinned_device in self.devices else []
            else:
                self.candidates[k] = self.devices
        self._links_cache: dict[tuple[str, str], list[str]] = {}
        self.min_exec: dict[OpKey, int] = {k: self._min_exec(k) for k in self.order}
        self.model_max_k: dict[str, Fraction] = {}
        self.model_flops: dict[str, int] = {}
        for g in workload.graphs:
            ks = [Fraction(o.flops, o.mem_bytes) for o in g.operators
                  if o.kind == KIND_COMPUTE and o.flops > 0]
            self.model_max_k[g.model_id] = max(ks) if ks else Fraction(0)
            self.model_flops[g.model_id] = sum(
                o.flops for o in g.operators if o.kind == KIND_COMPUTE)
        self.rates: dict[tuple[str, str], Fraction] = {}
        eff = Fraction(cost.efficiency)
        for g in workload.graphs:
            max_k = self.model_max_k[g.model_id]
            for d in self.devices:
                dev = self.device_map[d]
                ceiling = min(Fraction(dev.peak_flops), max_k * dev.peak_mem_bw)
                self.rates[(g.model_id, d)] = eff * ceiling

    def links(self, src_dev: str, dst_dev: str) -> list[str]:
        key = (src_dev, dst_dev)
        hit = self._links_cache.get(key)
        if hit is None:
            hit = self.t.link_ids_between(src_dev, dst_dev)
            self._links_cache[key] = hit
        return hit

    def _min_exec(self, key: OpKey) -> int:
        op = self.w.op(key)
        if op.kind == KIND_COMPUTE:
            times = [self.cost.exec_time_ns(op, self.device_map[d])
                     for d in self.candidates[key] or self.devices]
            return min(times) if times else 0
        volume = wire_volume(op)
        if volume == 0:
            return 0
        best_bw = max((l.bandwidth for l in self.t.links), default=0)
        if best_bw == 0:
            return 0
        return ceil_frac(volume * NS_PER_S / best_bw)

    def op_duration_estimate(self, key: OpKey, dev: str) -> int:
        """Static-bandwidth duration used by the greedy heuristic."""
        op = self.w.op(key)
        if op.kind == KIND_COMPUTE:
            return self.cost.exec_time_ns(op, self.device_map[dev])
        volume = wire_volume(op)
        best = None
        for l in self.t.links:
            if l.src == dev or (l.bidirectional and l.dst == dev):
                cand = (-l.bandwidth, l.latency_ns, l.id)
                if best is None or cand < best:
                    best = cand
        if best is None:
            return 0
        if volume == 0:
            return best[1]
        return best[1] + ceil_frac(volume * NS_PER_S / -best[0])

    def assignment_from(self, choices: tuple) -> Assignment:
        op_device: dict[OpKey, str] = {}
        edge_link: dict[EdgeKey, str] = {}
        for key, choice in zip(self.order, choices):
            op_device[key] = choice[0]
            cross = [item for item in self.in_edges[key]
                     if op_device[item[2]] != choice[0]]
            for (ekey, _e, _src), lid in zip(cross, choice[1]):
                edge_link[ekey] = lid
        return Assignment(op_device, edge_link)

    def simulate_prefix(self, choices: tuple):
        scope = set(self.order[:len(choices)])
        return simulate(
            self.assignment_from(choices), self.w, self.t, self.cost, _EXCLUSIVE,
            scope=scope, start_time_ns=self.start_time, completion_floors=self.floors,
            reserved_memory=self.reserved_memory,
        )


# --------------------------------------------------------------- bound


def _lower_bound(ctx: _Context, choices: tuple, schedule: Schedule, tl: Timeline) -> float:
    """Admissible weighted lower bound for every completion of the prefix."""
    placed = set(ctx.order[:len(choices)])
    busy: dict[tuple[str, str], int] = {}
    for key, slot in schedule.ops.items():
        busy_key = (key[0], slot.device)
        busy[busy_key] = busy.get(busy_key, 0) + (slot.end_ns - slot.start_ns)
    total = 0.0
    for g in ctx.w.graphs:
        model = g.model_id
        floor = tl.completions.get(model, 0)
        remaining = [(model, o.id) for o in g.operators if (model, o.id) not in placed]
        if not remaining:
            total += ctx.w.weights[model] * floor
            continue
        est = _chain_estimates(ctx, g, placed, schedule)
        chain = max(est[k] + ctx.min_exec[k] for k in remaining)
        resume = min(est[k] for k in remaining)
        rem_flops = sum(ctx.w.op(k).flops for k in remaining
                        if ctx.w.op(k).kind == KIND_COMPUTE)
        load = _waterfill(ctx, model, rem_flops, busy, resume) if rem_flops else 0
        total += ctx.w.weights[model] * max(floor, chain, load)
    return total


def _chain_estimates(ctx: _Context, g: ComputeGraph, placed, schedule) -> dict[OpKey, int]:
    """Earliest conceivable start per remaining operator (zero comm).

    Walks the shared topological order so predecessors resolve first.
    """
    est: dict[OpKey, int] = {}
    for key in ctx.order:
        if key[0] != g.model_id or key in placed:
            continue
        lo = ctx.start_time
        for _ekey, _e, src in ctx.in_edges[key]:
            if src in placed:
                lo = max(lo, schedule.ops[src].end_ns)
            else:
                lo = max(lo, est[src] + ctx.min_exec[src])
        est[key] = lo
    return est


def _waterfill(ctx: _Context, model: str, rem_flops: int, busy, resume: int) -> int:
    """Least T with sum_d rate_d * max(0, T - m_d) >= remaining FLOPs."""
    slots = []
    for d in ctx.devices:
        rate = ctx.rates[(model, d)]
        if rate <= 0:
            continue
        committed = busy.get((model, d), 0)
        slots.append((Fraction(max(committed, resume)), rate / NS_PER_S))
    if not slots:
        return 0
    slots.sort()
    need = Fraction(rem_flops)
    active_rate = Fraction(0)
    absorbed = Fraction(0)
    best = None
    for i, (threshold, rate) in enumerate(slots):
        nxt = slots[i + 1][0] if i + 1 < len(slots) else None
        active_rate += rate
        absorbed += rate * threshold
        candidate = (need + absorbed) / active_rate
        if nxt is None or candidate <= nxt:
            best = candidate
            break
    return ceil_frac(best)


# --------------------------------------------------------------- expansion


def _children_choices(ctx: _Context, choices: tuple):
    """Next-operator choice tuples in (device, link vector) lexicographic order."""
    key = ctx.order[len(choices)]
    op_device = {k: c[0] for k, c in zip(ctx.order, choices)}
    for dev in ctx.candidates[key]:
        cross = [item for item in ctx.in_edges[key] if op_device[item[2]] != dev]
        option_lists = []
        ok = True
        for _ekey, _e, src in cross:
            options = ctx.links(op_device[src], dev)
            if not options:
                ok = False
                break
            option_lists.append(options)
        if not ok:
            continue
        if not option_lists:
            yield (dev, ())
            continue
        for combo in product(*option_lists):
            yield (dev, tuple(combo))


def _evaluate(ctx: _Context, choices: tuple):
    """Prefix cost or None when the prefix is infeasible."""
    try:
        schedule, tl = ctx.simulate_prefix(choices)
    except (MemoryInfeasibleError, PlacementError, NodeFailureAbort):
        return None
    return schedule, tl


# --------------------------------------------------------------- greedy


def greedy_init(w: Workload, t: Topology, m: CostModel, *,
                start_time_ns: int = 0, floors=None, reserved_memory=None,
                prefer: dict[OpKey, str] | None = None) -> Solution:
    """Earliest-finish-time list scheduling over the base workload.

    Operators are placed in the global topological order on the
    (device, link set) that finishes them soonest under a static
    bandwidth estimate, respecting memory feasibility. The chosen
    assignment is then re-simulated to produce the returned solution.
    """
    ctx = _Context(0, w, (), t, m, start_time_ns, floors, reserved_memory)
    choices = _greedy_choices(ctx, prefer or {})
    return _complete_solution(ctx, choices, SearchStats())


def _greedy_choices(ctx: _Context, prefer: dict[OpKey, str]) -> tuple:
    dev_free = {d: max(ctx.start_time, 0) for d in ctx.devices}
    res_free: dict[tuple[str, str, str], int] = {}
    op_end: dict[OpKey, int] = {}
    mem_used: dict[str, int] = {d: ctx.reserved_memory.get(d, 0) for d in ctx.devices}
    op_device: dict[OpKey, str] = {}
    choices: list[tuple] = []
    for key in ctx.order:
        op = ctx.w.op(key)
        candidates = ctx.candidates[key]
        if prefer.get(key) in candidates:
            candidates = [prefer[key]] + [d for d in candidates if d != prefer[key]]
        best = None
        for dev in candidates:
            mem_need = op.mem_op + sum(
                e.mem_data_bytes for _ek, e, _src in ctx.in_edges[key])
            if mem_used[dev] + mem_need > ctx.device_map[dev].mem_capacity:
                continue
            ready = ctx.start_time
            picked_links: list[str] = []
            bookings: list[tuple[tuple[str, str, str], int]] = []
            feasible = True
            for _ekey, e, src in ctx.in_edges[key]:
                src_dev = op_device[src]
                if src_dev == dev:
                    ready = max(ready, op_end[src])
                    continue
                best_link = None
                for lid in ctx.links(src_dev, dev):
                    link = ctx.t.link_map[lid]
                    rkey = (lid, src_dev, dev)
                    start = max(op_end[src], res_free.get(rkey, 0))
                    dur = link.latency_ns + (
                        ceil_div(e.size_bytes * NS_PER_S, link.bandwidth) if e.size_bytes else 0)
                    arrival = start + dur
                    if best_link is None or (arrival, lid) < best_link[:2]:
                        best_link = (arrival, lid, rkey)
                if best_link is None:
                    feasible = False
                    break
                ready = max(ready, best_link[0])
                picked_links.append(best_link[1])
                bookings.append((best_link[2], best_link[0]))
            if not feasible:
                continue
            start = max(ready, dev_free[dev])
            finish = start + ctx.op_duration_estimate(key, dev)
            cand = (finish, dev, tuple(picked_links), start, bookings, mem_need)
            if best is None or cand[:3] < best[:3]:
                best = cand
        if best is None:
            raise InfeasibleError(
                f"no feasible placement for operator {key[0]}/{key[1]} "
                f"(memory or connectivity constraints bind on every device)"
            )
        finish, dev, links, start, bookings, mem_need = best
        for rkey, arrival in bookings:
            res_free[rkey] = arrival
        dev_free[dev] = finish
        op_end[key] = finish
        op_device[key] = dev
        mem_used[dev] += mem_need
        choices.append((dev, links))
    return tuple(choices)


def _complete_solution(ctx: _Context, choices: tuple, stats: SearchStats) -> Solution:
    schedule, tl = ctx.simulate_prefix(choices)
    return Solution(
        assignment=ctx.assignment_from(choices),
        schedule=schedule,
        timeline=tl,
        objective=tl.objective,
        variant_index=ctx.index,
        provenance=ctx.tags,
        vector=(ctx.index,) + choices,
        proven=False,
        stats=stats,
        workload=ctx.w,
    )


# --------------------------------------------------------------- public bound/expand


def lower_bound(w: Workload, t: Topology, m: CostModel, choices: tuple = (), *,
                start_time_ns: int = 0, floors=None) -> float:
    """Admissible bound for a prefix of the base-variant search tree."""
    ctx = _Context(0, w, (), t, m, start_time_ns, floors)
    schedule, tl = ctx.simulate_prefix(choices)
    return _lower_bound(ctx, choices, schedule, tl)


def expand(w: Workload, t: Topology, m: CostModel, choices: tuple = ()) -> list[tuple]:
    """Feasible child choice tuples of a base-variant prefix."""
    ctx = _Context(0, w, (), t, m)
    out = []
    for choice in _children_choices(ctx, choices):
        if _evaluate(ctx, choices + (choice,)) is not None:
            out.append(choices + (choice,))
    return out


# --------------------------------------------------------------- branch and bound


def _build_contexts(w: Workload, t: Topology, m: CostModel, cfg: SearchConfig,
                    start_time_ns: int, floors, reserved) -> tuple[list[_Context], int, bool]:
    if cfg.split_spec is None:
        return [_Context(0, w, (), t, m, start_time_ns, floors, reserved)], 1, False
    per_model = []
    truncated = False
    for g in w.graphs:
        vs = enumerate_variants(
            g, cfg.split_spec, cfg.variant_cap, topology=t,
            rewrite_collectives=cfg.rewrite_collectives,
            rewrite_fusions=cfg.rewrite_fusions,
        )
        truncated |= vs.truncated
        per_model.append(vs.variants)
    contexts = []
    total = 1
    for n in per_model:
        total *= len(n)
    for idx, combo in enumerate(product(*per_model)):
        if idx >= cfg.variant_cap:
            truncated = True
            break
        graphs = [v.graph for v in combo]
        tags = tuple(tag for v in combo for tag in v.tags)
        wl = Workload(graphs, dict(w.weights))
        contexts.append(_Context(idx, wl, tags, t, m, start_time_ns, floors, reserved))
    if not contexts:
        raise InfeasibleError("no variant admits any feasible completion")
    return contexts, total, truncated


def _prunable(bound: float, prefix_vector: tuple, incumbent: Solution | None) -> bool:
    if incumbent is None:
        return False
    if bound > incumbent.objective:
        return True
    if bound < incumbent.objective:
        return False
    return prefix_vector > incumbent.vector[:len(prefix_vector)]


def _better(candidate: Solution, incumbent: Solution | None) -> bool:
    if incumbent is None:
        return True
    return (candidate.objective, candidate.vector) < (incumbent.objective, incumbent.vector)


def branch_and_bound(w: Workload, t: Topology, m: CostModel,
                     cfg: SearchConfig = SearchConfig(), *,
                     start_time_ns: int = 0, floors=None, reserved_memory=None,
                     greedy_prefer: dict[OpKey, str] | None = None,
                     warm_assignments: list[dict[OpKey, str]] | None = None) -> Solution:
    """Best-first branch-and-bound over (variant, device, link) choices.

    Returns the minimum-objective solution; among equal objectives the
    lexicographically smallest assignment vector. With exhausted open
    set the result is proven optimal for the enumerated variant set;
    on budget exhaustion the incumbent is returned flagged non-proven.
    """
    t_start = time.monotonic()
    stats = SearchStats()
    contexts, total_variants, truncated = _build_contexts(
        w, t, m, cfg, start_time_ns, floors, reserved_memory)
    stats.variants_total = total_variants
    stats.variants_truncated = truncated

    incumbent: Solution | None = None
    try:
        seed = greedy_init(contexts[0].w, t, m, start_time_ns=start_time_ns,
                           floors=floors, reserved_memory=reserved_memory,
                           prefer=greedy_prefer)
        seed.variant_index = contexts[0].index
        seed.provenance = contexts[0].tags
        seed.workload = contexts[0].w
        incumbent = seed
        stats.incumbent_updates += 1
    except (InfeasibleError, MemoryInfeasibleError, PlacementError, NodeFailureAbort):
        log.debug("greedy initialization failed; searching without a seed")
    for extra in warm_assignments or []:
        warm = _solution_from_assignment(contexts[0], extra)
        if warm is not None and _better(warm, incumbent):
            incumbent = warm
            stats.incumbent_updates += 1

    heap: list[tuple[float, int, tuple]] = []
    for ctx in contexts:
        result = _evaluate(ctx, ())
        if result is None:
            continue
        schedule, tl = result
        bound = _lower_bound(ctx, (), schedule, tl)
        heapq.heappush(heap, (bound, ctx.index, ()))

    ctx_by_index = {c.index: c for c in contexts}
    budget_hit = False
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    deadline = None
    if cfg.time_budget_ms is not None:
        deadline = t_start + cfg.time_budget_ms / 1000.0
    try:
        while heap:
            if stats.nodes_expanded >= cfg.node_budget or (
                    deadline is not None and time.monotonic() > deadline):
                budget_hit = True
                break
            batch = []
            while heap and len(batch) < cfg.workers:
                bound, ctx_idx, choices = heapq.heappop(heap)
                if _prunable(bound, (ctx_idx,) + choices, incumbent):
                    stats.nodes_pruned += 1
                    continue
                batch.append((bound, ctx_idx, choices))
            if not batch:
                continue

            def _process(item):
                _bound, ctx_idx, choices = item
                ctx = ctx_by_index[ctx_idx]
                if len(choices) == len(ctx.order):
                    return ("complete", ctx_idx, choices, None)
                children = []
                for choice in _children_choices(ctx, choices):
                    nxt = choices + (choice,)
                    result = _evaluate(ctx, nxt)
                    if result is None:
                        continue
                    child_bound = _lower_bound(ctx, nxt, result[0], result[1])
                    children.append((child_bound, ctx_idx, nxt))
                return ("expanded", ctx_idx, choices, children)

            if pool is not None and len(batch) > 1:
                results = list(pool.map(_process, batch))
            else:
                results = [_process(item) for item in batch]

            for kind, ctx_idx, choices, children in results:
                if kind == "complete":
                    candidate = _complete_solution(ctx_by_index[ctx_idx], choices, stats)
                    if _better(candidate, incumbent):
                        incumbent = candidate
                        stats.incumbent_updates += 1
                else:
                    stats.nodes_expanded += 1
                    for child in children:
                        if _prunable(child[0], (child[1],) + child[2], incumbent):
                            stats.nodes_pruned += 1
                        else:
                            heapq.heappush(heap, child)
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    stats.proven = not budget_hit
    stats.wall_time_ms = (time.monotonic() - t_start) * 1000.0
    if incumbent is None:
        raise InfeasibleError("search found no feasible complete plan")
    incumbent.stats = stats
    incumbent.proven = stats.proven
    return incumbent


def _solution_from_assignment(ctx: _Context, op_device: dict[OpKey, str]) -> Solution | None:
    """Rebuild a choice vector from a bare operator->device map (cheapest links)."""
    choices: list[tuple] = []
    for key in ctx.order:
        dev = op_device.get(key)
        if dev not in ctx.candidates[key]:
            return None
        links = []
        for _ekey, e, src in ctx.in_edges[key]:
            src_dev = op_device.get(src)
            if src_dev is None or src_dev == dev:
                continue
            options = ctx.links(src_dev, dev)
            if not options:
                return None
            best = min(
                options,
                key=lambda lid: (
                    ctx.t.link_map[lid].latency_ns
                    + ceil_div(max(e.size_bytes, 1) * NS_PER_S, ctx.t.link_map[lid].bandwidth),
                    lid,
                ),
            )
            links.append(best)
        choices.append((dev, tuple(links)))
    try:
        return _complete_solution(ctx, tuple(choices), SearchStats())
    except (MemoryInfeasibleError, PlacementError, NodeFailureAbort):
        return None


# --------------------------------------------------------------- oracle


def brute_force_oracle(w: Workload, t: Topology, m: CostModel, *,
                       start_time_ns: int = 0, floors=None) -> Solution:
    """Exhaustive enumeration of every device assignment and link choice.

    Guarded to small instances; returns the true optimum under the same
    (objective, assignment vector) tie-break as the search.
    """
    n_ops = len(w.all_ops)
    n_devices = len([d for d in t.devices if d.alive])
    if n_ops > ORACLE_MAX_OPS or n_devices > ORACLE_MAX_DEVICES:
        raise SizeLimitError(
            f"oracle limited to {ORACLE_MAX_OPS} operators and {ORACLE_MAX_DEVICES} devices; "
            f"got {n_ops} and {n_devices}"
        )
    ctx = _Context(0, w, (), t, m, start_time_ns, floors)
    stats = SearchStats(proven=True)
    best: Solution | None = None

    def _walk(choices: tuple):
        nonlocal best
        if len(choices) == len(ctx.order):
            stats.leaves_enumerated += 1
            try:
                candidate = _complete_solution(ctx, choices, stats)
            except (MemoryInfeasibleError, PlacementError, NodeFailureAbort):
                return
            if _better(candidate, best):
                best = candidate
            return
        for choice in _children_choices(ctx, choices):
            _walk(choices + (choice,))

    _walk(())
    if best is None:
        raise InfeasibleError("oracle found no feasible complete plan")
    best.stats = stats
    best.proven = True
    return best


# --------------------------------------------------------------- replanning


def replan(prev: Solution, event: TopologyEvent, partial_schedule: Schedule,
           w: Workload, t_after: Topology, m: CostModel,
           cfg: SearchConfig = SearchConfig()) -> Solution:
    """Re-plan the residual workload after a topology event.

    Operators completed by the event time are frozen at their recorded
    placements/timings and act as pinned zero-cost data sources for the
    remaining ones. Completed work stranded on a removed device is
    re-executed, together with its completed descendants so the merged
    schedule stays causally consistent; frozen footprints stay charged
    against device memory. The previous assignment warm-starts the
    incumbent when it survives the event.
    """
    t0 = event.at_time_ns
    completed = {k for k, slot in partial_schedule.ops.items() if slot.end_ns <= t0}
    alive_now = {d.id for d in t_after.devices if d.alive}

    rerun: set[OpKey] = {o.key for o in w.all_ops if o.key not in completed}
    changed = True
    while changed:
        changed = False
        for model_id, e in w.all_edges:
            src, dst = (model_id, e.src), (model_id, e.dst)
            if src in rerun and dst not in rerun:
                rerun.add(dst)      # consumers of re-executed work rerun too
                changed = True
            elif dst in rerun and src not in rerun and \
                    partial_schedule.ops[src].device not in alive_now:
                rerun.add(src)      # output stranded on a removed device
                changed = True
    frozen = completed - rerun

    floors: dict[str, int] = {}
    reserved: dict[str, int] = {}
    graphs: list[ComputeGraph] = []
    for g in w.graphs:
        frozen_ends = [partial_schedule.ops[(g.model_id, o.id)].end_ns
                       for o in g.operators if (g.model_id, o.id) in frozen]
        floors[g.model_id] = max(frozen_ends, default=0)
        ops: list[Operator] = []
        edges = []
        needed_sources: set[str] = set()
        for e in g.edges:
            src, dst = (g.model_id, e.src), (g.model_id, e.dst)
            if dst not in rerun:
                if dst in frozen:
                    dev = partial_schedule.ops[dst].device
                    reserved[dev] = reserved.get(dev, 0) + e.mem_data_bytes
                continue
            edges.append(e)
            if src in frozen:
                needed_sources.add(e.src)
        for o in g.operators:
            key = (g.model_id, o.id)
            if key in rerun:
                ops.append(o)
                continue
            dev = partial_schedule.ops[key].device
            reserved[dev] = reserved.get(dev, 0) + o.mem_op
            if o.id in needed_sources:
                ops.append(Operator(
                    id=o.id, model_id=g.model_id, kind=KIND_COMPUTE,
                    flops=0, mem_bytes=1, mem_op=0, pinned_device=dev,
                ))
        graphs.append(ComputeGraph(g.model_id, ops, edges))
    residual = Workload(graphs, dict(w.weights))

    warm: dict[OpKey, str] = {}
    for key in rerun:
        dev = prev.assignment.op_device.get(key)
        if dev in alive_now:
            warm[key] = dev
    source_keys = {o.key for o in residual.all_ops} - rerun
    for key in source_keys:
        warm[key] = residual.op(key).pinned_device

    residual_cfg = SearchConfig(
        workers=cfg.workers, node_budget=cfg.node_budget,
        time_budget_ms=cfg.time_budget_ms, variant_cap=cfg.variant_cap,
        split_spec=None,
    )
    sol = branch_and_bound(
        residual, t_after, m, residual_cfg,
        start_time_ns=t0, floors=floors, reserved_memory=reserved,
        greedy_prefer=warm,
        warm_assignments=[warm] if len(warm) == len(residual.all_ops) else None,
    )

    merged = Schedule()
    merged.ops = {k: slot for k, slot in sol.schedule.ops.items() if k in rerun}
    merged.ops.update({k: partial_schedule.ops[k] for k in frozen})
    merged.transfers = dict(sol.schedule.transfers)
    for ekey, slot in partial_schedule.transfers.items():
        model_id, src, dst = ekey
        if (model_id, src) in frozen and (model_id, dst) in frozen:
            merged.transfers.setdefault(ekey, slot)
    merged_assignment = Assignment(
        {**{k: partial_schedule.ops[k].device for k in frozen},
         **{k: v for k, v in sol.assignment.op_device.items() if k in rerun}},
        sol.assignment.edge_link,
    )
    sol.schedule = merged
    sol.assignment = merged_assignment
    sol.workload = w
    return sol
