"""Discrete-event execution of a placed workload on a temporal topology.

Given a complete operator-to-device and edge-to-link assignment, the
simulator derives all start/end times by list simulation: devices run
one operator at a time, transfers start once their producer finished
and their link admits them, and timed topology events interleave with
execution. Two bandwidth policies satisfy the per-link capacity rule:

* ``exclusive`` (default): one transfer at a time per directed link,
  FIFO by ready time then edge id. A bandwidth change rescales the
  remaining byte time of in-flight transfers proportionally.
* ``fluid``: transfers on a link share its bandwidth equally; shares
  are recomputed at event boundaries, quantized to the nanosecond grid.

Conflict groups serialize across member links in both policies: at most
one member link carries active transfers at any instant.

Collective operators (reduce_scatter / all_gather / all_reduce) occupy
their assigned device for the time their ring wire volume needs on the
fastest link incident to that device; they do not occupy the link
itself. A node_fail event aborts the run when the failed device still
has outstanding operators or incident transfers, surfacing the partial
timeline for replanning.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

from .cost import CostModel
from .errors import (
    MemoryInfeasibleError,
    NodeFailureAbort,
    ParaschedError,
    PlacementError,
)
from .graph import EdgeKey, OpKey, Workload, wire_volume
from .topo import (
    EVENT_BANDWIDTH_CHANGE,
    EVENT_NODE_FAIL,
    EVENT_NODE_JOIN,
    Topology,
)
from .units import NS_PER_S, ceil_div, ceil_frac

POLICY_EXCLUSIVE = "exclusive"
POLICY_FLUID = "fluid"

UNAVAILABLE = 1 << 62


@dataclass(frozen=True)
class SimPolicy:
    bandwidth: str = POLICY_EXCLUSIVE

    def __post_init__(self):
        if self.bandwidth not in (POLICY_EXCLUSIVE, POLICY_FLUID):
            raise ParaschedError(f"unknown bandwidth policy: {self.bandwidth}")


@dataclass(frozen=True)
class Assignment:
    """Complete placement: operator -> device and cross-device edge -> link."""

    op_device: dict[OpKey, str]
    edge_link: dict[EdgeKey, str]


@dataclass(frozen=True)
class OpSlot:
    device: str
    start_ns: int
    end_ns: int


@dataclass(frozen=True)
class TransferSlot:
    link: str
    start_ns: int
    end_ns: int


@dataclass
class Schedule:
    ops: dict[OpKey, OpSlot] = dc_field(default_factory=dict)
    transfers: dict[EdgeKey, TransferSlot] = dc_field(default_factory=dict)


@dataclass
class Timeline:
    log: list[tuple[int, str, str]] = dc_field(default_factory=list)
    completions: dict[str, int] = dc_field(default_factory=dict)
    objective: float = 0.0  # weighted nanoseconds


@dataclass(frozen=True)
class Violation:
    kind: str                 # dependency | comm_order | memory | bandwidth | conflict_group | placement | dead_device
    subjects: tuple[str, ...]
    time_ns: int
    measured: float
    limit: float

    def __str__(self) -> str:
        who = ", ".join(self.subjects)
        return f"{self.kind}[{who}] at {self.time_ns}: measured {self.measured} vs limit {self.limit}"


def weighted_objective(tl: Timeline, w: Workload) -> float:
    """Weighted sum of per-model completion times, in weighted nanoseconds."""
    return sum(w.weights[m] * tl.completions.get(m, 0) for m in sorted(w.graph_map))


def static_memory_usage(assignment: Assignment, w: Workload, scope: set[OpKey] | None = None):
    """Per-device resident bytes: operator memory plus incoming edge data."""
    usage: dict[str, int] = {}
    for op in w.all_ops:
        if scope is not None and op.key not in scope:
            continue
        dev = assignment.op_device[op.key]
        usage[dev] = usage.get(dev, 0) + op.mem_op
    for model_id, e in w.all_edges:
        src, dst = (model_id, e.src), (model_id, e.dst)
        if scope is not None and (src not in scope or dst not in scope):
            continue
        dev = assignment.op_device[dst]
        usage[dev] = usage.get(dev, 0) + e.mem_data_bytes
    return usage


def check_static_memory(assignment: Assignment, w: Workload, t: Topology,
                        scope: set[OpKey] | None = None,
                        reserved: dict[str, int] | None = None):
    universe = _device_universe(t)
    usage = static_memory_usage(assignment, w, scope)
    for dev, base in (reserved or {}).items():
        usage[dev] = usage.get(dev, 0) + base
    for dev, used in sorted(usage.items()):
        cap = universe[dev].mem_capacity if dev in universe else 0
        if used > cap:
            raise MemoryInfeasibleError(dev, used - cap)


def _device_universe(t: Topology):
    """Devices present initially plus all node_join payloads."""
    out = {d.id: d for d in t.devices}
    for ev in t.events:
        if ev.kind == EVENT_NODE_JOIN and ev.device is not None:
            out.setdefault(ev.device.id, ev.device)
    return out


def _availability(t: Topology):
    """(available_from, removed_at) per device id, from the event list."""
    avail: dict[str, int] = {}
    removed: dict[str, int] = {}
    for d in t.devices:
        avail[d.id] = 0 if d.alive else UNAVAILABLE
    for ev in t.events:
        if ev.kind == EVENT_NODE_JOIN and ev.device is not None:
            avail.setdefault(ev.device.id, ev.at_time_ns)
        elif ev.kind == EVENT_NODE_FAIL and ev.device_id in avail:
            removed.setdefault(ev.device_id, ev.at_time_ns)
    return avail, removed


class _Resource:
    """One direction of one link."""

    __slots__ = ("link_id", "src", "dst", "busy_end", "active", "draining",
                 "latency_waiting", "last_update", "epoch")

    def __init__(self, link_id: str, src: str, dst: str):
        self.link_id = link_id
        self.src = src
        self.dst = dst
        self.busy_end = 0          # exclusive mode
        self.active = None         # exclusive mode: in-flight _Xfer
        self.draining: list = []   # fluid mode: byte-phase _Xfer list
        self.latency_waiting = 0   # fluid mode: started, still in latency
        self.last_update = 0
        self.epoch = 0


class _Xfer:
    __slots__ = ("edge_key", "size", "resource", "group", "start", "latency_end",
                 "end", "bw", "remaining", "epoch")

    def __init__(self, edge_key, size, resource, group):
        self.edge_key = edge_key
        self.size = size
        self.resource = resource
        self.group = group
        self.start = -1
        self.latency_end = -1
        self.end = -1
        self.bw = 0
        self.remaining = Fraction(0)
        self.epoch = 0


class _Engine:
    def __init__(self, assignment, workload, topology, cost_model, policy,
                 scope=None, start_time_ns=0, completion_floors=None,
                 reserved_memory=None):
        self.assignment = assignment
        self.w = workload
        self.t = topology
        self.cost = cost_model
        self.policy = policy
        self.start_time = start_time_ns
        self.floors = dict(completion_floors or {})
        self.reserved_memory = dict(reserved_memory or {})
        self.scope = set(scope) if scope is not None else {o.key for o in workload.all_ops}
        self._setup()

    # ------------------------------------------------------------- setup

    def _setup(self):
        self.universe = _device_universe(self.t)
        avail, _removed = _availability(self.t)
        self.dev_avail = avail
        self.dev_free: dict[str, int] = {}
        self.dev_removed: set[str] = set()
        self.ops = {}          # OpKey -> Operator
        self.op_dev = {}       # OpKey -> device id
        self.unmet = {}        # OpKey -> outstanding dependency count
        self.ready_at = {}     # OpKey -> max contribution so far
        self.pending_ops: list[OpKey] = []
        self.out_edges = {}    # OpKey -> list of (EdgeKey, DataEdge, dst OpKey)
        self.transfers: dict[EdgeKey, _Xfer] = {}
        self.ready_xfer: dict[EdgeKey, int] = {}
        self.pending_xfers: list[EdgeKey] = []
        self.finished_ops = 0
        self.schedule = Schedule()
        self.log: list[tuple[int, str, str]] = []
        self.events: list = []
        self.eseq = 0
        self.bw: dict[str, int] = {l.id: l.bandwidth for l in self.t.links}
        self.latency: dict[str, int] = {l.id: l.latency_ns for l in self.t.links}
        self.resources: dict[tuple[str, str, str], _Resource] = {}
        self.group_active: dict[str, tuple[str | None, int]] = {
            g.id: (None, 0) for g in self.t.conflict_groups
        }
        self.link_group = dict(self.t.group_of_link)
        for l in self.t.links:
            self._add_link_resources(l)

        for op in self.w.all_ops:
            key = op.key
            if key not in self.scope:
                continue
            dev = self.assignment.op_device.get(key)
            if dev is None:
                raise PlacementError(f"operator {op.label()} has no device assignment")
            if dev not in self.universe:
                raise PlacementError(f"operator {op.label()} assigned to unknown device {dev}")
            if self.dev_avail.get(dev, UNAVAILABLE) >= UNAVAILABLE:
                raise PlacementError(f"operator {op.label()} assigned to unavailable device {dev}")
            if op.pinned_device is not None and op.pinned_device != dev:
                raise PlacementError(f"operator {op.label()} pinned to {op.pinned_device}, assigned {dev}")
            self.ops[key] = op
            self.op_dev[key] = dev
            self.unmet[key] = 0
            self.ready_at[key] = self.start_time
            self.out_edges[key] = []
            self.dev_free.setdefault(dev, max(self.start_time, self.dev_avail[dev]))

        for model_id, e in self.w.all_edges:
            src, dst = (model_id, e.src), (model_id, e.dst)
            if src not in self.ops or dst not in self.ops:
                continue
            ekey: EdgeKey = (model_id, e.src, e.dst)
            self.unmet[dst] += 1
            self.out_edges[src].append((ekey, e, dst))
            d_s, d_d = self.op_dev[src], self.op_dev[dst]
            if d_s == d_d:
                continue
            link_id = self.assignment.edge_link.get(ekey)
            if link_id is None:
                raise PlacementError(f"edge {model_id}/{e.src}->{e.dst} crosses devices without a link")
            link = self._link_lookup(link_id)
            if link is None or not link.connects(d_s, d_d):
                raise PlacementError(
                    f"edge {model_id}/{e.src}->{e.dst} assigned link {link_id} "
                    f"which does not connect {d_s} -> {d_d}"
                )
            res = self.resources[(link_id, d_s, d_d)]
            group = self.link_group.get(link_id)
            self.transfers[ekey] = _Xfer(ekey, e.size_bytes, res, group)

        check_static_memory(self.assignment, self.w, self.t, self.scope,
                            self.reserved_memory)
        self.ready_xfer = {k: 0 for k in self.transfers}

        for key, n in self.unmet.items():
            if n == 0:
                self.pending_ops.append(key)
        # Events at or before the start time shape the initial state;
        # later ones interleave with execution.
        for ev in self.t.events:
            if ev.at_time_ns <= self.start_time:
                self._apply_topology_event(ev.at_time_ns, ev)
            else:
                self._push(ev.at_time_ns, 1, ("topology", ev))

    def _link_lookup(self, link_id):
        cur = self.t.link_map.get(link_id)
        if cur is not None:
            return cur
        for ev in self.t.events:
            if ev.kind == EVENT_NODE_JOIN:
                for l in ev.links:
                    if l.id == link_id:
                        return l
        return None

    def _add_link_resources(self, l):
        self.bw[l.id] = l.bandwidth
        self.latency[l.id] = l.latency_ns
        self.resources[(l.id, l.src, l.dst)] = _Resource(l.id, l.src, l.dst)
        if l.bidirectional:
            self.resources[(l.id, l.dst, l.src)] = _Resource(l.id, l.dst, l.src)

    # ------------------------------------------------------------- event loop

    def _push(self, time_ns, prio, payload):
        self.eseq += 1
        heapq.heappush(self.events, (time_ns, prio, self.eseq, payload))

    def run(self):
        now = self.start_time
        self._start_pass(now)
        while self.finished_ops < len(self.ops):
            if not self.events:
                stuck = sorted(k for k, v in self.unmet.items() if k not in
                               {ok for ok in self.schedule.ops})
                raise PlacementError(f"simulation cannot progress; waiting on {stuck[:4]}")
            now = self.events[0][0]
            while self.events and self.events[0][0] == now:
                _, _prio, _seq, payload = heapq.heappop(self.events)
                self._handle(now, payload)
                if self.finished_ops == len(self.ops):
                    break
            if self.finished_ops == len(self.ops):
                break
            self._start_pass(now)
        return self._finish(now)

    def _handle(self, now, payload):
        kind = payload[0]
        if kind == "op_finish":
            self._finish_op(now, payload[1])
        elif kind == "xfer_finish":
            xfer, epoch = payload[1], payload[2]
            if xfer.epoch == epoch and xfer.end == now:
                self._finish_xfer(now, xfer)
        elif kind == "latency_done":
            xfer, epoch = payload[1], payload[2]
            if xfer.epoch == epoch:
                self._fluid_join(now, xfer)
        elif kind == "fluid_tick":
            res, epoch = payload[1], payload[2]
            if res.epoch == epoch:
                self._fluid_settle(now, res)
        elif kind == "topology":
            self._apply_topology_event(now, payload[1])

    # ------------------------------------------------------------- starts

    def _start_pass(self, now):
        progress = True
        while progress:
            progress = False
            if self.pending_xfers:
                progress |= self._start_transfers(now)
            if self.pending_ops:
                progress |= self._start_ops(now)

    def _group_allows(self, xfer):
        if xfer.group is None:
            return True
        active_link, count = self.group_active[xfer.group]
        return count == 0 or active_link == xfer.resource.link_id

    def _group_acquire(self, xfer):
        if xfer.group is None:
            return
        _link, count = self.group_active[xfer.group]
        self.group_active[xfer.group] = (xfer.resource.link_id, count + 1)

    def _group_release(self, xfer):
        if xfer.group is None:
            return
        link, count = self.group_active[xfer.group]
        self.group_active[xfer.group] = (link if count > 1 else None, count - 1)

    def _start_transfers(self, now):
        started = False
        for ekey in sorted(self.pending_xfers, key=lambda k: (self.ready_xfer[k], k)):
            xfer = self.transfers[ekey]
            if self.ready_xfer[ekey] > now:
                continue
            res = xfer.resource
            if res.link_id not in self.bw:
                raise PlacementError(f"transfer {ekey} needs removed link {res.link_id}")
            if not self._group_allows(xfer):
                continue
            if self.policy.bandwidth == POLICY_EXCLUSIVE:
                if res.active is not None:
                    continue
                self._start_exclusive(now, xfer)
            else:
                self._start_fluid(now, xfer)
            self.pending_xfers.remove(ekey)
            started = True
        return started

    def _start_exclusive(self, now, xfer):
        alpha = self.latency[xfer.resource.link_id]
        bw = self.bw[xfer.resource.link_id]
        xfer.start = now
        xfer.latency_end = now + alpha
        xfer.bw = bw
        xfer.end = xfer.latency_end + (ceil_div(xfer.size * NS_PER_S, bw) if xfer.size else 0)
        xfer.resource.active = xfer
        self._group_acquire(xfer)
        self._log(now, "transfer_start", _edge_label(xfer.edge_key))
        xfer.epoch += 1
        self._push(xfer.end, 0, ("xfer_finish", xfer, xfer.epoch))

    def _start_fluid(self, now, xfer):
        alpha = self.latency[xfer.resource.link_id]
        xfer.start = now
        xfer.latency_end = now + alpha
        xfer.remaining = Fraction(xfer.size)
        xfer.resource.latency_waiting += 1
        self._group_acquire(xfer)
        self._log(now, "transfer_start", _edge_label(xfer.edge_key))
        xfer.epoch += 1
        self._push(xfer.latency_end, 0, ("latency_done", xfer, xfer.epoch))

    def _start_ops(self, now):
        started = False
        by_dev: dict[str, list[OpKey]] = {}
        for key in self.pending_ops:
            if self.ready_at[key] <= now:
                by_dev.setdefault(self.op_dev[key], []).append(key)
        for dev in sorted(by_dev):
            if dev in self.dev_removed:
                raise PlacementError(f"operator {by_dev[dev][0]} waiting on removed device {dev}")
            if self.dev_avail[dev] > now or self.dev_free[dev] > now:
                continue
            key = min(by_dev[dev], key=lambda k: (self.ready_at[k], k))
            duration = self._duration(now, key)
            end = now + duration
            self.dev_free[dev] = end
            self.pending_ops.remove(key)
            self.schedule.ops[key] = OpSlot(dev, now, end)
            self._log(now, "op_start", _op_label(key))
            if duration == 0:
                self._finish_op(end, key)
            else:
                self._push(end, 0, ("op_finish", key))
            started = True
        return started

    def _duration(self, now, key):
        op = self.ops[key]
        if not op.is_collective:
            return self.cost.exec_time_ns(op, self.universe[self.op_dev[key]])
        return self._collective_duration(op, self.op_dev[key])

    def _collective_duration(self, op, dev):
        volume = wire_volume(op)
        best = None
        for (lid, src, dst), _res in sorted(self.resources.items()):
            if lid not in self.bw or src != dev:
                continue
            cand = (-self.bw[lid], self.latency[lid], lid)
            if best is None or cand < best:
                best = cand
        if best is None:
            return 0
        bw, alpha = -best[0], best[1]
        if volume == 0:
            return alpha
        return alpha + ceil_frac(volume * NS_PER_S / bw)

    # ------------------------------------------------------------- finishes

    def _finish_op(self, now, key):
        slot = self.schedule.ops[key]
        if slot.end_ns != now:
            self.schedule.ops[key] = OpSlot(slot.device, slot.start_ns, now)
        self.finished_ops += 1
        self._log(now, "op_end", _op_label(key))
        for ekey, edge, dst in self.out_edges[key]:
            if ekey in self.transfers:
                self.ready_xfer[ekey] = now
                self.pending_xfers.append(ekey)
            else:
                self._feed(dst, now)

    def _finish_xfer(self, now, xfer):
        res = xfer.resource
        if self.policy.bandwidth == POLICY_EXCLUSIVE:
            res.active = None
        else:
            if xfer in res.draining:
                res.draining.remove(xfer)
        self._group_release(xfer)
        self.schedule.transfers[xfer.edge_key] = TransferSlot(res.link_id, xfer.start, now)
        self._log(now, "transfer_end", _edge_label(xfer.edge_key))
        model, _src, dst = xfer.edge_key
        self._feed((model, dst), now)

    def _feed(self, dst_key, now):
        self.ready_at[dst_key] = max(self.ready_at[dst_key], now)
        self.unmet[dst_key] -= 1
        if self.unmet[dst_key] == 0:
            self.pending_ops.append(dst_key)

    # ------------------------------------------------------------- fluid mechanics

    def _fluid_join(self, now, xfer):
        res = xfer.resource
        self._fluid_drain(now, res)
        res.latency_waiting -= 1
        if xfer.remaining <= 0:
            xfer.end = now
            self._finish_xfer(now, xfer)
        else:
            res.draining.append(xfer)
        self._fluid_reschedule(now, res)

    def _fluid_drain(self, now, res):
        elapsed = now - res.last_update
        if elapsed > 0 and res.draining:
            share = Fraction(elapsed * self.bw[res.link_id], len(res.draining) * NS_PER_S)
            for tr in res.draining:
                tr.remaining -= share
        res.last_update = now

    def _fluid_settle(self, now, res):
        self._fluid_drain(now, res)
        done = [tr for tr in res.draining if tr.remaining <= 0]
        for tr in sorted(done, key=lambda t: t.edge_key):
            tr.end = now
            self._finish_xfer(now, tr)
        self._fluid_reschedule(now, res)

    def _fluid_reschedule(self, now, res):
        res.epoch += 1
        res.last_update = now
        if not res.draining:
            return
        bw = self.bw[res.link_id]
        n = len(res.draining)
        soonest = min(tr.remaining for tr in res.draining)
        tick = now + max(1, ceil_frac(soonest * n * NS_PER_S / bw))
        self._push(tick, 0, ("fluid_tick", res, res.epoch))

    # ------------------------------------------------------------- topology events

    def _apply_topology_event(self, now, ev):
        if ev.kind == EVENT_BANDWIDTH_CHANGE:
            if ev.link_id not in self.bw:
                raise PlacementError(f"event {ev.describe()} targets missing link")
            old = self.bw[ev.link_id]
            self.bw[ev.link_id] = ev.bandwidth
            self._log(now, "event_applied", ev.describe())
            for (lid, _s, _d), res in sorted(self.resources.items()):
                if lid != ev.link_id:
                    continue
                if self.policy.bandwidth == POLICY_EXCLUSIVE:
                    self._rescale_exclusive(now, res, old, ev.bandwidth)
                else:
                    self._fluid_drain_rebase(now, res, old)
        elif ev.kind == EVENT_NODE_FAIL:
            self._node_fail(now, ev)
        elif ev.kind == EVENT_NODE_JOIN:
            self.universe.setdefault(ev.device.id, ev.device)
            self.dev_avail.setdefault(ev.device.id, now)
            self.dev_free.setdefault(ev.device.id, now)
            for l in ev.links:
                self._add_link_resources(l)
                if l.conflict_group is not None:
                    self.link_group[l.id] = l.conflict_group
                    self.group_active.setdefault(l.conflict_group, (None, 0))
            self._log(now, "event_applied", ev.describe())

    def _rescale_exclusive(self, now, res, old_bw, new_bw):
        xfer = res.active
        if xfer is None:
            return
        if now < xfer.latency_end:
            xfer.end = xfer.latency_end + (ceil_div(xfer.size * NS_PER_S, new_bw) if xfer.size else 0)
        else:
            remaining = xfer.end - now
            xfer.end = now + ceil_div(remaining * old_bw, new_bw)
        xfer.bw = new_bw
        xfer.epoch += 1
        self._push(xfer.end, 0, ("xfer_finish", xfer, xfer.epoch))

    def _fluid_drain_rebase(self, now, res, old_bw):
        elapsed = now - res.last_update
        if elapsed > 0 and res.draining:
            share = Fraction(elapsed * old_bw, len(res.draining) * NS_PER_S)
            for tr in res.draining:
                tr.remaining -= share
        res.last_update = now
        self._fluid_settle(now, res)

    def _node_fail(self, now, ev):
        dev = ev.device_id
        outstanding = sorted(
            k for k, d in self.op_dev.items()
            if d == dev and (k not in self.schedule.ops or self.schedule.ops[k].end_ns > now)
        )
        pending_links = {lid for (lid, src, dst) in self.resources if dev in (src, dst)}
        blocked_xfers = sorted(
            ekey for ekey, tr in self.transfers.items()
            if tr.resource.link_id in pending_links and ekey not in self.schedule.transfers
        )
        if outstanding or blocked_xfers:
            self._log(now, "event_applied", ev.describe())
            timeline = self._partial_timeline(now)
            subjects = [_op_label(k) for k in outstanding] + [_edge_label(e) for e in blocked_xfers]
            raise NodeFailureAbort(
                f"device {dev} failed at {now} with outstanding work: {', '.join(subjects[:6])}",
                ev, self._completed_schedule(now), timeline,
            )
        self.dev_removed.add(dev)
        for key in [k for k in self.resources if dev in (k[1], k[2])]:
            del self.resources[key]
        for lid in pending_links:
            still = any(k[0] == lid for k in self.resources)
            if not still:
                self.bw.pop(lid, None)
        self._log(now, "event_applied", ev.describe())

    # ------------------------------------------------------------- output

    def _log(self, t, kind, subject):
        self.log.append((t, kind, subject))

    def _completed_schedule(self, now):
        done = Schedule()
        done.ops = {k: s for k, s in self.schedule.ops.items() if s.end_ns <= now}
        done.transfers = {k: s for k, s in self.schedule.transfers.items() if s.end_ns <= now}
        return done

    def _partial_timeline(self, now):
        tl = Timeline(log=list(self.log))
        done = self._completed_schedule(now)
        for model in sorted(self.w.graph_map):
            ends = [s.end_ns for k, s in done.ops.items() if k[0] == model]
            tl.completions[model] = max([self.floors.get(model, 0)] + ends)
        tl.objective = weighted_objective(tl, self.w)
        return tl

    def _finish(self, now):
        tl = Timeline(log=list(self.log))
        for model in sorted(self.w.graph_map):
            ends = [s.end_ns for k, s in self.schedule.ops.items() if k[0] == model]
            tl.completions[model] = max(ends + [self.floors.get(model, 0)])
        tl.objective = weighted_objective(tl, self.w)
        return self.schedule, tl


def simulate(assignment: Assignment, w: Workload, t: Topology, m: CostModel,
             policy: SimPolicy = SimPolicy(), *, scope=None, start_time_ns: int = 0,
             completion_floors=None, reserved_memory=None) -> tuple[Schedule, Timeline]:
    """Execute an assignment and derive every start/end time.

    Raises MemoryInfeasibleError when the static per-device memory
    check fails, PlacementError on structural assignment defects, and
    NodeFailureAbort (carrying the partial timeline) when a node_fail
    event hits a device with outstanding work.
    """
    eng = _Engine(assignment, w, t, m, policy, scope=scope,
                  start_time_ns=start_time_ns, completion_floors=completion_floors,
                  reserved_memory=reserved_memory)
    return eng.run()


def _op_label(key: OpKey) -> str:
    return f"{key[0]}/{key[1]}"


def _edge_label(key: EdgeKey) -> str:
    return f"{key[0]}/{key[1]}->{key[2]}"


# ---------------------------------------------------------------- checker


def check_constraints(s: Schedule, w: Workload, t: Topology,
                      policy: SimPolicy = SimPolicy()) -> list[Violation]:
    """Re-check a schedule against every constraint from scratch.

    Independent of the simulator: uses only the schedule, workload and
    topology. Empty result means the schedule is feasible under the
    given bandwidth policy.
    """
    out: list[Violation] = []
    universe = _device_universe(t)
    avail, removed = _availability(t)
    bw_history, link_spans = _link_history(t)
    group_of_link = dict(t.group_of_link)
    for ev in t.events:
        if ev.kind == EVENT_NODE_JOIN:
            for l in ev.links:
                if l.conflict_group is not None:
                    group_of_link.setdefault(l.id, l.conflict_group)

    scoped_ops = {k: slot for k, slot in s.ops.items()}
    for key, slot in sorted(scoped_ops.items()):
        label = _op_label(key)
        op = w.op(key) if key[0] in w.graph_map and key[1] in w.graph_map[key[0]].op_map else None
        if slot.device not in universe:
            out.append(Violation("placement", (label, slot.device), slot.start_ns, 0, 0))
            continue
        if op is not None and op.pinned_device not in (None, slot.device):
            out.append(Violation("placement", (label, slot.device), slot.start_ns, 0, 0))
        a = avail.get(slot.device, UNAVAILABLE)
        r = removed.get(slot.device, UNAVAILABLE)
        if slot.start_ns < a:
            out.append(Violation("dead_device", (label, slot.device), slot.start_ns, slot.start_ns, a))
        if slot.end_ns > r:
            out.append(Violation("dead_device", (label, slot.device), r, slot.end_ns, r))

    per_resource: dict[tuple[str, str, str], list[tuple[EdgeKey, TransferSlot, int]]] = {}
    per_group: dict[str, list[tuple[str, int, int, str]]] = {}
    for model_id, e in w.all_edges:
        src, dst = (model_id, e.src), (model_id, e.dst)
        if src not in scoped_ops or dst not in scoped_ops:
            continue
        su, sv = scoped_ops[src], scoped_ops[dst]
        ekey: EdgeKey = (model_id, e.src, e.dst)
        elabel = _edge_label(ekey)
        if su.device == sv.device:
            if sv.start_ns < su.end_ns:
                out.append(Violation("dependency", (elabel,), sv.start_ns, sv.start_ns, su.end_ns))
            continue
        slot = s.transfers.get(ekey)
        if slot is None:
            out.append(Violation("placement", (elabel,), sv.start_ns, 0, 0))
            continue
        link = _find_link(t, slot.link)
        if link is None or not link.connects(su.device, sv.device):
            out.append(Violation("placement", (elabel, slot.link), slot.start_ns, 0, 0))
            continue
        if slot.start_ns < su.end_ns:
            out.append(Violation("comm_order", (elabel,), slot.start_ns, slot.start_ns, su.end_ns))
        if sv.start_ns < max(su.end_ns, slot.end_ns):
            out.append(Violation("dependency", (elabel,), sv.start_ns, sv.start_ns,
                                 max(su.end_ns, slot.end_ns)))
        span = link_spans.get(slot.link, (0, UNAVAILABLE))
        if slot.start_ns < span[0] or slot.end_ns > span[1]:
            out.append(Violation("dead_device", (elabel, slot.link), slot.start_ns,
                                 slot.end_ns, span[1]))
        per_resource.setdefault((slot.link, su.device, sv.device), []).append(
            (ekey, slot, e.size_bytes))
        group = group_of_link.get(slot.link)
        if group is not None:
            per_group.setdefault(group, []).append((slot.link, slot.start_ns, slot.end_ns, elabel))

    out.extend(_memory_violations(s, w, universe))
    out.extend(_bandwidth_violations(per_resource, t, bw_history, policy))
    out.extend(_group_violations(per_group))
    return out


def _find_link(t: Topology, link_id: str):
    link = t.link_map.get(link_id)
    if link is not None:
        return link
    for ev in t.events:
        if ev.kind == EVENT_NODE_JOIN:
            for l in ev.links:
                if l.id == link_id:
                    return l
    return None


def _link_history(t: Topology):
    """Per link: bandwidth step function [(time, bw), ...] and lifespan."""
    history: dict[str, list[tuple[int, int]]] = {l.id: [(0, l.bandwidth)] for l in t.links}
    spans: dict[str, tuple[int, int]] = {l.id: (0, UNAVAILABLE) for l in t.links}
    devices = {d.id for d in t.devices}
    incident: dict[str, set[str]] = {l.id: {l.src, l.dst} for l in t.links}
    for ev in t.events:
        if ev.kind == EVENT_BANDWIDTH_CHANGE and ev.link_id in history:
            history[ev.link_id].append((ev.at_time_ns, ev.bandwidth))
        elif ev.kind == EVENT_NODE_JOIN:
            devices.add(ev.device.id)
            for l in ev.links:
                history[l.id] = [(ev.at_time_ns, l.bandwidth)]
                spans[l.id] = (ev.at_time_ns, UNAVAILABLE)
                incident[l.id] = {l.src, l.dst}
        elif ev.kind == EVENT_NODE_FAIL:
            for lid, ends in incident.items():
                if ev.device_id in ends and spans.get(lid, (0, 0))[1] == UNAVAILABLE:
                    spans[lid] = (spans[lid][0], ev.at_time_ns)
    return history, spans


def _memory_violations(s: Schedule, w: Workload, universe) -> list[Violation]:
    usage: dict[str, int] = {}
    for op in w.all_ops:
        slot = s.ops.get(op.key)
        if slot is None:
            continue
        usage[slot.device] = usage.get(slot.device, 0) + op.mem_op
    for model_id, e in w.all_edges:
        dst = s.ops.get((model_id, e.dst))
        if dst is None or s.ops.get((model_id, e.src)) is None:
            continue
        usage[dst.device] = usage.get(dst.device, 0) + e.mem_data_bytes
    out = []
    for dev, used in sorted(usage.items()):
        cap = universe[dev].mem_capacity if dev in universe else 0
        if used > cap:
            out.append(Violation("memory", (dev,), 0, used, cap))
    return out


def _bandwidth_violations(per_resource, t, bw_history, policy) -> list[Violation]:
    out = []
    for rkey, entries in sorted(per_resource.items()):
        link_id = rkey[0]
        if policy.bandwidth == POLICY_EXCLUSIVE:
            ordered = sorted(entries, key=lambda p: (p[1].start_ns, p[0]))
            for (k1, s1, _), (k2, s2, _) in zip(ordered, ordered[1:]):
                if s2.start_ns < s1.end_ns:
                    out.append(Violation("bandwidth", (_edge_label(k1), _edge_label(k2)),
                                         s2.start_ns, s2.start_ns, s1.end_ns))
        else:
            out.extend(_fluid_capacity_violations(link_id, entries, t, bw_history))
    return out


def _fluid_capacity_violations(link_id, entries, t, bw_history) -> list[Violation]:
    link = _find_link(t, link_id)
    alpha = link.latency_ns if link else 0
    jobs = []
    for ekey, slot, size in entries:
        release = slot.start_ns + alpha
        if slot.end_ns < release:
            return [Violation("bandwidth", (_edge_label(ekey),), slot.start_ns,
                              slot.end_ns - slot.start_ns, alpha)]
        jobs.append((release, slot.end_ns, size, ekey))
    steps = bw_history.get(link_id, [(0, link.bandwidth if link else 1)])
    out = []
    releases = sorted({j[0] for j in jobs})
    deadlines = sorted({j[1] for j in jobs})
    for a in releases:
        for b in deadlines:
            if b <= a:
                continue
            demand = sum(size for r, d, size, _ in jobs if r >= a and d <= b)
            if demand == 0:
                continue
            if Fraction(demand) > _capacity_bytes(steps, a, b):
                inside = tuple(_edge_label(k) for r, d, _sz, k in jobs if r >= a and d <= b)
                out.append(Violation("bandwidth", inside, a, demand,
                                     float(_capacity_bytes(steps, a, b))))
    return out


def _capacity_bytes(steps, a, b) -> Fraction:
    total = Fraction(0)
    for i, (t0, bw) in enumerate(steps):
        t1 = steps[i + 1][0] if i + 1 < len(steps) else None
        lo = max(a, t0)
        hi = b if t1 is None else min(b, t1)
        if hi > lo:
            total += Fraction((hi - lo) * bw, NS_PER_S)
    return total


def _group_violations(per_group) -> list[Violation]:
    out = []
    for group, entries in sorted(per_group.items()):
        ordered = sorted(entries, key=lambda p: (p[1], p[3]))
        for i, (l1, s1, e1, n1) in enumerate(ordered):
            for l2, s2, e2, n2 in ordered[i + 1:]:
                if s2 >= e1:
                    break
                if l1 != l2:
                    out.append(Violation("conflict_group", (group, n1, n2), s2, s2, e1))
    return out
