"""Heterogeneous device clusters as temporal multi-edge graphs.

Devices are connected by parallel physical links (the multi-edge
property); links may belong to conflict groups of which at most one
member can carry an active transfer at any instant. Timed events
(bandwidth changes, node failures, node joins) turn the topology into a
time-indexed sequence of snapshots.

Links are directed internally: a bidirectional declaration behaves as
two directed edges sharing one id, one conflict-group membership, and
one bandwidth capacity per direction (full duplex).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from functools import cached_property

from .errors import EventApplicationError, Issue, ParaschedError

EVENT_BANDWIDTH_CHANGE = "bandwidth_change"
EVENT_NODE_FAIL = "node_fail"
EVENT_NODE_JOIN = "node_join"


@dataclass(frozen=True)
class Device:
    """A compute device. Rates are peak values; `kind` keys profile tables."""

    id: str
    peak_flops: int          # FLOP/s
    peak_mem_bw: int         # bytes/s
    mem_capacity: int        # bytes
    alive: bool = True
    kind: str = ""

    @property
    def table_kind(self) -> str:
        return self.kind or self.id


@dataclass(frozen=True)
class LinkEdge:
    """One physical link. Parallel links between the same pair are distinct."""

    id: str
    src: str
    dst: str
    bandwidth: int           # bytes/s, per direction
    latency_ns: int = 0
    conflict_group: str | None = None
    bidirectional: bool = True

    def connects(self, a: str, b: str) -> bool:
        """True when this link can carry traffic from a to b."""
        if self.src == a and self.dst == b:
            return True
        return self.bidirectional and self.src == b and self.dst == a


@dataclass(frozen=True)
class ConflictGroup:
    id: str
    member_links: frozenset[str]


@dataclass(frozen=True)
class TopologyEvent:
    """A timed topology change. Ordered by (at_time_ns, declaration index)."""

    at_time_ns: int
    kind: str
    link_id: str | None = None
    bandwidth: int | None = None
    device_id: str | None = None
    device: Device | None = None
    links: tuple[LinkEdge, ...] = ()

    def describe(self) -> str:
        if self.kind == EVENT_BANDWIDTH_CHANGE:
            return f"{self.kind}({self.link_id} -> {self.bandwidth} B/s) @ {self.at_time_ns}"
        if self.kind == EVENT_NODE_FAIL:
            return f"{self.kind}({self.device_id}) @ {self.at_time_ns}"
        return f"{self.kind}({self.device.id if self.device else '?'}) @ {self.at_time_ns}"


def bandwidth_change(at_time_ns: int, link_id: str, bandwidth: int) -> TopologyEvent:
    return TopologyEvent(at_time_ns, EVENT_BANDWIDTH_CHANGE, link_id=link_id, bandwidth=bandwidth)


def node_fail(at_time_ns: int, device_id: str) -> TopologyEvent:
    return TopologyEvent(at_time_ns, EVENT_NODE_FAIL, device_id=device_id)


def node_join(at_time_ns: int, device: Device, links=()) -> TopologyEvent:
    return TopologyEvent(at_time_ns, EVENT_NODE_JOIN, device=device, links=tuple(links))


@dataclass(frozen=True)
class Topology:
    """Immutable cluster description. Snapshots are independent values."""

    devices: tuple[Device, ...]
    links: tuple[LinkEdge, ...]
    conflict_groups: tuple[ConflictGroup, ...] = ()
    events: tuple[TopologyEvent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(sorted(self.devices, key=lambda d: d.id)))
        object.__setattr__(self, "links", tuple(sorted(self.links, key=lambda l: l.id)))
        merged = _merge_groups(self.conflict_groups, self.links)
        object.__setattr__(self, "conflict_groups", merged)
        ordered = tuple(sorted(enumerate(self.events), key=lambda p: (p[1].at_time_ns, p[0])))
        object.__setattr__(self, "events", tuple(ev for _, ev in ordered))

    @cached_property
    def device_map(self) -> dict[str, Device]:
        return {d.id: d for d in self.devices}

    @cached_property
    def link_map(self) -> dict[str, LinkEdge]:
        return {l.id: l for l in self.links}

    @cached_property
    def group_map(self) -> dict[str, ConflictGroup]:
        return {g.id: g for g in self.conflict_groups}

    @cached_property
    def group_of_link(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for g in self.conflict_groups:
            for lid in g.member_links:
                out[lid] = g.id
        return out

    @cached_property
    def alive_devices(self) -> tuple[Device, ...]:
        return tuple(d for d in self.devices if d.alive)

    def link_ids_between(self, d_j: str, d_k: str) -> list[str]:
        return [l.id for l in self.links if l.connects(d_j, d_k)]


def _merge_groups(declared, links) -> tuple[ConflictGroup, ...]:
    members: dict[str, set[str]] = {}
    for g in declared:
        members.setdefault(g.id, set()).update(g.member_links)
    for l in links:
        if l.conflict_group is not None:
            members.setdefault(l.conflict_group, set()).add(l.id)
    return tuple(
        ConflictGroup(gid, frozenset(m)) for gid, m in sorted(members.items())
    )


def links_between(t: Topology, d_j: str, d_k: str) -> list[LinkEdge]:
    """All parallel links able to carry traffic from d_j to d_k, id-sorted.

    Bidirectional links match either query order; parallel edges are
    never merged.
    """
    for dev in (d_j, d_k):
        if dev not in t.device_map:
            raise ParaschedError(f"unknown device: {dev}")
    return [t.link_map[lid] for lid in t.link_ids_between(d_j, d_k)]


def validate_topology(t: Topology) -> list[Issue]:
    """Structural checks. Empty report means the topology is well formed."""
    issues: list[Issue] = []
    seen_dev: set[str] = set()
    for d in t.devices:
        if d.id in seen_dev:
            issues.append(Issue("duplicate_id", d.id, "duplicate device id"))
        seen_dev.add(d.id)
        if d.peak_flops <= 0:
            issues.append(Issue("nonpositive", d.id, f"peak_flops must be > 0, got {d.peak_flops}"))
        if d.peak_mem_bw <= 0:
            issues.append(Issue("nonpositive", d.id, f"peak_mem_bw must be > 0, got {d.peak_mem_bw}"))
        if d.mem_capacity <= 0:
            issues.append(Issue("nonpositive", d.id, f"mem_capacity must be > 0, got {d.mem_capacity}"))
    seen_link: set[str] = set()
    for l in t.links:
        if l.id in seen_link:
            issues.append(Issue("duplicate_id", l.id, "duplicate link id"))
        seen_link.add(l.id)
        for end in (l.src, l.dst):
            if end not in t.device_map:
                issues.append(Issue("dangling_ref", l.id, f"endpoint references unknown device {end}"))
        if l.bandwidth <= 0:
            issues.append(Issue("nonpositive", l.id, f"bandwidth must be > 0, got {l.bandwidth}"))
        if l.latency_ns < 0:
            issues.append(Issue("nonpositive", l.id, f"latency_ns must be >= 0, got {l.latency_ns}"))
    for g in t.conflict_groups:
        if not g.member_links:
            issues.append(Issue("dangling_ref", g.id, "conflict group has no members"))
        for lid in g.member_links:
            if lid not in t.link_map:
                issues.append(Issue("dangling_ref", g.id, f"member references unknown link {lid}"))
    for ev in t.events:
        if ev.at_time_ns < 0:
            issues.append(Issue("nonpositive", ev.describe(), "event time must be >= 0"))
    issues.extend(_connectivity_issues(t))
    return issues


def _connectivity_issues(t: Topology) -> list[Issue]:
    alive = [d.id for d in t.alive_devices]
    if len(alive) <= 1:
        return []
    adj: dict[str, set[str]] = {d: set() for d in alive}
    for l in t.links:
        if l.src in adj and l.dst in adj:
            adj[l.src].add(l.dst)
            adj[l.dst].add(l.src)
    seen = {alive[0]}
    queue = deque([alive[0]])
    while queue:
        cur = queue.popleft()
        for nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    unreachable = sorted(set(alive) - seen)
    return [
        Issue("disconnected", d, "device unreachable from the rest of the initial topology")
        for d in unreachable
    ]


def apply_events_until(t: Topology, time_ns: int) -> Topology:
    """Snapshot G(time): all events with at_time <= time applied in order.

    The input topology is unmodified; the snapshot keeps the remaining
    future events so that snapshots compose.
    """
    devices = {d.id: d for d in t.devices}
    links = {l.id: l for l in t.links}
    remaining: list[TopologyEvent] = []
    for ev in t.events:
        if ev.at_time_ns > time_ns:
            remaining.append(ev)
            continue
        _apply_event(ev, devices, links)
    declared = tuple(
        ConflictGroup(g.id, frozenset(m for m in g.member_links if m in links))
        for g in t.conflict_groups
    )
    declared = tuple(g for g in declared if g.member_links)
    return Topology(
        devices=tuple(devices.values()),
        links=tuple(links.values()),
        conflict_groups=declared,
        events=tuple(remaining),
    )


def _apply_event(ev: TopologyEvent, devices: dict[str, Device], links: dict[str, LinkEdge]):
    if ev.kind == EVENT_BANDWIDTH_CHANGE:
        if ev.link_id not in links:
            raise EventApplicationError(f"event {ev.describe()} targets missing link")
        if ev.bandwidth is None or ev.bandwidth <= 0:
            raise EventApplicationError(f"event {ev.describe()} carries invalid bandwidth")
        links[ev.link_id] = replace(links[ev.link_id], bandwidth=ev.bandwidth)
    elif ev.kind == EVENT_NODE_FAIL:
        if ev.device_id not in devices:
            raise EventApplicationError(f"event {ev.describe()} targets missing device")
        devices[ev.device_id] = replace(devices[ev.device_id], alive=False)
        for lid in [lid for lid, l in links.items() if ev.device_id in (l.src, l.dst)]:
            del links[lid]
    elif ev.kind == EVENT_NODE_JOIN:
        if ev.device is None:
            raise EventApplicationError(f"event {ev.describe()} lacks a device payload")
        if ev.device.id in devices:
            raise EventApplicationError(f"event {ev.describe()} duplicates device {ev.device.id}")
        devices[ev.device.id] = ev.device
        for l in ev.links:
            if l.id in links:
                raise EventApplicationError(f"event {ev.describe()} duplicates link {l.id}")
            if l.src not in devices or l.dst not in devices:
                raise EventApplicationError(f"event {ev.describe()} link {l.id} has missing endpoint")
            links[l.id] = l
    else:
        raise EventApplicationError(f"unknown event kind: {ev.kind}")
