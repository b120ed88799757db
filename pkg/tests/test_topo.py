import pytest

from parasched import (
    Device,
    LinkEdge,
    Topology,
    apply_events_until,
    bandwidth_change,
    links_between,
    node_fail,
    node_join,
    validate_topology,
)
from parasched.errors import EventApplicationError, ParaschedError


def dev(name, flops=4 * 10**9, alive=True):
    return Device(name, flops, 10**12, 8 << 30, alive=alive)


def test_minimal_wellformed_graph_validates_clean():
    t = Topology((dev("d1"), dev("d2")), (LinkEdge("l1", "d1", "d2", 10**9),))
    assert validate_topology(t) == []


def test_dangling_link_endpoint_is_reported():
    t = Topology((dev("d1"),), (LinkEdge("l1", "d1", "d9", 10**9),))
    report = validate_topology(t)
    assert len(report) == 1
    assert report[0].code == "dangling_ref"
    assert "d9" in report[0].message


def test_disconnected_device_is_reported_by_name():
    t = Topology(
        (dev("d1"), dev("d2"), dev("d3")),
        (LinkEdge("l1", "d1", "d2", 10**9),),
    )
    report = validate_topology(t)
    assert len(report) == 1
    assert report[0].code == "disconnected"
    assert report[0].subject == "d3"


def test_nonpositive_quantities_are_reported():
    t = Topology((Device("d1", 0, -1, 8),), ())
    codes = [i.code for i in validate_topology(t)]
    assert codes.count("nonpositive") == 2


def test_duplicate_ids_are_reported():
    t = Topology((dev("d1"), dev("d1")), ())
    assert any(i.code == "duplicate_id" for i in validate_topology(t))


class TestApplyEventsUntil:
    def test_no_events_snapshot_is_identical(self):
        t = Topology((dev("d1"), dev("d2")), (LinkEdge("l1", "d1", "d2", 10**9),))
        assert apply_events_until(t, 10) == t

    def test_bandwidth_change_applies_at_its_instant(self):
        t = Topology(
            (dev("d1"), dev("d2")),
            (LinkEdge("l1", "d1", "d2", 10**9),),
            events=(bandwidth_change(5, "l1", 50 * 10**9),),
        )
        snap = apply_events_until(t, 5)
        assert snap.link_map["l1"].bandwidth == 50 * 10**9
        before = apply_events_until(t, 4)
        assert before.link_map["l1"].bandwidth == 10**9

    def test_node_fail_marks_dead_and_removes_links(self):
        t = Topology(
            (dev("d1"), dev("d2")),
            (LinkEdge("l1", "d1", "d2", 10**9),),
            events=(node_fail(3, "d2"),),
        )
        snap = apply_events_until(t, 4)
        assert len(snap.alive_devices) == 1
        assert snap.links == ()

    def test_node_join_adds_device_and_links(self):
        t = Topology(
            (dev("d1"),),
            (),
            events=(node_join(7, dev("d2"), [LinkEdge("l1", "d1", "d2", 10**9)]),),
        )
        snap = apply_events_until(t, 7)
        assert "d2" in snap.device_map
        assert "l1" in snap.link_map

    def test_event_on_missing_target_names_the_event(self):
        t = Topology((dev("d1"),), (), events=(bandwidth_change(1, "nope", 5),))
        with pytest.raises(EventApplicationError, match="nope"):
            apply_events_until(t, 2)

    def test_snapshots_compose(self):
        t = Topology(
            (dev("d1"), dev("d2"), dev("d3")),
            (LinkEdge("l1", "d1", "d2", 10**9), LinkEdge("l2", "d2", "d3", 10**9)),
            events=(
                bandwidth_change(2, "l1", 2 * 10**9),
                node_fail(5, "d3"),
                bandwidth_change(9, "l1", 3 * 10**9),
            ),
        )
        for t1 in (0, 2, 4, 5, 8, 9, 12):
            for t2 in (t1, t1 + 1, t1 + 5, 20):
                direct = apply_events_until(t, t2)
                staged = apply_events_until(apply_events_until(t, t1), t2)
                assert direct == staged, (t1, t2)

    def test_original_topology_is_unmodified(self):
        t = Topology(
            (dev("d1"), dev("d2")),
            (LinkEdge("l1", "d1", "d2", 10**9),),
            events=(node_fail(1, "d2"),),
        )
        apply_events_until(t, 2)
        assert t.device_map["d2"].alive
        assert "l1" in t.link_map


class TestLinksBetween:
    def test_parallel_edges_stay_distinct_and_sorted(self):
        t = Topology(
            (dev("d1"), dev("d2")),
            (
                LinkEdge("nv0", "d1", "d2", 900 * 10**9),
                LinkEdge("pci0", "d1", "d2", 64 * 10**9),
            ),
        )
        got = links_between(t, "d1", "d2")
        assert [l.id for l in got] == ["nv0", "pci0"]

    def test_unconnected_pair_is_empty(self):
        t = Topology((dev("d1"), dev("d2"), dev("d3")),
                     (LinkEdge("l1", "d1", "d2", 10**9),))
        assert links_between(t, "d1", "d3") == []

    def test_bidirectional_link_matches_reverse_query(self):
        t = Topology((dev("d1"), dev("d2")), (LinkEdge("l1", "d1", "d2", 10**9),))
        assert [l.id for l in links_between(t, "d2", "d1")] == ["l1"]

    def test_unidirectional_link_only_matches_its_orientation(self):
        t = Topology(
            (dev("d1"), dev("d2")),
            (LinkEdge("l1", "d1", "d2", 10**9, bidirectional=False),),
        )
        assert [l.id for l in links_between(t, "d1", "d2")] == ["l1"]
        assert links_between(t, "d2", "d1") == []

    def test_unknown_device_raises(self):
        t = Topology((dev("d1"),), ())
        with pytest.raises(ParaschedError, match="unknown device"):
            links_between(t, "d1", "dX")


def test_multi_edge_count_matches_declared_edges():
    links = tuple(LinkEdge(f"l{i}", "d1", "d2", (i + 1) * 10**9) for i in range(3))
    t = Topology((dev("d1"), dev("d2")), links)
    assert len(links_between(t, "d1", "d2")) == 3


def test_conflict_groups_merge_declared_and_link_tags():
    t = Topology(
        (dev("d1"), dev("d2")),
        (
            LinkEdge("nv0", "d1", "d2", 900 * 10**9, conflict_group="pcie-nv"),
            LinkEdge("pci0", "d1", "d2", 64 * 10**9, conflict_group="pcie-nv"),
        ),
    )
    assert len(t.conflict_groups) == 1
    assert t.conflict_groups[0].member_links == frozenset({"nv0", "pci0"})
