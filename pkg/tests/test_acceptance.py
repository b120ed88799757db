"""Acceptance suite: one test per release criterion, one PASS line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
report. Tolerances are pinned here and nowhere else.
"""

import json
import statistics
from fractions import Fraction

import pytest

from parasched import (
    Assignment,
    ComputeGraph,
    CostModel,
    DataEdge,
    Device,
    LinkEdge,
    Operator,
    ProfileTable,
    RooflineParams,
    SearchConfig,
    SearchStats,
    Solution,
    SplitSpec,
    Topology,
    Workload,
    arithmetic_intensity,
    branch_and_bound,
    brute_force_oracle,
    check_constraints,
    decompose_allreduce,
    fuse_pair,
    node_fail,
    replan,
    roofline_rate,
    simulate,
)
from parasched.cli import EXIT_INFEASIBLE, EXIT_OK, main
from parasched.cost import MODE_TABLE, ProfileSample
from parasched.graph import wire_volume
from parasched.scenario import (
    gen_hetero_cluster,
    read_json,
    scenario_from_dict,
    write_json,
)
from parasched.sim import Schedule
from parasched.topo import apply_events_until

from conftest import random_instance
from test_transform import ring_schedule_volumes

NS = 10**9
COST = CostModel()


def report(num, name):
    print(f"\n[acceptance] criterion {num} ({name}): PASS")


def plan_for(topo, wl, **kw):
    return branch_and_bound(wl, topo, COST, SearchConfig(**kw)) if kw else \
        branch_and_bound(wl, topo, COST)


def test_criterion_1_oracle_optimality():
    """Search equals the exhaustive optimum exactly on 100 seeded instances."""
    for seed in range(100):
        topo, wl = random_instance(seed)
        plan = branch_and_bound(wl, topo, COST)
        oracle = brute_force_oracle(wl, topo, COST)
        assert plan.objective == oracle.objective, f"seed {seed}"
        assert plan.vector == oracle.vector, f"seed {seed}"
        assert plan.proven
    report(1, "oracle optimality, 100 instances, exact ns equality")


def _hetero_makespans(ratio):
    data = gen_hetero_cluster(1, 1, ratio, 8 * 10**9, num_ops=16)
    scn = scenario_from_dict(data)
    plan = branch_and_bound(scn.workload, scn.topology, scn.cost_model,
                            SearchConfig(node_budget=4000))
    order = sorted(o.key for o in scn.workload.all_ops)
    equal = Assignment(
        {k: ("fast0" if i < 8 else "slow0") for i, k in enumerate(order)}, {})
    _, tl_equal = simulate(equal, scn.workload, scn.topology, scn.cost_model)
    return plan.timeline.completions["m0"], tl_equal.completions["m0"], scn


def test_criterion_2_heterogeneous_speedup_trend():
    """Planner beats the forced equal split, more so as heterogeneity grows."""
    slow = 2 * 10**9
    total_flops = 16 * 4 * 10**9
    speedups = []
    for ratio in (1.5, 2.0, 4.0):
        planned, equal, _scn = _hetero_makespans(ratio)
        aggregate_rate = slow * (1 + ratio)
        ideal_ns = total_flops / aggregate_rate * NS
        assert planned <= (1 + 1 / 16) * ideal_ns, (ratio, planned)
        speedup = equal / planned
        assert speedup >= 2 * ratio / (1 + ratio) - 1 / 16, (ratio, speedup)
        if ratio == 2.0:
            assert speedup >= 1.27
        speedups.append(speedup)
    assert speedups == sorted(speedups)  # larger heterogeneity, larger speedup
    report(2, "heterogeneous speedup trend r=1.5/2/4")


def _flip_point_scenario(bandwidth):
    devices = (
        Device("a0", 2 * 10**9, 10**12, 64 << 30),
        Device("a1", 2 * 10**9, 10**12, 64 << 30),
    )
    links = (LinkEdge("l00", "a0", "a1", int(bandwidth)),)
    ops = [
        Operator("a", "m0", "compute", flops=0, mem_bytes=1, pinned_device="a0"),
        Operator("c", "m0", "compute", flops=0, mem_bytes=1, pinned_device="a0"),
        Operator("w", "m0", "compute", flops=8 * 10**9, mem_bytes=8 * 10**6),
    ]
    edges = [DataEdge("a", "w", 8 * 10**9), DataEdge("w", "c", 8 * 10**9)]
    topo = Topology(devices, links)
    wl = Workload([ComputeGraph("m0", ops, edges)], {"m0": 1.0})
    return topo, wl


def test_criterion_3_bandwidth_sensitivity_and_planner_flip(tmp_path):
    """Fine split time is monotone in bandwidth; the planner flips variants."""
    from parasched.scenario import scenario_to_dict
    from parasched.transform import apply_provenance

    bandwidths = [1, 2, 4, 8, 16]
    fine_times = []
    for gbps in bandwidths:
        topo, wl = _flip_point_scenario(gbps * 10**9)
        fine_wl = apply_provenance(wl, ("split:w:k=2",))
        fine = Assignment(
            {("m0", "a"): "a0", ("m0", "c"): "a0",
             ("m0", "w#p0"): "a0", ("m0", "w#p1"): "a1"},
            {("m0", "a", "w#p1"): "l00", ("m0", "w#p1", "c"): "l00"},
        )
        _, tl = simulate(fine, fine_wl, topo, COST)
        fine_times.append(tl.completions["m0"])
    assert all(b <= a for a, b in zip(fine_times, fine_times[1:])), fine_times

    choices = []
    for gbps in bandwidths:
        topo, wl = _flip_point_scenario(gbps * 10**9)
        data = scenario_to_dict(topo, wl, search={
            "max_splits": 2, "allowed_counts": [1, 2], "variant_cap": 2,
            "rewrite_collectives": False, "rewrite_fusions": False,
        })
        spath = tmp_path / f"flip{gbps}.json"
        write_json(str(spath), data)
        sol = tmp_path / f"flip{gbps}.solution.json"
        assert main(["plan", str(spath), "-o", str(sol)]) == EXIT_OK
        tags = read_json(str(sol))["provenance"]
        choices.append("fine" if "split:w:k=2" in tags else "coarse")
    assert "coarse" in choices and "fine" in choices, choices
    flip = choices.index("fine")
    assert all(c == "coarse" for c in choices[:flip])
    assert all(c == "fine" for c in choices[flip:])
    report(3, f"bandwidth sensitivity: monotone, flip at {bandwidths[flip]} GB/s")


def test_criterion_4_constraint_soundness():
    """Every plan and replan in the randomized suite passes the checker."""
    checked = 0
    for seed in range(40):
        topo, wl = random_instance(seed)
        sol = branch_and_bound(wl, topo, COST)
        assert check_constraints(sol.schedule, sol.workload, topo) == [], seed
        checked += 1
    for seed in range(6):
        topo, wl = random_instance(seed, num_devices=3)
        sol = branch_and_bound(wl, topo, COST)
        victim = sorted(d.id for d in topo.devices)[-1]
        event = node_fail(0, victim)
        after = apply_events_until(
            Topology(topo.devices, topo.links, topo.conflict_groups, (event,)), 0)
        try:
            newsol = replan(sol, event, Schedule(), wl, after, COST)
        except Exception:
            continue
        assert check_constraints(newsol.schedule, newsol.workload, after) == [], seed
        checked += 1
    assert checked >= 40
    report(4, f"constraint soundness over {checked} solutions, 0 violations")


def test_criterion_5_determinism_and_worker_invariance(tmp_path):
    """Identical plans for any worker count; byte-identical repeat runs."""
    for seed in range(20):
        topo, wl = random_instance(seed + 500)
        runs = [branch_and_bound(wl, topo, COST, SearchConfig(workers=w))
                for w in (1, 2, 8)]
        assert len({r.objective for r in runs}) == 1, seed
        assert len({r.vector for r in runs}) == 1, seed
    scenario = tmp_path / "t1.json"
    write_json(str(scenario), gen_hetero_cluster(1, 1, 2.0, 10**9))
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert main(["plan", str(scenario), "-o", str(out), "--workers", "8"]) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    plans = []
    for w in (1, 2, 8):
        out = tmp_path / f"w{w}.json"
        assert main(["plan", str(scenario), "-o", str(out), "--workers", str(w)]) == EXIT_OK
        data = read_json(str(out))
        plans.append((data["objective_weighted_ns"], data["assignment"], data["links"]))
    assert plans.count(plans[0]) == 3
    report(5, "worker invariance (20 instances) + bytewise repeat runs")


def test_criterion_6_pruning_effectiveness():
    """Bounded search expands strictly fewer nodes than the oracle has leaves."""
    ratios = []
    for seed in range(12):
        topo, wl = random_instance(seed + 900, num_ops=6, num_devices=3)
        plan = branch_and_bound(wl, topo, COST)
        oracle = brute_force_oracle(wl, topo, COST)
        assert plan.objective == oracle.objective
        assert plan.stats.nodes_expanded < oracle.stats.leaves_enumerated, seed
        ratios.append(plan.stats.nodes_expanded / oracle.stats.leaves_enumerated)
    median = statistics.median(ratios)
    assert median < 1.0
    report(6, f"pruning: expanded < leaves on 12/12, median ratio {median:.4f}")


def test_criterion_7_replanning(tmp_path):
    """T1 failure replans to 4 s; stranding failures exit infeasible."""
    data = gen_hetero_cluster(1, 1, 2.0, 10**9)
    scn = scenario_from_dict(data)
    prev = branch_and_bound(scn.workload, scn.topology, scn.cost_model)
    assert prev.objective == 3.0 * NS
    event = node_fail(0, "slow0")
    after = apply_events_until(
        Topology(scn.topology.devices, scn.topology.links,
                 scn.topology.conflict_groups, (event,)), 0)
    sol = replan(prev, event, Schedule(), scn.workload, after, scn.cost_model)
    assert sol.objective == 4.0 * NS

    tight = gen_hetero_cluster(1, 1, 2.0, 10**9, num_ops=1)
    tight["workload"]["models"][0]["operators"][0]["mem_op_bytes"] = 32 << 30
    tight["topology"]["devices"][1]["mem_capacity_bytes"] = 1 << 20
    spath = tmp_path / "tight.json"
    write_json(str(spath), tight)
    sol_path = tmp_path / "sol.json"
    assert main(["plan", str(spath), "-o", str(sol_path)]) == EXIT_OK
    events = tmp_path / "ev.json"
    events.write_text(json.dumps(
        {"events": [{"at_time_ns": 0, "kind": "node_fail", "device": "fast0"}]}))
    code = main(["replay", str(spath), str(sol_path), str(events)])
    assert code == EXIT_INFEASIBLE == 4
    report(7, "replanning: T1 -> 4.0 s, stranded operator -> exit 4")


def test_criterion_8_cost_model_units():
    """Roofline, intensity, and table anchors reproduce exactly."""
    assert arithmetic_intensity(8 * 10**9, 2 * 10**9) == 4.0
    assert arithmetic_intensity(0, 10**6) == 0.0
    p = RooflineParams(10 * 10**12, 10**12)
    assert roofline_rate(p, 4.0) == 4 * 10**12
    assert roofline_rate(p, 20.0) == 10 * 10**12
    assert roofline_rate(p, 10.0) == 10 * 10**12
    dev = Device("d", 4 * 10**9, 10**12, 8 << 30)
    t1op = Operator("t", "m0", "compute", flops=12 * 10**9, mem_bytes=12 * 10**6)
    assert COST.exec_time_ns(t1op, dev) == 3 * NS
    table_model = CostModel(mode=MODE_TABLE, table=ProfileTable({("d", "compute"): [
        ProfileSample(10**9, 1_000_000), ProfileSample(2 * 10**9, 1_800_000)]}))
    assert table_model.exec_time_ns(
        Operator("q", "m0", "compute", flops=10**9, mem_bytes=1), dev) == 1_000_000
    assert table_model.exec_time_ns(
        Operator("q", "m0", "compute", flops=2 * 10**9, mem_bytes=1), dev) == 1_800_000
    assert table_model.exec_time_ns(
        Operator("q", "m0", "compute", flops=15 * 10**8, mem_bytes=1), dev) == 1_400_000
    g = ComputeGraph("m0", [
        Operator("u", "m0", "compute", flops=10**9, mem_bytes=10**9),
        Operator("v", "m0", "compute", flops=10**9, mem_bytes=10**9),
    ], [DataEdge("u", "v", 400_000_000)])
    fused = fuse_pair(g, "u", "v").op_map["u+v"]
    # the fused-chain intensity is exactly 5/3 (1.667 at display precision)
    assert abs(arithmetic_intensity(fused.flops, fused.mem_bytes) - 5 / 3) <= 1e-9
    report(8, "cost-model units exact, fused intensity 1.667")


def test_criterion_9_collective_decomposition():
    """Phase volumes equal the explicit ring schedule, exactly."""
    for n in range(2, 9):
        for payload in (1_000_000, 4_000_000):
            ar = Operator("ar0", "m0", "all_reduce", mem_bytes=payload, participants=n)
            g = decompose_allreduce(ComputeGraph("m0", [ar], []), "ar0", n)
            per_device = Fraction(sum(ring_schedule_volumes(n, payload)), n)
            assert wire_volume(g.op_map["ar0.rs"]) == per_device, (n, payload)
            assert wire_volume(g.op_map["ar0.ag"]) == per_device, (n, payload)
    report(9, "ring decomposition volumes exact for n in 2..8")


def test_criterion_10_conflict_groups():
    """No two transfers within one conflict group ever overlap."""
    groups_seen = 0
    for seed in range(25):
        topo, wl = random_instance(seed + 300, with_conflict_group=True)
        assert topo.conflict_groups, "suite must inject a conflict group"
        sol = branch_and_bound(wl, topo, COST)
        violations = check_constraints(sol.schedule, sol.workload, topo)
        assert violations == [], seed
        for group in topo.conflict_groups:
            members = set(group.member_links)
            spans = [
                (slot.start_ns, slot.end_ns, slot.link)
                for slot in sol.schedule.transfers.values()
                if slot.link in members
            ]
            spans.sort()
            for (s1, e1, l1), (s2, e2, l2) in zip(spans, spans[1:]):
                if l1 != l2:
                    assert s2 >= e1, (seed, group.id)
            groups_seen += 1
    assert groups_seen >= 25
    report(10, f"conflict groups respected across {groups_seen} grouped timelines")
