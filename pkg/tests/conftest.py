import pytest

from parasched import (
    ComputeGraph,
    CostModel,
    DataEdge,
    Device,
    LinkEdge,
    Operator,
    Topology,
    Workload,
)

NS = 10**9

# The T1 instance: two devices whose compute-bound rates differ 2x and four
# equal divisible operators. Optimal makespan is 3.0 s ({3, 1} split); the
# forced equal split costs 4.0 s.
T1_OP_FLOPS = 4 * 10**9
T1_FAST = 4 * 10**9
T1_SLOW = 2 * 10**9


def t1_devices():
    return (
        Device("fast0", T1_FAST, 10**12, 64 << 30, kind="fast"),
        Device("slow0", T1_SLOW, 10**12, 64 << 30, kind="slow"),
    )


def t1_op(i: int) -> Operator:
    return Operator(f"op{i:02d}", "m0", "compute", flops=T1_OP_FLOPS,
                    mem_bytes=T1_OP_FLOPS // 1000, mem_op=1 << 20)


@pytest.fixture
def t1_topology() -> Topology:
    return Topology(t1_devices(), (LinkEdge("l00", "fast0", "slow0", 10**9),))


@pytest.fixture
def t1_workload() -> Workload:
    ops = [t1_op(i) for i in range(4)]
    return Workload([ComputeGraph("m0", ops, [])], {"m0": 1.0})


@pytest.fixture
def roofline() -> CostModel:
    return CostModel()


def chain_instance():
    """A (1 s on fast0) -> 1e9 B over a 1e9 B/s link -> B (1 s on slow0)."""
    devices = t1_devices()
    topo = Topology(devices, (LinkEdge("l00", "fast0", "slow0", 10**9),))
    a = Operator("a", "m0", "compute", flops=4 * 10**9, mem_bytes=4 * 10**6)
    b = Operator("b", "m0", "compute", flops=2 * 10**9, mem_bytes=2 * 10**6)
    wl = Workload([ComputeGraph("m0", [a, b], [DataEdge("a", "b", 10**9)])], {"m0": 1.0})
    return topo, wl


def random_instance(seed, num_ops=None, num_devices=None, edge_prob=0.3,
                    with_conflict_group=False):
    """Seeded random scenario within the oracle guards."""
    import random as _random

    from parasched.scenario import gen_random_dag, scenario_from_dict

    rng = _random.Random(10_000 + seed)
    data = gen_random_dag(
        num_ops=num_ops if num_ops is not None else rng.randint(3, 6),
        edge_prob=edge_prob,
        seed=seed,
        num_devices=num_devices if num_devices is not None else rng.randint(2, 3),
        max_parallel_links=2,
        with_conflict_group=with_conflict_group,
    )
    scn = scenario_from_dict(data)
    return scn.topology, scn.workload
