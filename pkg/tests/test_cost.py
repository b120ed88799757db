import random

import pytest

from parasched import (
    CostModel,
    Device,
    LinkEdge,
    Operator,
    ProfileTable,
    RooflineParams,
    arithmetic_intensity,
    comm_time_ns,
    roofline_rate,
)
from parasched.cost import MODE_TABLE, ProfileSample
from parasched.errors import PlacementError

NS = 10**9


def compute_op(flops, mem_bytes=10**6, oid="x"):
    return Operator(oid, "m0", "compute", flops=flops, mem_bytes=mem_bytes)


def device(peak_flops, bw=10**12, alive=True):
    return Device("d", peak_flops, bw, 8 << 30, alive=alive)


class TestArithmeticIntensity:
    def test_direct_division(self):
        assert arithmetic_intensity(8 * 10**9, 2 * 10**9) == 4.0

    def test_zero_numerator(self):
        assert arithmetic_intensity(0, 10**6) == 0.0

    def test_zero_bytes_is_a_domain_error(self):
        with pytest.raises(ValueError):
            arithmetic_intensity(10**12, 0)


class TestRooflineRate:
    def test_memory_bound_branch(self):
        p = RooflineParams(10 * 10**12, 10**12)
        assert roofline_rate(p, 4.0) == 4 * 10**12

    def test_compute_bound_branch(self):
        p = RooflineParams(10 * 10**12, 10**12)
        assert roofline_rate(p, 20.0) == 10 * 10**12

    def test_equality_point_hits_the_peak(self):
        p = RooflineParams(10 * 10**12, 10**12)
        assert roofline_rate(p, 10.0) == 10 * 10**12


class TestExecTime:
    def test_t1_op_compute_bound_is_exactly_3s(self):
        # 12e9 FLOP at intensity high enough to be compute bound on a
        # 4e9 FLOP/s device takes exactly 3 s.
        op = compute_op(12 * 10**9, 12 * 10**6)
        m = CostModel()
        assert m.exec_time_ns(op, device(4 * 10**9)) == 3 * NS

    def test_zero_flops_runs_in_zero_time(self):
        m = CostModel()
        assert m.exec_time_ns(compute_op(0, 10**6), device(4 * 10**9)) == 0

    def test_memory_bound_time_is_bytes_over_bandwidth(self):
        # intensity 0.001 on a device whose knee sits at 0.004
        op = compute_op(10**6, 10**9)
        m = CostModel()
        assert m.exec_time_ns(op, device(4 * 10**9, bw=10**12)) == NS // 1000

    def test_dead_device_is_a_placement_error(self):
        m = CostModel()
        with pytest.raises(PlacementError):
            m.exec_time_ns(compute_op(10**9, 10**6), device(4 * 10**9, alive=False))

    def test_efficiency_scales_time_up(self):
        op = compute_op(12 * 10**9, 12 * 10**6)
        m = CostModel(efficiency=0.5)
        assert m.exec_time_ns(op, device(4 * 10**9)) == 6 * NS

    def test_roofline_never_beats_peak(self):
        rng = random.Random(3)
        m = CostModel()
        for _ in range(200):
            flops = rng.randint(1, 10**12)
            mem = rng.randint(1, 10**10)
            d = device(rng.choice([1, 2, 4, 8]) * 10**9, bw=rng.choice([1, 10]) * 10**11)
            got = m.exec_time_ns(compute_op(flops, mem), d)
            assert got * d.peak_flops >= flops * NS  # time >= flops/peak

    def test_monotone_in_flops(self):
        m = CostModel()
        d = device(4 * 10**9)
        times = [m.exec_time_ns(compute_op(f, 10**6), d)
                 for f in range(10**6, 10**8, 7 * 10**6)]
        assert times == sorted(times)

    def test_doubling_flops_and_bytes_doubles_time(self):
        m = CostModel()
        d = device(4 * 10**9)
        rng = random.Random(5)
        for _ in range(50):
            flops = rng.randint(1, 10**11)
            mem = rng.randint(1, 10**9)
            one = m.exec_time_ns(compute_op(flops, mem), d)
            two = m.exec_time_ns(compute_op(2 * flops, 2 * mem), d)
            assert abs(two - 2 * one) <= 1  # rounding grid


class TestProfileTable:
    def make_model(self):
        table = ProfileTable({("d", "compute"): [
            ProfileSample(10**9, 1_000_000),
            ProfileSample(2 * 10**9, 1_800_000),
        ]})
        return CostModel(mode=MODE_TABLE, table=table)

    def test_interpolates_between_anchors(self):
        m = self.make_model()
        got = m.exec_time_ns(compute_op(15 * 10**8), device(4 * 10**9))
        assert got == 1_400_000

    def test_reproduces_sample_points_exactly(self):
        m = self.make_model()
        assert m.exec_time_ns(compute_op(10**9), device(4 * 10**9)) == 1_000_000
        assert m.exec_time_ns(compute_op(2 * 10**9), device(4 * 10**9)) == 1_800_000

    def test_extrapolates_with_nearest_segment_slope(self):
        m = self.make_model()
        # slope 0.8 us per 1e9 flops beyond the last anchor
        assert m.exec_time_ns(compute_op(3 * 10**9), device(4 * 10**9)) == 2_600_000

    def test_falls_back_to_roofline_for_unknown_kinds(self):
        m = self.make_model()
        other = Device("other", 4 * 10**9, 10**12, 8 << 30)
        got = m.exec_time_ns(compute_op(12 * 10**9, 12 * 10**6), other)
        assert got == 3 * NS

    def test_monotone_given_monotone_samples(self):
        m = self.make_model()
        d = device(4 * 10**9)
        times = [m.exec_time_ns(compute_op(f), d)
                 for f in range(5 * 10**8, 4 * 10**9, 10**8)]
        assert times == sorted(times)

    def test_load_from_csv(self, tmp_path):
        path = tmp_path / "profile.csv"
        path.write_text(
            "device_kind, op_kind, flops, time_ns\n"
            "v100, compute, 1000000000, 1000000\n"
            "v100, compute, 2000000000, 1800000\n"
        )
        table = ProfileTable.load(str(path))
        assert table.lookup("v100", "compute")[0].time_ns == 1_000_000


def compute_op_default_mem(flops):
    return compute_op(flops, 10**6)


class TestCommTime:
    def link(self, bw, latency_ns=0):
        return LinkEdge("l", "a", "b", bw, latency_ns=latency_ns)

    def test_size_over_bandwidth(self):
        assert comm_time_ns(10**9, self.link(10**9)) == NS

    def test_zero_size_costs_latency_only(self):
        assert comm_time_ns(0, self.link(10**9, latency_ns=10_000)) == 10_000

    def test_alpha_beta_sum(self):
        got = comm_time_ns(4 * 10**9, self.link(100 * 10**9, latency_ns=10_000))
        assert got == 40_010_000  # 0.04001 s exactly

    def test_monotone_in_size_and_antitone_in_bandwidth(self):
        sizes = [comm_time_ns(s, self.link(10**9)) for s in range(0, 10**8, 10**7)]
        assert sizes == sorted(sizes)
        bws = [comm_time_ns(10**9, self.link(b)) for b in (1, 2, 4, 8, 16)]
        assert bws == sorted(bws, reverse=True)


def test_compute_op_with_default_mem_interp_has_no_mem_dependency():
    # table mode keys on flops only; mem_bytes is irrelevant there
    table = ProfileTable({("d", "compute"): [ProfileSample(10**9, 5)]})
    m = CostModel(mode=MODE_TABLE, table=table)
    assert m.exec_time_ns(compute_op(10**9, 123), device(1)) == 5
