"""Operator execution and transfer time prediction.

Two sources of execution time: an analytic roofline model (attainable
rate is the lesser of the memory-bound and compute-bound ceilings) and
optional profiled lookup tables with piecewise-linear interpolation.
Transfer times follow the latency + size/bandwidth form. All returned
durations sit on the integer-nanosecond grid, rounded up.
"""

from __future__ import annotations

import csv
from bisect import bisect_left
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ParaschedError, PlacementError
from .graph import KIND_COMPUTE, Operator
from .topo import Device, LinkEdge
from .units import NS_PER_S, ceil_div, ceil_frac

MODE_ROOFLINE = "roofline"
MODE_TABLE = "table_with_roofline_fallback"


@dataclass(frozen=True)
class RooflineParams:
    peak_flops: int
    peak_mem_bw: int

    @classmethod
    def from_device(cls, d: Device) -> "RooflineParams":
        return cls(peak_flops=d.peak_flops, peak_mem_bw=d.peak_mem_bw)


def arithmetic_intensity(flops: int, mem_bytes: int) -> float:
    """FLOPs per byte of global-memory traffic."""
    if mem_bytes == 0:
        raise ValueError("arithmetic intensity undefined for mem_bytes = 0")
    return flops / mem_bytes


def roofline_rate(p: RooflineParams, intensity: float) -> float:
    """Attainable FLOP/s: min of the bandwidth and compute ceilings."""
    if intensity < 0:
        raise ValueError(f"intensity must be >= 0, got {intensity}")
    return min(intensity * p.peak_mem_bw, float(p.peak_flops))


@dataclass(frozen=True)
class ProfileSample:
    flops: int
    time_ns: int


class ProfileTable:
    """Measured (flops -> time) anchors keyed by (device kind, op kind)."""

    def __init__(self, samples: dict[tuple[str, str], list[ProfileSample]]):
        self.samples: dict[tuple[str, str], tuple[ProfileSample, ...]] = {}
        for key, rows in samples.items():
            rows = sorted(rows, key=lambda s: s.flops)
            for prev, cur in zip(rows, rows[1:]):
                if cur.flops <= prev.flops:
                    raise ParaschedError(f"profile table {key}: sample flops must strictly increase")
            for s in rows:
                if s.time_ns <= 0:
                    raise ParaschedError(f"profile table {key}: times must be positive")
            self.samples[key] = tuple(rows)

    @classmethod
    def load(cls, path: str) -> "ProfileTable":
        """Read `device_kind, op_kind, flops, time_ns` rows (header optional)."""
        acc: dict[tuple[str, str], list[ProfileSample]] = {}
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                cells = [c.strip() for c in row]
                if not cells or cells[0].startswith("#"):
                    continue
                if len(cells) != 4:
                    raise ParaschedError(f"profile table row needs 4 fields, got {row}")
                try:
                    flops, time_ns = int(float(cells[2])), int(float(cells[3]))
                except ValueError:
                    continue  # header row
                acc.setdefault((cells[0], cells[1]), []).append(ProfileSample(flops, time_ns))
        return cls(acc)

    def lookup(self, device_kind: str, op_kind: str):
        return self.samples.get((device_kind, op_kind))


def _interp_ns(samples: tuple[ProfileSample, ...], flops: int) -> int:
    """Piecewise-linear in flops; nearest segment extrapolates; floor at 0."""
    keys = [s.flops for s in samples]
    i = bisect_left(keys, flops)
    if i < len(samples) and samples[i].flops == flops:
        return samples[i].time_ns
    if len(samples) == 1:
        return samples[0].time_ns
    lo = min(max(i - 1, 0), len(samples) - 2)
    a, b = samples[lo], samples[lo + 1]
    value = Fraction(a.time_ns) + Fraction((b.time_ns - a.time_ns) * (flops - a.flops), b.flops - a.flops)
    return max(0, ceil_frac(value))


@dataclass(frozen=True)
class CostModel:
    mode: str = MODE_ROOFLINE
    table: ProfileTable | None = None
    efficiency: float = 1.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ParaschedError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if self.mode not in (MODE_ROOFLINE, MODE_TABLE):
            raise ParaschedError(f"unknown cost-model mode: {self.mode}")

    def exec_time_ns(self, op: Operator, device: Device) -> int:
        """Execution time of a compute operator on a device."""
        if op.kind != KIND_COMPUTE:
            raise ParaschedError(f"exec_time_ns expects a compute operator, got {op.kind}")
        if op.flops == 0:
            return 0
        if not device.alive:
            raise PlacementError(f"operator {op.label()} placed on dead device {device.id}")
        key = (op.kind, op.flops, op.mem_bytes, device.table_kind, device.peak_flops, device.peak_mem_bw)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        out = self._exec_uncached(op, device)
        self._cache[key] = out
        return out

    def _exec_uncached(self, op: Operator, device: Device) -> int:
        if self.mode == MODE_TABLE and self.table is not None:
            samples = self.table.lookup(device.table_kind, op.kind)
            if samples:
                return _interp_ns(samples, op.flops)
        if op.mem_bytes <= 0:
            raise ValueError(f"operator {op.label()} needs mem_bytes > 0 for the roofline model")
        # Compute bound iff intensity * memBW >= peak, i.e. flops*bw >= peak*mem.
        if op.flops * device.peak_mem_bw >= device.peak_flops * op.mem_bytes:
            num, den = op.flops * NS_PER_S, device.peak_flops
        else:
            num, den = op.mem_bytes * NS_PER_S, device.peak_mem_bw
        if self.efficiency == 1.0:
            return ceil_div(num, den)
        return ceil_frac(Fraction(num) / (Fraction(self.efficiency) * den))


def comm_time_ns(size_bytes: int, link: LinkEdge, bandwidth: int | None = None) -> int:
    """Transfer time over one link: latency plus size over bandwidth.

    `bandwidth` overrides the link's declared value (snapshots under
    bandwidth-change events pass the prevailing value).
    """
    if size_bytes < 0:
        raise ValueError(f"size_bytes must be >= 0, got {size_bytes}")
    bw = link.bandwidth if bandwidth is None else bandwidth
    if size_bytes == 0:
        return link.latency_ns
    return link.latency_ns + ceil_div(size_bytes * NS_PER_S, bw)
