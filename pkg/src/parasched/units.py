"""Time grid and unit helpers.

Every duration and timestamp in this package is an integer number of
nanoseconds. Durations obtained from divisions round up to the grid so
that repeated runs are bit-identical across platforms.
"""

from __future__ import annotations

from fractions import Fraction

NS_PER_S = 1_000_000_000


def ceil_div(num: int, den: int) -> int:
    if den <= 0:
        raise ValueError(f"ceil_div denominator must be positive, got {den}")
    return -(-num // den)


def ceil_frac(value: Fraction) -> int:
    return -((-value.numerator) // value.denominator)


def ns_to_s(ns: float) -> float:
    return ns / NS_PER_S


def s_to_ns(seconds: float) -> int:
    return round(seconds * NS_PER_S)


_PREFIXES = [
    (1_000_000_000, "s"),
    (1_000_000, "ms"),
    (1_000, "us"),
    (1, "ns"),
]


def format_ns(ns: float) -> str:
    """Engineering-notation rendering for console output, e.g. 1.500 ms."""
    if ns == 0:
        return "0 s"
    magnitude = abs(ns)
    for scale, suffix in _PREFIXES:
        if magnitude >= scale:
            return f"{ns / scale:.3f} {suffix}"
    return f"{ns:.3f} ns"
