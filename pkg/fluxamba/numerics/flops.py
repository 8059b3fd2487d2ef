"""Analytic FLOP formulas and a counter that operators report into.

Convention: one multiply-accumulate is two FLOPs. Only the MAC-heavy operators
report (convolution, linear maps, batched matmul, selective scan); elementwise
work is not counted.
"""

import threading
from collections import defaultdict

_local = threading.local()


def conv2d_flops(
    in_channels: int, out_channels: int, kernel_h: int, kernel_w: int, groups: int, out_h: int, out_w: int
) -> int:
    """2·Kh·Kw·(Cin/g)·Cout·H'·W' per sample."""
    return 2 * kernel_h * kernel_w * (in_channels // groups) * out_channels * out_h * out_w


def linear_flops(rows: int, in_features: int, out_features: int) -> int:
    """2·rows·Cin·Cout."""
    return 2 * rows * in_features * out_features


def matmul_flops(batch: int, m: int, k: int, n: int) -> int:
    """2·batch·m·k·n, counts both QKᵀ and AV products of attention."""
    return 2 * batch * m * k * n


def scan_flops(length: int, channels: int, state_size: int) -> int:
    """Per sample: two MACs per (c, n, t), the decayed state update and the readout.

    The Δ, B and C projections run through linear and are counted there.
    """
    return 2 * 2 * length * channels * state_size


class FlopCounter:
    """Accumulates FLOPs per operator kind while active.

    Use as a context manager; nested counters each receive every report.
    """

    def __init__(self) -> None:
        self.by_kind: dict[str, int] = defaultdict(int)

    @property
    def total(self) -> int:
        return sum(self.by_kind.values())

    def add(self, kind: str, flops: int) -> None:
        self.by_kind[kind] += int(flops)

    def __enter__(self) -> "FlopCounter":
        _counters().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _counters().remove(self)


def _counters() -> list[FlopCounter]:
    counters = getattr(_local, "counters", None)
    if counters is None:
        counters = _local.counters = []
    return counters


def report(kind: str, flops: int) -> None:
    """Add FLOPs to every active counter on this thread."""
    for counter in _counters():
        counter.add(kind, flops)
