"""Benchmark service: model size, FLOPs, forward latency and selective-scan scaling."""

import math
import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from fluxamba.config import Precision
from fluxamba.costs import cost_report
from fluxamba.logger import get_logger
from fluxamba.models import CostReport, ModelConfig
from fluxamba.network import build, forward, Model
from fluxamba.numerics.tensor import Tensor
from fluxamba.scan import scan_time_profile, ScanProfile

logger = get_logger(__name__)

SCAN_LENGTHS = (4096, 16384, 65536)


@dataclass
class BenchReport:
    cost: CostReport
    warmup: int
    repeat: int
    profile: ScanProfile | None = None


def warmup_runs(repeat: int) -> int:
    """⌈repeat / 10⌉ untimed passes before measuring."""
    return math.ceil(repeat / 10)


def time_forward(m: Model, size: int, repeat: int, seed: int = 42) -> list[float]:
    """Per-pass wall times of `repeat` eval forward passes on one random image, after the warm-up."""
    rng = np.random.default_rng(seed)
    x = Tensor(rng.random((1, m.config.in_channels, size, size)), dtype=m.precision)
    for _ in range(warmup_runs(repeat)):
        forward(m, x, training=False)
    timings = []
    for _ in range(repeat):
        start_time = time.perf_counter()
        forward(m, x, training=False)
        timings.append(time.perf_counter() - start_time)
    return timings


def benchmark(
    cfg: ModelConfig,
    size: int,
    repeat: int,
    dtype: Precision | str = Precision.f32,
    scan_lengths: Sequence[int] | None = SCAN_LENGTHS,
    seed: int = 42,
) -> BenchReport:
    """Cost report of `cfg` at size×size with latency statistics and an optional scan-scaling profile."""
    start_time = time.perf_counter()
    logger.info("benchmarking model", extra={"variant": cfg.variant, "size": size, "repeat": repeat})

    try:
        m = build(cfg, dtype)
        cost = cost_report(m, size, size)
        timings = time_forward(m, size, repeat, seed)
        latency_mean = float(np.mean(timings))
        cost = cost.model_copy(
            update={
                "latency_mean": latency_mean,
                "latency_median": float(np.median(timings)),
                "fps": 1.0 / latency_mean if latency_mean > 0 else None,
            }
        )
        profile = scan_time_profile(list(scan_lengths), seed=seed) if scan_lengths else None
        report = BenchReport(cost=cost, warmup=warmup_runs(repeat), repeat=repeat, profile=profile)

        duration = time.perf_counter() - start_time
        logger.info(
            "model benchmarked",
            extra={
                "params": cost.params,
                "flops": cost.flops,
                "latency_mean": f"{latency_mean:.6f}s",
                "duration": f"{duration:.4f}s",
            },
        )
        return report
    except Exception as e:
        duration = time.perf_counter() - start_time
        logger.error(
            "model benchmark failed",
            extra={"variant": cfg.variant, "error": str(e), "duration": f"{duration:.4f}s"},
        )
        raise
