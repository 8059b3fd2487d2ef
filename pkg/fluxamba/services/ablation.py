"""Ablation service: build and run every component toggle combination once."""

import time
from dataclasses import dataclass

import numpy as np

from fluxamba.config import Precision
from fluxamba.costs import count_flops, count_params
from fluxamba.logger import get_logger
from fluxamba.models import ablation_lattice, ModelConfig
from fluxamba.network import build, forward
from fluxamba.numerics.tensor import Tensor

logger = get_logger(__name__)


@dataclass(frozen=True)
class AblationRow:
    toggles: dict[str, bool]
    params: int
    flops: int
    logits_shape: tuple[int, ...]
    finite: bool

    def label(self) -> str:
        return "".join("1" if on else "0" for on in self.toggles.values())


def run_ablation(
    cfg: ModelConfig, size: int, dtype: Precision | str = Precision.f32, seed: int = 42
) -> list[AblationRow]:
    """One eval forward pass on a 1×C×size×size input per toggle combination."""
    start_time = time.perf_counter()
    logger.info("running ablation lattice", extra={"variant": cfg.variant, "size": size})

    try:
        x = np.random.default_rng(seed).random((1, cfg.in_channels, size, size))
        rows = []
        for toggles, variant in ablation_lattice(cfg):
            m = build(variant, dtype)
            out = forward(m, Tensor(x, dtype=m.precision), training=False)
            finite = bool(np.isfinite(out.logits.data).all() and np.isfinite(out.m_bound.data).all())
            rows.append(
                AblationRow(toggles, count_params(m), count_flops(m, size, size), out.logits.shape, finite)
            )

        duration = time.perf_counter() - start_time
        logger.info(
            "ablation lattice finished",
            extra={
                "rows": len(rows),
                "all_finite": all(r.finite for r in rows),
                "duration": f"{duration:.4f}s",
            },
        )
        return rows
    except Exception as e:
        duration = time.perf_counter() - start_time
        logger.error(
            "ablation lattice failed",
            extra={"variant": cfg.variant, "error": str(e), "duration": f"{duration:.4f}s"},
        )
        raise
