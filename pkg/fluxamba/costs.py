"""Parameter, FLOP and size accounting for built models."""

import numpy as np

from fluxamba import checkpoint
from fluxamba.models import CostReport
from fluxamba.network import forward, Model
from fluxamba.numerics.flops import FlopCounter
from fluxamba.numerics.tensor import Tensor


def count_params(m: Model) -> int:
    """Trainable scalars; batch-norm running stats are buffers and not counted."""
    return m.store.count()


def count_flops(m: Model, height: int, width: int) -> int:
    """Analytic FLOPs (2 per multiply-accumulate) of one eval forward pass on one image."""
    return count_flops_by_kind(m, height, width)[1]


def count_flops_by_kind(m: Model, height: int, width: int) -> tuple[dict[str, int], int]:
    x = Tensor(np.zeros((1, m.config.in_channels, height, width)), dtype=m.precision)
    with FlopCounter() as counter:
        forward(m, x, training=False)
    return dict(counter.by_kind), counter.total


def size_bytes(m: Model) -> int:
    """Serialized checkpoint size, computed from the format layout without writing."""
    return checkpoint.encoded_size(m.store.state_dict(), checkpoint.model_config_text(m))


def cost_report(m: Model, height: int, width: int) -> CostReport:
    return CostReport(params=count_params(m), flops=count_flops(m, height, width), size_bytes=size_bytes(m))
