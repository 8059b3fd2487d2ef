"""AdamW with decoupled weight decay and the polynomial learning-rate schedule."""

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from fluxamba.exceptions import ConfigError, DimensionError
from fluxamba.numerics.tensor import Tensor


@dataclass
class AdamWState:
    """First/second moment estimates per parameter name and the step counter."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: AdamWState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> AdamWState:
    """Apply one AdamW update in place.

    The decay p ← p·(1 − lr·wd) is applied to the parameter directly, never
    through the gradient. Moments are bias-corrected by 1 − βᵗ. A missing
    gradient counts as zero.

    Args:
        params: Parameters by name; their data is replaced.
        grads: Gradients by name, same shapes as the parameters.
        state: Moment state, zero-initialized on first use.
        lr: Learning rate.
        beta1: First-moment decay.
        beta2: Second-moment decay.
        eps: Denominator guard.
        weight_decay: Decoupled decay coefficient.

    Returns:
        The updated state (the same object).

    Raises:
        DimensionError: If a gradient shape differs from its parameter.
    """
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        elif grad.shape != param.shape:
            raise DimensionError(
                f"{name}: gradient shape {grad.shape} does not match parameter {param.shape}"
            )
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        decayed = param.data * (1.0 - lr * weight_decay)
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        param.data = (decayed - update).astype(param.data.dtype)
    return state


def poly_lr(base_lr: float, epoch: int, total_epochs: int, power: float = 0.9) -> float:
    """base_lr · (1 − epoch/total_epochs)^power.

    Raises:
        ConfigError: If epoch is outside [0, total_epochs].
    """
    if total_epochs <= 0 or not 0 <= epoch <= total_epochs:
        raise ConfigError(f"epoch {epoch} is outside 0..{total_epochs}")
    return base_lr * (1.0 - epoch / total_epochs) ** power
