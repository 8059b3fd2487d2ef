"""Helper functions for test utilities."""

import numpy as np

from fluxamba.numerics.tensor import backward, Tape, Tensor


def random_tensor(rng: np.random.Generator, *shape: int, low: float = -1.0, high: float = 1.0) -> Tensor:
    """Uniform f64 tensor of the given shape.

    Args:
        rng: Source of randomness.
        *shape: Tensor shape.
        low: Lower bound of the values.
        high: Upper bound of the values.

    Returns:
        A double precision tensor.
    """
    return Tensor(rng.uniform(low, high, size=shape), dtype="f64")


def tape_grads(loss_fn, *inputs: Tensor) -> list[np.ndarray]:
    """Gradients of a scalar loss with respect to each input, computed on a tape.

    Args:
        loss_fn: Builds the scalar loss from the inputs.
        *inputs: Tensors to differentiate against.

    Returns:
        One gradient array per input.
    """
    for tensor in inputs:
        tensor.requires_grad = True
        tensor.zero_grad()
    with Tape() as tape:
        loss = loss_fn(*inputs)
    backward(loss, tape)
    return [tensor.grad for tensor in inputs]
