"""Tensor engine: tensors, tape-based reverse mode, operators, parameters and optimizers."""

from fluxamba.numerics.flops import FlopCounter
from fluxamba.numerics.gradcheck import finite_diff_grad, relative_error
from fluxamba.numerics.optim import adamw_step, AdamWState, poly_lr
from fluxamba.numerics.params import ParamScope, ParamStore
from fluxamba.numerics.tensor import backward, Tape, Tensor

__all__ = [
    "AdamWState",
    "FlopCounter",
    "ParamScope",
    "ParamStore",
    "Tape",
    "Tensor",
    "adamw_step",
    "backward",
    "finite_diff_grad",
    "poly_lr",
    "relative_error",
]
