"""Dense tensors, the gradient tape and the arithmetic primitives behind the operators."""

import threading
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from fluxamba.config import Precision
from fluxamba.exceptions import DimensionError, GradientError, NumericError

DTYPES = {Precision.f32: np.float32, Precision.f64: np.float64}

BackwardRule = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_local = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def active_tape() -> "Tape | None":
    """Return the innermost tape entered on this thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Dense n-dimensional array of f32 or f64 values.

    Row-major and contiguous. Operators never mutate their inputs; they return
    new tensors and, while a tape is active, record how to differentiate them.

    Attributes:
        data: The numpy buffer holding the values.
        requires_grad: Whether gradients flow into this tensor.
        grad: Accumulated gradient after backward, same shape as data.
    """

    __slots__ = ("data", "requires_grad", "grad")
    __array_priority__ = 100

    def __init__(self, data, dtype: Precision | str | None = None, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(np.float32)
        else:
            arr = np.asarray(data, dtype=DTYPES[Precision(dtype)])
        self.data = np.array(arr, copy=None, order="C")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def precision(self) -> Precision:
        return Precision.f64 if self.data.dtype == np.float64 else Precision.f32

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def astype(self, dtype: Precision | str) -> "Tensor":
        """Return a detached copy in the requested precision."""
        return Tensor(self.data, dtype=dtype, requires_grad=self.requires_grad)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.precision}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


@dataclass(eq=False)
class TapeEntry:
    """One recorded operation: its inputs, its output and how to pull gradients back."""

    name: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardRule


class Tape:
    """Ordered record of differentiable operations.

    Entering the tape as a context manager makes it the recording target for
    every operator executed on this thread. Entries are appended in execution
    order, so the list is always topologically sorted.
    """

    def __init__(self) -> None:
        self.entries: list[TapeEntry] = []
        self.consumed = False

    def record(self, name: str, inputs: tuple[Tensor, ...], output: Tensor, rule: BackwardRule) -> None:
        self.entries.append(TapeEntry(name=name, inputs=inputs, output=output, backward=rule))

    def reset(self) -> None:
        self.entries.clear()
        self.consumed = False

    def __len__(self) -> int:
        return len(self.entries)

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tape_stack().pop()


def apply_op(name: str, inputs: Sequence[Tensor], out_data: np.ndarray, rule: BackwardRule) -> Tensor:
    """Wrap a forward result and record it on the active tape when gradients are needed.

    Args:
        name: Operator name, used in error messages.
        inputs: Tensors the result depends on, in the order the rule returns gradients.
        out_data: Forward result.
        rule: Maps the output gradient to one gradient (or None) per input.

    Returns:
        The output tensor.

    Raises:
        NumericError: If the forward result contains NaN or Inf.
    """
    out_data = np.asarray(out_data)
    if not np.isfinite(out_data).all():
        raise NumericError(f"{name} produced non-finite values")
    out = Tensor(out_data)
    tape = active_tape()
    inputs = tuple(inputs)
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(name, inputs, out, rule)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(leaf) into the grad of every requires_grad leaf.

    Entries are replayed in reverse order, each exactly once.

    Args:
        loss: Scalar tensor produced while the tape was active.
        tape: The tape covering the loss's provenance.

    Raises:
        GradientError: If the loss is not scalar, is not on the tape, or the tape
            was already replayed without a reset.
    """
    if loss.size != 1:
        raise GradientError(f"loss must be scalar, got shape {loss.shape}")
    if tape.consumed:
        raise GradientError("tape was already replayed; call reset() before another backward")
    if not loss.requires_grad or not any(entry.output is loss for entry in tape.entries):
        raise GradientError("loss is detached from the tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    tensors: dict[int, Tensor] = {}
    for entry in reversed(tape.entries):
        grad = grads.pop(id(entry.output), None)
        if grad is None:
            continue
        input_grads = entry.backward(grad)
        for tensor, tensor_grad in zip(entry.inputs, input_grads, strict=True):
            if tensor_grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            tensors[key] = tensor
            grads[key] = tensor_grad if key not in grads else grads[key] + tensor_grad

    # whatever is left belongs to leaves
    for key, grad in grads.items():
        leaf = tensors[key]
        grad = grad.astype(leaf.data.dtype, copy=False).reshape(leaf.shape)
        leaf.grad = grad if leaf.grad is None else leaf.grad + grad
    tape.consumed = True


def lift(value, like: Tensor | None = None) -> Tensor:
    """Turn numbers and arrays into constant tensors matching the precision of `like`."""
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else np.float32
    return Tensor(np.asarray(value, dtype=dtype))


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary_operands(a, b) -> tuple[Tensor, Tensor]:
    like = a if isinstance(a, Tensor) else b
    a, b = lift(a, like), lift(b, like)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None
    return a, b


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return apply_op(
        "add", (a, b), a.data + b.data, lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape))
    )


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return apply_op(
        "sub", (a, b), a.data - b.data, lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape))
    )


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return apply_op(
        "mul",
        (a, b),
        a.data * b.data,
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    out = a.data / b.data
    return apply_op(
        "div",
        (a, b),
        out,
        lambda g: (unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)),
    )


def neg(x: Tensor) -> Tensor:
    return apply_op("neg", (x,), -x.data, lambda g: (-g,))


def _normalize_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    out = np.asarray(x.data.sum(axis=axes, keepdims=keepdims))

    def rule(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return apply_op("sum", (x,), out, rule)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return div(sum_(x, axis=axes, keepdims=keepdims), count)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} into {tuple(shape)}") from None
    return apply_op("reshape", (x,), out, lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))
    return apply_op(
        "transpose", (x,), np.ascontiguousarray(x.data.transpose(axes)), lambda g: (g.transpose(inverse),)
    )


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise DimensionError(f"cannot broadcast {x.shape} to {tuple(shape)}") from None
    return apply_op("broadcast_to", (x,), out, lambda g: (unbroadcast(g, x.shape),))


def getitem(x: Tensor, index) -> Tensor:
    out = np.array(x.data[index], copy=True)

    def rule(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return apply_op("getitem", (x,), out, rule)
