"""Named parameter storage with dotted scopes and seeded initializers."""

from collections.abc import Iterator, Mapping

import numpy as np

from fluxamba.config import Precision
from fluxamba.exceptions import ConfigError, DimensionError
from fluxamba.numerics.tensor import DTYPES, Tensor


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform(−1/sqrt(fan_in), 1/sqrt(fan_in)).

    This is the default convolution/linear initialization of the common deep
    learning frameworks (Kaiming-uniform with a = sqrt(5)).
    """
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class ParamStore:
    """Flat registry of trainable parameters and non-trainable buffers.

    Names are dotted paths such as ``stage1.block0.asg.gate.weight``. Iteration
    order is registration order, which is deterministic for a given config.

    Attributes:
        params: Trainable tensors by name.
        buffers: Non-trainable tensors (batch-norm running stats) by name.
        dtype: Precision every tensor is created in.
    """

    def __init__(self, seed: int = 42, dtype: Precision | str = Precision.f32) -> None:
        self.rng = np.random.default_rng(seed)
        self.dtype = Precision(dtype)
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, Tensor] = {}

    def scope(self, prefix: str) -> "ParamScope":
        return ParamScope(self, prefix)

    def _check_new(self, name: str) -> None:
        if name in self.params or name in self.buffers:
            raise ConfigError(f"parameter {name!r} registered twice")

    def add_param(self, name: str, values: np.ndarray) -> Tensor:
        self._check_new(name)
        tensor = Tensor(values, dtype=self.dtype, requires_grad=True)
        self.params[name] = tensor
        return tensor

    def add_buffer(self, name: str, values: np.ndarray) -> Tensor:
        self._check_new(name)
        tensor = Tensor(values, dtype=self.dtype)
        self.buffers[name] = tensor
        return tensor

    def named_tensors(self) -> Iterator[tuple[str, Tensor]]:
        """Parameters first, then buffers, each in registration order."""
        yield from self.params.items()
        yield from self.buffers.items()

    def count(self) -> int:
        """Number of trainable scalars."""
        return sum(t.size for t in self.params.values())

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.named_tensors()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """Overwrite every registered tensor from `state`.

        Raises:
            ConfigError: If a name is missing or unexpected.
            DimensionError: If a shape differs.
        """
        expected = set(self.params) | set(self.buffers)
        missing = expected - set(state)
        unexpected = set(state) - expected
        if missing or unexpected:
            raise ConfigError(
                f"state does not match the model: "
                f"missing={sorted(missing)[:5]} unexpected={sorted(unexpected)[:5]}"
            )
        for name, tensor in self.named_tensors():
            values = np.asarray(state[name])
            if values.shape != tensor.shape:
                raise DimensionError(f"{name}: stored shape {values.shape} but model expects {tensor.shape}")
            tensor.data = np.array(values, dtype=values.dtype, order="C")
        wide = any(t.data.dtype == np.float64 for _, t in self.named_tensors())
        self.dtype = Precision.f64 if wide else Precision.f32

    def astype(self, dtype: Precision | str) -> None:
        """Convert every tensor in place to the given precision."""
        self.dtype = Precision(dtype)
        for _, tensor in self.named_tensors():
            tensor.data = tensor.data.astype(DTYPES[self.dtype])
            tensor.grad = None


class ParamScope:
    """A view on a ParamStore that prefixes every name it registers."""

    def __init__(self, store: ParamStore, prefix: str) -> None:
        self.store = store
        self.prefix = prefix

    def _name(self, name: str) -> str:
        return f"{self.prefix}.{name}" if self.prefix else name

    def scope(self, name: str) -> "ParamScope":
        return ParamScope(self.store, self._name(name))

    def kaiming(self, name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
        return self.store.add_param(self._name(name), kaiming_uniform(self.store.rng, shape, fan_in))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.store.add_param(self._name(name), np.zeros(shape))

    def ones(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.store.add_param(self._name(name), np.ones(shape))

    def value(self, name: str, values: np.ndarray) -> Tensor:
        return self.store.add_param(self._name(name), values)

    def buffer(self, name: str, values: np.ndarray) -> Tensor:
        return self.store.add_buffer(self._name(name), values)
