"""Finite-difference gradient oracle and a registry of named check cases."""

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from fluxamba.exceptions import ConfigError
from fluxamba.numerics.tensor import backward, Tensor, Tape

LossFn = Callable[[], Tensor]
CaseBuilder = Callable[[np.random.Generator], tuple[LossFn, Sequence[Tensor]]]

SCOPES = ("ops", "blocks", "model")


def finite_diff_grad(
    f: Callable[[Tensor], Tensor | float], x: Tensor, h: float = 1e-5, indices: np.ndarray | None = None
) -> Tensor:
    """Central differences (f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h per element of x.

    x is perturbed in place and restored after each element. When `indices`
    (flat positions) is given only those entries are computed; the rest are zero.
    """
    flat = x.data.reshape(-1)
    grad = np.zeros(flat.shape, dtype=np.float64)
    positions = range(flat.size) if indices is None else indices
    for i in positions:
        original = flat[i]
        flat[i] = original + h
        upper = float(np.asarray(_scalar(f(x))))
        flat[i] = original - h
        lower = float(np.asarray(_scalar(f(x))))
        flat[i] = original
        grad[i] = (upper - lower) / (2.0 * h)
    return Tensor(grad.reshape(x.shape), dtype="f64")


def _scalar(value):
    return value.item() if isinstance(value, Tensor) else value


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """‖a − n‖ / max(‖a‖, ‖n‖, 1e-12)."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


@dataclass(frozen=True)
class GradCase:
    """A differentiable computation whose inputs are checked against central differences.

    Attributes:
        name: Case identifier, unique within its scope.
        scope: One of ops, blocks, model.
        build: Returns the loss closure and the f64 tensors to check.
        tolerance: Largest accepted relative error.
        max_elements: Check at most this many seeded-random elements per input.
    """

    name: str
    scope: str
    build: CaseBuilder
    tolerance: float = 1e-6
    max_elements: int | None = None


@dataclass(frozen=True)
class CaseResult:
    name: str
    scope: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


_registry: dict[str, dict[str, GradCase]] = {scope: {} for scope in SCOPES}


def register(
    scope: str, name: str, tolerance: float = 1e-6, max_elements: int | None = None
) -> Callable[[CaseBuilder], CaseBuilder]:
    """Decorator adding a case builder to the registry."""
    if scope not in _registry:
        raise ConfigError(f"unknown gradcheck scope {scope!r}; expected one of {', '.join(SCOPES)}")

    def decorator(builder: CaseBuilder) -> CaseBuilder:
        _registry[scope][name] = GradCase(name, scope, builder, tolerance, max_elements)
        return builder

    return decorator


def cases(scope: str) -> list[GradCase]:
    if scope not in _registry:
        raise ConfigError(f"unknown gradcheck scope {scope!r}; expected one of {', '.join(SCOPES)}")
    return list(_registry[scope].values())


def check_case(case: GradCase, seed: int = 42, h: float = 1e-5) -> CaseResult:
    """Compare tape gradients with central differences for every input of a case."""
    rng = np.random.default_rng(seed)
    loss_fn, inputs = case.build(rng)
    for tensor in inputs:
        tensor.requires_grad = True
        tensor.zero_grad()

    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)

    worst = 0.0
    for tensor in inputs:
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        indices = None
        if case.max_elements is not None and tensor.size > case.max_elements:
            indices = np.sort(rng.choice(tensor.size, size=case.max_elements, replace=False))
        numeric = finite_diff_grad(lambda _: loss_fn(), tensor, h=h, indices=indices).data
        if indices is not None:
            analytic = analytic.reshape(-1)[indices]
            numeric = numeric.reshape(-1)[indices]
        worst = max(worst, relative_error(analytic, numeric))
    return CaseResult(case.name, case.scope, worst, case.tolerance)
