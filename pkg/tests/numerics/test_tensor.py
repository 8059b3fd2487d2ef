import numpy as np
import pytest

from fluxamba.config import Precision
from fluxamba.exceptions import DimensionError, GradientError, NumericError
from fluxamba.numerics import ops
from fluxamba.numerics.tensor import backward, broadcast_to, Tape, Tensor, unbroadcast
from tests.helpers import random_tensor, tape_grads


def test_tensor_dtype_defaults():
    assert Tensor([1, 2, 3]).precision == Precision.f32
    assert Tensor(np.zeros(2, dtype=np.float64)).precision == Precision.f64
    assert Tensor([1.0], dtype="f64").data.dtype == np.float64
    assert Tensor(np.ones(3), dtype="f32").astype("f64").precision == Precision.f64


def test_sum_gradient_is_ones(rng):
    x = random_tensor(rng, 2, 3)

    (grad,) = tape_grads(lambda t: t.sum(), x)

    np.testing.assert_array_equal(grad, np.ones((2, 3)))


def test_square_gradient(rng):
    x = random_tensor(rng, 4, 5)

    (grad,) = tape_grads(lambda t: (t * t).sum(), x)

    np.testing.assert_allclose(grad, 2 * x.data, rtol=1e-12)


def test_broadcast_gradient_is_summed(rng):
    a = random_tensor(rng, 3, 4)
    b = random_tensor(rng, 1, 4)

    grad_a, grad_b = tape_grads(lambda p, q: (p * q).sum(), a, b)

    np.testing.assert_allclose(grad_a, np.broadcast_to(b.data, (3, 4)), rtol=1e-12)
    np.testing.assert_allclose(grad_b, a.data.sum(axis=0, keepdims=True), rtol=1e-12)


def test_reused_input_accumulates(rng):
    x = random_tensor(rng, 3)

    (grad,) = tape_grads(lambda t: (t * 3.0 + t).sum(), x)

    np.testing.assert_allclose(grad, np.full(3, 4.0))


def test_division_and_mean_gradients(rng):
    x = random_tensor(rng, 2, 2, low=1.0, high=2.0)

    (grad,) = tape_grads(lambda t: (1.0 / t).mean(), x)

    np.testing.assert_allclose(grad, -0.25 / x.data**2, rtol=1e-12)


def test_getitem_gradient(rng):
    x = random_tensor(rng, 3, 4)

    (grad,) = tape_grads(lambda t: t[1:, ::2].sum(), x)

    expected = np.zeros((3, 4))
    expected[1:, ::2] = 1.0
    np.testing.assert_array_equal(grad, expected)


def test_reshape_and_transpose_gradient(rng):
    x = random_tensor(rng, 2, 6)
    weights = rng.normal(size=(3, 2, 2))

    (grad,) = tape_grads(lambda t: (t.reshape(2, 3, 2).transpose(1, 0, 2) * weights).sum(), x)

    np.testing.assert_allclose(grad, weights.transpose(1, 0, 2).reshape(2, 6), rtol=1e-12)


def test_backward_twice_fails(rng):
    x = random_tensor(rng, 2)
    x.requires_grad = True
    with Tape() as tape:
        loss = (x * x).sum()
    backward(loss, tape)

    with pytest.raises(GradientError) as excinfo:
        backward(loss, tape)
    assert "tape was already replayed" in str(excinfo.value)


def test_backward_after_reset_accumulates(rng):
    x = random_tensor(rng, 2)
    x.requires_grad = True
    with Tape() as tape:
        loss = x.sum()
    backward(loss, tape)
    tape.reset()
    with tape:
        loss = x.sum()
    backward(loss, tape)

    np.testing.assert_array_equal(x.grad, np.full(2, 2.0))


def test_backward_needs_scalar_loss(rng):
    x = random_tensor(rng, 2)
    x.requires_grad = True
    with Tape() as tape:
        out = x * 2.0

    with pytest.raises(GradientError) as excinfo:
        backward(out, tape)
    assert "loss must be scalar" in str(excinfo.value)


def test_backward_detached_loss(rng):
    x = random_tensor(rng, 2)
    with Tape() as tape:
        loss = x.sum()

    with pytest.raises(GradientError) as excinfo:
        backward(loss, tape)
    assert "loss is detached from the tape" in str(excinfo.value)


def test_no_recording_without_requires_grad(rng):
    x = random_tensor(rng, 3)

    with Tape() as tape:
        out = (x * x).sum()

    assert len(tape) == 0
    assert not out.requires_grad


def test_no_recording_outside_tape(rng):
    x = random_tensor(rng, 3)
    x.requires_grad = True

    out = (x * x).sum()

    assert not out.requires_grad


def test_non_finite_result_is_rejected():
    x = Tensor([1000.0], dtype="f64")

    with np.errstate(all="ignore"), pytest.raises(NumericError) as excinfo:
        ops.exp(x)
    assert "exp produced non-finite values" in str(excinfo.value)


def test_shape_errors():
    with pytest.raises(DimensionError) as excinfo:
        Tensor(np.zeros(6)).reshape(4, 2)
    assert "cannot reshape (6,) into (4, 2)" in str(excinfo.value)

    with pytest.raises(DimensionError) as excinfo:
        Tensor(np.zeros((2, 3))) + Tensor(np.zeros((4,)))
    assert "cannot broadcast shapes (2, 3) and (4,)" in str(excinfo.value)

    with pytest.raises(DimensionError):
        broadcast_to(Tensor(np.zeros(3)), (2, 4))


def test_unbroadcast():
    grad = np.ones((2, 3, 4))

    np.testing.assert_array_equal(unbroadcast(grad, (3, 1)), np.full((3, 1), 8.0))
    np.testing.assert_array_equal(unbroadcast(grad, (2, 3, 4)), grad)


def test_constant_precision_follows_tensor():
    x = Tensor(np.ones(2, dtype=np.float64))

    assert (x + 1.5).precision == Precision.f64
    assert (2.0 * Tensor(np.ones(2, dtype=np.float32))).precision == Precision.f32


def test_detach_stops_gradient(rng):
    x = random_tensor(rng, 3)
    x.requires_grad = True

    with Tape() as tape:
        loss = (x * x.detach()).sum()
    backward(loss, tape)

    np.testing.assert_allclose(x.grad, x.data, rtol=1e-12)
