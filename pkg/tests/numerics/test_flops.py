import numpy as np

from fluxamba.numerics import flops, ops
from fluxamba.numerics.flops import FlopCounter
from fluxamba.numerics.tensor import Tensor


def test_formulas():
    assert flops.conv2d_flops(2, 4, 3, 3, 1, 2, 2) == 576
    assert flops.conv2d_flops(4, 4, 3, 3, 4, 2, 2) == 288
    assert flops.linear_flops(6, 4, 5) == 240
    assert flops.matmul_flops(2, 3, 4, 2) == 96
    assert flops.scan_flops(10, 3, 4) == 480


def test_counter_collects_operator_reports():
    x = Tensor(np.ones((1, 2, 4, 4)))
    w = Tensor(np.ones((4, 2, 3, 3)))

    with FlopCounter() as counter:
        ops.conv2d(x, w)
        ops.linear(Tensor(np.ones((2, 3, 4))), Tensor(np.ones((5, 4))))
        ops.relu(x)

    assert counter.by_kind == {"conv2d": 576, "linear": 240}
    assert counter.total == 816


def test_nested_counters():
    a = Tensor(np.ones((2, 3, 4)))
    b = Tensor(np.ones((2, 4, 2)))

    with FlopCounter() as outer:
        ops.matmul(a, b)
        with FlopCounter() as inner:
            ops.matmul(a, b)

    assert inner.total == 96
    assert outer.total == 192


def test_no_counter_no_effect():
    flops.report("conv2d", 10)

    with FlopCounter() as counter:
        pass

    assert counter.total == 0
