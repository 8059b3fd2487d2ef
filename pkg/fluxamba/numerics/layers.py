"""Parameterized layers: weights registered in a ParamScope plus the call that applies them."""

from dataclasses import dataclass

import numpy as np

from fluxamba.numerics import ops
from fluxamba.numerics.params import ParamScope
from fluxamba.numerics.tensor import Tensor


@dataclass
class Conv2d:
    weight: Tensor
    bias: Tensor | None
    stride: int | tuple[int, int] = 1
    padding: int | tuple[int, int] = 0
    dilation: int | tuple[int, int] = 1
    groups: int = 1

    @classmethod
    def create(
        cls,
        scope: ParamScope,
        in_channels: int,
        out_channels: int,
        kernel: int | tuple[int, int] = 1,
        stride: int | tuple[int, int] = 1,
        padding: int | tuple[int, int] = 0,
        dilation: int | tuple[int, int] = 1,
        groups: int = 1,
        bias: bool = True,
    ) -> "Conv2d":
        kernel_h, kernel_w = (kernel, kernel) if isinstance(kernel, int) else kernel
        fan_in = (in_channels // groups) * kernel_h * kernel_w
        weight = scope.kaiming("weight", (out_channels, in_channels // groups, kernel_h, kernel_w), fan_in)
        bias_tensor = scope.zeros("bias", (out_channels,)) if bias else None
        return cls(weight, bias_tensor, stride, padding, dilation, groups)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.dilation, self.groups)


@dataclass
class BatchNorm2d:
    gamma: Tensor
    beta: Tensor
    stats: ops.RunningStats
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def create(cls, scope: ParamScope, channels: int) -> "BatchNorm2d":
        stats = ops.RunningStats(
            mean=scope.buffer("running_mean", np.zeros(channels)),
            var=scope.buffer("running_var", np.ones(channels)),
        )
        return cls(scope.ones("gamma", (channels,)), scope.zeros("beta", (channels,)), stats)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.batch_norm(x, self.gamma, self.beta, self.stats, training, self.momentum, self.eps)


@dataclass
class ChannelNorm:
    """Layer norm over the channel axis of [B, C, H, W]."""

    gamma: Tensor
    beta: Tensor

    @classmethod
    def create(cls, scope: ParamScope, channels: int) -> "ChannelNorm":
        return cls(scope.ones("gamma", (channels,)), scope.zeros("beta", (channels,)))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, 1, self.gamma, self.beta)


@dataclass
class ConvBnRelu:
    conv: Conv2d
    norm: BatchNorm2d

    @classmethod
    def create(
        cls, scope: ParamScope, in_channels: int, out_channels: int, kernel: int = 3, stride: int = 1
    ) -> "ConvBnRelu":
        conv = Conv2d.create(
            scope.scope("conv"), in_channels, out_channels, kernel, stride, padding=kernel // 2
        )
        return cls(conv, BatchNorm2d.create(scope.scope("bn"), out_channels))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.relu(self.norm(self.conv(x), training))
