"""Neural-network operators with reverse-mode rules.

Every operator takes and returns Tensors. The spatial convention is
[batch, channel, height, width]; bilinear sampling uses align-corners=False
with coordinates clamped to the border.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from scipy.special import erf

from fluxamba.exceptions import BatchNormError, ConfigError, DimensionError
from fluxamba.numerics import flops
from fluxamba.numerics.tensor import (
    apply_op,
    broadcast_to,
    lift,
    mean,
    reshape,
    Tensor,
    transpose,
    unbroadcast,
)


class PoolAxis(StrEnum):
    height = "height"
    width = "width"
    both = "both"


class Orientation(StrEnum):
    horizontal = "horizontal"
    vertical = "vertical"


def _pair(value) -> tuple[int, int]:
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def _require_rank(x: Tensor, rank: int, name: str) -> None:
    if x.ndim != rank:
        raise DimensionError(f"{name} expects a rank-{rank} tensor, got shape {x.shape}")


# elementwise


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    positive = v >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-v[positive]))
    e = np.exp(v[~positive])
    out[~positive] = e / (1.0 + e)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _stable_sigmoid(x.data)
    return apply_op("sigmoid", (x,), out, lambda g: (g * out * (1.0 - out),))


def softplus(x: Tensor) -> Tensor:
    out = np.logaddexp(0.0, x.data).astype(x.data.dtype, copy=False)
    return apply_op("softplus", (x,), out, lambda g: (g * _stable_sigmoid(x.data),))


def relu(x: Tensor) -> Tensor:
    return apply_op("relu", (x,), np.maximum(x.data, 0), lambda g: (g * (x.data > 0),))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x·Φ(x)."""
    cdf = 0.5 * (1.0 + erf(x.data / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.data * x.data) / np.sqrt(2.0 * np.pi)
    out = (x.data * cdf).astype(x.data.dtype, copy=False)
    return apply_op("gelu", (x,), out, lambda g: (g * (cdf + x.data * pdf),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return apply_op("tanh", (x,), out, lambda g: (g * (1.0 - out * out),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return apply_op("exp", (x,), out, lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return apply_op("log", (x,), np.log(x.data), lambda g: (g / x.data,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return apply_op("sqrt", (x,), out, lambda g: (g / (2.0 * out),))


def clip(x: Tensor, low: float, high: float) -> Tensor:
    inside = (x.data >= low) & (x.data <= high)
    return apply_op("clip", (x,), np.clip(x.data, low, high), lambda g: (g * inside,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax along one axis."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return apply_op(
        "softmax", (x,), out, lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),)
    )


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity outside training or at rate 0."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs a random generator")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return x * keep


# shape


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = tuple(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"cannot concatenate shapes {shapes} along axis {axis}") from None
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return apply_op("concat", tensors, out, lambda g: tuple(np.split(g, cuts, axis=axis)))


def permute_last(x: Tensor, permutation: np.ndarray) -> Tensor:
    """Gather the last axis in the given order: out[..., i] = x[..., permutation[i]]."""
    if permutation.shape != (x.shape[-1],):
        raise DimensionError(
            f"permutation of length {permutation.shape[0]} does not match last axis {x.shape}"
        )
    inverse = np.argsort(permutation)
    return apply_op("permute_last", (x,), x.data[..., permutation], lambda g: (g[..., inverse],))


def pixel_shuffle(x: Tensor, scale: int) -> Tensor:
    """[B, C·s², H, W] → [B, C, H·s, W·s]."""
    _require_rank(x, 4, "pixel_shuffle")
    batch, channels, height, width = x.shape
    if channels % (scale * scale):
        raise DimensionError(f"channel axis 1 = {channels} not divisible by scale² = {scale * scale}")
    out_channels = channels // (scale * scale)
    x = reshape(x, (batch, out_channels, scale, scale, height, width))
    x = transpose(x, (0, 1, 4, 2, 5, 3))
    return reshape(x, (batch, out_channels, height * scale, width * scale))


# linear algebra


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x·wᵀ + b over the last axis; weight is [out, in]."""
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input last axis = {x.shape[-1]} but weight axis 1 = {weight.shape[1]}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    rows = int(np.prod(x.shape[:-1]))
    flops.report("linear", flops.linear_flops(rows, weight.shape[1], weight.shape[0]))

    def rule(g):
        flat_g = g.reshape(-1, weight.shape[0])
        flat_x = x.data.reshape(-1, weight.shape[1])
        grads = [g @ weight.data, flat_g.T @ flat_x]
        if bias is not None:
            grads.append(flat_g.sum(axis=0))
        return tuple(grads)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return apply_op("linear", inputs, out, rule)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched a @ b with identical leading axes."""
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    batch = int(np.prod(a.shape[:-2]))
    flops.report("matmul", flops.matmul_flops(batch, a.shape[-2], a.shape[-1], b.shape[-1]))
    return apply_op(
        "matmul",
        (a, b),
        a.data @ b.data,
        lambda g: (g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g),
    )


# convolution and pooling


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride=1,
    padding=0,
    dilation=1,
    groups: int = 1,
) -> Tensor:
    """Grouped, dilated 2D cross-correlation with zero padding.

    Args:
        x: Input [B, Cin, H, W].
        weight: Kernel [Cout, Cin/groups, Kh, Kw].
        bias: Optional [Cout].
        stride: Int or (sh, sw).
        padding: Int or (ph, pw).
        dilation: Int or (dh, dw), each ≥ 1.
        groups: Number of channel groups.

    Returns:
        Output [B, Cout, H', W'] with H' = (H + 2p − d(K−1) − 1) // s + 1.

    Raises:
        DimensionError: If channel or spatial axes do not line up.
        ConfigError: If dilation or stride is below 1.
    """
    _require_rank(x, 4, "conv2d input")
    _require_rank(weight, 4, "conv2d weight")
    batch, in_channels, height, width = x.shape
    out_channels, group_channels, kernel_h, kernel_w = weight.shape
    stride_h, stride_w = _pair(stride)
    pad_h, pad_w = _pair(padding)
    dil_h, dil_w = _pair(dilation)
    if min(dil_h, dil_w) < 1 or min(stride_h, stride_w) < 1:
        raise ConfigError(f"conv2d: stride {stride} and dilation {dilation} must be ≥ 1")
    if in_channels % groups or out_channels % groups:
        raise DimensionError(
            f"conv2d: input axis 1 = {in_channels} and weight axis 0 = {out_channels} "
            f"must divide groups={groups}"
        )
    if group_channels != in_channels // groups:
        raise DimensionError(
            f"conv2d: weight axis 1 = {group_channels} but input axis 1 / groups = {in_channels // groups}"
        )
    out_h = (height + 2 * pad_h - dil_h * (kernel_h - 1) - 1) // stride_h + 1
    out_w = (width + 2 * pad_w - dil_w * (kernel_w - 1) - 1) // stride_w + 1
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"conv2d: spatial axes 2, 3 = ({height}, {width}) too small for the kernel")
    if bias is not None and bias.shape != (out_channels,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} does not match weight axis 0 = {out_channels}")

    flops.report(
        "conv2d",
        batch * flops.conv2d_flops(in_channels, out_channels, kernel_h, kernel_w, groups, out_h, out_w),
    )
    group_out = out_channels // groups
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    grouped = padded.reshape(batch, groups, group_channels, padded.shape[2], padded.shape[3])
    kernels = weight.data.reshape(groups, group_out, group_channels, kernel_h, kernel_w)

    def window(i: int, j: int) -> tuple[slice, ...]:
        rows = slice(i * dil_h, i * dil_h + stride_h * (out_h - 1) + 1, stride_h)
        cols = slice(j * dil_w, j * dil_w + stride_w * (out_w - 1) + 1, stride_w)
        return (slice(None), slice(None), slice(None), rows, cols)

    out = np.zeros((batch, groups, group_out, out_h, out_w), dtype=x.data.dtype)
    for i in range(kernel_h):
        for j in range(kernel_w):
            out += np.einsum("bgchw,goc->bgohw", grouped[window(i, j)], kernels[:, :, :, i, j], optimize=True)
    out = out.reshape(batch, out_channels, out_h, out_w)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def rule(g):
        grad_out = g.reshape(batch, groups, group_out, out_h, out_w)
        grad_in = np.zeros_like(grouped)
        grad_kernels = np.zeros_like(kernels)
        for i in range(kernel_h):
            for j in range(kernel_w):
                view = window(i, j)
                grad_kernels[:, :, :, i, j] = np.einsum(
                    "bgohw,bgchw->goc", grad_out, grouped[view], optimize=True
                )
                grad_in[view] += np.einsum(
                    "bgohw,goc->bgchw", grad_out, kernels[:, :, :, i, j], optimize=True
                )
        grad_in = grad_in.reshape(padded.shape)[:, :, pad_h : pad_h + height, pad_w : pad_w + width]
        grads = [grad_in, grad_kernels.reshape(weight.shape)]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return apply_op("conv2d", inputs, out, rule)


def pool_axis_avg(x: Tensor, axis: PoolAxis | str) -> Tensor:
    """Average over height ([B,C,1,W]), width ([B,C,H,1]) or both ([B,C,1,1], global average pooling)."""
    _require_rank(x, 4, "pool_axis_avg")
    axes = {PoolAxis.height: (2,), PoolAxis.width: (3,), PoolAxis.both: (2, 3)}[PoolAxis(axis)]
    return mean(x, axis=axes, keepdims=True)


def global_avg_pool(x: Tensor) -> Tensor:
    return pool_axis_avg(x, PoolAxis.both)


def conv1d_along(x: Tensor, weight: Tensor, bias: Tensor | None, axis: PoolAxis | str) -> Tensor:
    """Depthwise kernel-3 convolution along one spatial axis of a pooled map.

    weight is [C, 1, 3]; padding 1 keeps the length.
    """
    channels = x.shape[1]
    if weight.shape != (channels, 1, 3):
        raise DimensionError(f"1D kernel shape {weight.shape} does not match channels axis 1 = {channels}")
    if PoolAxis(axis) == PoolAxis.height:
        kernel = reshape(weight, (channels, 1, 3, 1))
        padding = (1, 0)
    else:
        kernel = reshape(weight, (channels, 1, 1, 3))
        padding = (0, 1)
    return conv2d(x, kernel, bias, padding=padding, groups=channels)


def strip_pool(
    x: Tensor, orientation: Orientation | str, weight: Tensor, bias: Tensor | None = None
) -> Tensor:
    """Full-length strip average, 1D conv along the kept axis, broadcast back.

    horizontal averages each row over W; vertical averages each column over H.
    """
    _require_rank(x, 4, "strip_pool")
    if Orientation(orientation) == Orientation.horizontal:
        pooled = pool_axis_avg(x, PoolAxis.width)
        mixed = conv1d_along(pooled, weight, bias, PoolAxis.height)
    else:
        pooled = pool_axis_avg(x, PoolAxis.height)
        mixed = conv1d_along(pooled, weight, bias, PoolAxis.width)
    return broadcast_to(mixed, x.shape)


# normalization


def layer_norm(x: Tensor, normalized_axes, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over `normalized_axes`, then scale and shift.

    gamma and beta hold one value per element of the normalized extent.
    """
    if isinstance(normalized_axes, int):
        normalized_axes = (normalized_axes,)
    axes = tuple(sorted(a % x.ndim for a in normalized_axes))
    extent = tuple(x.shape[a] for a in axes)
    if gamma.size != int(np.prod(extent)) or beta.size != gamma.size:
        raise DimensionError(
            f"layer_norm: gamma/beta sizes {gamma.shape}/{beta.shape} do not match axes {axes} = {extent}"
        )
    affine_shape = tuple(x.shape[a] if a in axes else 1 for a in range(x.ndim))
    centered = x - mean(x, axis=axes, keepdims=True)
    variance = mean(centered * centered, axis=axes, keepdims=True)
    normalized = centered / sqrt(variance + eps)
    return normalized * reshape(gamma, affine_shape) + reshape(beta, affine_shape)


@dataclass
class RunningStats:
    """Batch-norm running mean and variance, stored as non-trainable tensors."""

    mean: Tensor
    var: Tensor

    def update(self, batch_mean: np.ndarray, batch_var: np.ndarray, momentum: float) -> None:
        mean_dtype, var_dtype = self.mean.data.dtype, self.var.data.dtype
        self.mean.data = ((1.0 - momentum) * self.mean.data + momentum * batch_mean).astype(mean_dtype)
        self.var.data = ((1.0 - momentum) * self.var.data + momentum * batch_var).astype(var_dtype)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_stats: RunningStats,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization of [B, C, H, W].

    Training mode normalizes with the (biased) batch statistics and folds them into
    the running stats as r ← (1 − m)·r + m·batch_stat; eval mode uses the running
    stats only.

    Raises:
        BatchNormError: In training mode with fewer than two samples.
    """
    _require_rank(x, 4, "batch_norm")
    channels = x.shape[1]
    shape = (1, channels, 1, 1)
    if training:
        if x.shape[0] < 2:
            raise BatchNormError(
                f"train-mode batch norm needs a batch of at least 2 samples, got {x.shape[0]}"
            )
        centered = x - mean(x, axis=(0, 2, 3), keepdims=True)
        variance = mean(centered * centered, axis=(0, 2, 3), keepdims=True)
        running_stats.update(
            x.data.mean(axis=(0, 2, 3)), variance.data.reshape(channels), momentum
        )
        normalized = centered / sqrt(variance + eps)
    else:
        inv_std = 1.0 / np.sqrt(running_stats.var.data + eps)
        normalized = (x - lift(running_stats.mean.data.reshape(shape), x)) * lift(inv_std.reshape(shape), x)
    return normalized * reshape(gamma, shape) + reshape(beta, shape)


# attention


def multi_head_axial_attention(
    x: Tensor,
    axis: PoolAxis | str,
    heads: int,
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
) -> Tensor:
    """Multi-head self-attention restricted to one spatial axis.

    axis=height attends within each column, axis=width within each row. The
    projections are [C, C] matrices applied to the channel vector of every
    position; scores are scaled by 1/sqrt(C/heads).

    Raises:
        ConfigError: If C is not divisible by heads.
    """
    _require_rank(x, 4, "multi_head_axial_attention")
    batch, channels, height, width = x.shape
    if heads < 1 or channels % heads:
        raise ConfigError(f"channels axis 1 = {channels} is not divisible by heads={heads}")
    head_dim = channels // heads
    if PoolAxis(axis) == PoolAxis.height:
        to_seq, from_seq = (0, 3, 2, 1), (0, 3, 2, 1)
        streams, length = width, height
    elif PoolAxis(axis) == PoolAxis.width:
        to_seq, from_seq = (0, 2, 3, 1), (0, 3, 1, 2)
        streams, length = height, width
    else:
        raise ConfigError("axial attention runs along height or width only")

    seq = transpose(x, to_seq)

    def split_heads(t: Tensor) -> Tensor:
        t = reshape(t, (batch, streams, length, heads, head_dim))
        return transpose(t, (0, 1, 3, 2, 4))

    q = split_heads(linear(seq, wq))
    k = split_heads(linear(seq, wk))
    v = split_heads(linear(seq, wv))
    scores = matmul(q, transpose(k, (0, 1, 2, 4, 3))) * (1.0 / np.sqrt(head_dim))
    attended = matmul(softmax(scores, axis=-1), v)
    merged = reshape(transpose(attended, (0, 1, 3, 2, 4)), (batch, streams, length, channels))
    return transpose(linear(merged, wo), from_seq)


# resampling


def sample_bilinear(x: Tensor, py: Tensor, px: Tensor) -> Tensor:
    """Bilinearly sample x at fractional pixel coordinates.

    Coordinates are in input pixel units (pixel centers at integers) and are
    clamped to the valid range; gradients flow into x and into the coordinates
    that were not clamped.

    Args:
        x: Source [B, C, H, W].
        py: Row coordinates [B, Ho, Wo].
        px: Column coordinates [B, Ho, Wo].

    Returns:
        Samples [B, C, Ho, Wo].
    """
    _require_rank(x, 4, "sample_bilinear")
    batch, channels, height, width = x.shape
    if py.shape != px.shape or py.ndim != 3 or py.shape[0] != batch:
        raise DimensionError(f"sample grid shapes {py.shape}/{px.shape} do not match batch axis 0 = {batch}")
    ys = np.clip(py.data, 0, height - 1)
    xs = np.clip(px.data, 0, width - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    wy = (ys - y0).astype(x.data.dtype)[..., None]
    wx = (xs - x0).astype(x.data.dtype)[..., None]
    b = np.arange(batch)[:, None, None]
    source = x.data.transpose(0, 2, 3, 1)
    v00, v01 = source[b, y0, x0], source[b, y0, x1]
    v10, v11 = source[b, y1, x0], source[b, y1, x1]
    out = (1 - wy) * (1 - wx) * v00 + (1 - wy) * wx * v01 + wy * (1 - wx) * v10 + wy * wx * v11
    out = out.transpose(0, 3, 1, 2)
    y_free = (py.data >= 0) & (py.data <= height - 1)
    x_free = (px.data >= 0) & (px.data <= width - 1)

    def rule(g):
        gt = g.transpose(0, 2, 3, 1)
        grad_source = np.zeros_like(source)
        np.add.at(grad_source, (b, y0, x0), gt * (1 - wy) * (1 - wx))
        np.add.at(grad_source, (b, y0, x1), gt * (1 - wy) * wx)
        np.add.at(grad_source, (b, y1, x0), gt * wy * (1 - wx))
        np.add.at(grad_source, (b, y1, x1), gt * wy * wx)
        grad_y = (gt * ((1 - wx) * (v10 - v00) + wx * (v11 - v01))).sum(axis=-1) * y_free
        grad_x = (gt * ((1 - wy) * (v01 - v00) + wy * (v11 - v10))).sum(axis=-1) * x_free
        return grad_source.transpose(0, 3, 1, 2), grad_y, grad_x

    return apply_op("sample_bilinear", (x, py, px), out, rule)


def _base_grid(batch: int, height: int, width: int, scale: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    rows = (np.arange(height * scale, dtype=np.float64) + 0.5) / scale - 0.5
    cols = (np.arange(width * scale, dtype=np.float64) + 0.5) / scale - 0.5
    grid_y = np.broadcast_to(rows[:, None], (batch, height * scale, width * scale)).astype(dtype)
    grid_x = np.broadcast_to(cols[None, :], (batch, height * scale, width * scale)).astype(dtype)
    return grid_y, grid_x


def interpolate_bilinear(x: Tensor, scale: int) -> Tensor:
    """Integer-factor bilinear upsampling, align-corners=False."""
    _require_rank(x, 4, "interpolate_bilinear")
    if scale < 1:
        raise ConfigError(f"upsampling scale must be ≥ 1, got {scale}")
    batch, _, height, width = x.shape
    grid_y, grid_x = _base_grid(batch, height, width, scale, x.data.dtype)
    return sample_bilinear(x, Tensor(grid_y), Tensor(grid_x))


def resample_with_offsets(x: Tensor, scale: int, offsets: Tensor) -> Tensor:
    """Upsample by `scale`, sampling each output pixel at its base position plus an offset.

    offsets is [B, 2, sH, sW] in input pixel units; channel 0 shifts columns (x),
    channel 1 shifts rows (y). Zero offsets reproduce interpolate_bilinear exactly.
    """
    _require_rank(x, 4, "resample_with_offsets")
    batch, _, height, width = x.shape
    expected = (batch, 2, height * scale, width * scale)
    if offsets.shape != expected:
        raise DimensionError(f"offsets shape {offsets.shape} does not match {expected}")
    grid_y, grid_x = _base_grid(batch, height, width, scale, x.data.dtype)
    py = offsets[:, 1] + Tensor(grid_y)
    px = offsets[:, 0] + Tensor(grid_x)
    return sample_bilinear(x, py, px)


__all__ = [
    "PoolAxis",
    "Orientation",
    "RunningStats",
    "sigmoid",
    "softplus",
    "relu",
    "gelu",
    "tanh",
    "exp",
    "log",
    "sqrt",
    "clip",
    "softmax",
    "dropout",
    "concat",
    "permute_last",
    "pixel_shuffle",
    "linear",
    "matmul",
    "conv2d",
    "pool_axis_avg",
    "global_avg_pool",
    "conv1d_along",
    "strip_pool",
    "layer_norm",
    "batch_norm",
    "multi_head_axial_attention",
    "sample_bilinear",
    "interpolate_bilinear",
    "resample_with_offsets",
    "unbroadcast",
]
