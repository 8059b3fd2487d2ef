"""Hybrid segmentation objective: weighted BCE, soft Dice and a boundary term."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from fluxamba.decoder import BoundaryOutput
from fluxamba.exceptions import DimensionError
from fluxamba.models import LossWeights
from fluxamba.numerics import ops
from fluxamba.numerics.tensor import lift, mean, Tensor

PROB_CLAMP = 1e-7


def _target(p: Tensor, y) -> Tensor:
    y = lift(y.data if isinstance(y, Tensor) else np.asarray(y), p)
    if y.shape != p.shape:
        raise DimensionError(f"prediction shape {p.shape} does not match target shape {y.shape}")
    return y


def wbce(p: Tensor, y, w_pos: float = 5.0) -> Tensor:
    """−mean(w_pos·y·log p + (1 − y)·log(1 − p)) with p clamped to [1e-7, 1 − 1e-7]."""
    y = _target(p, y)
    p = ops.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -mean(w_pos * y * ops.log(p) + (1.0 - y) * ops.log(1.0 - p))


def soft_dice(p: Tensor, y, eps: float = 1.0) -> Tensor:
    """1 − (2Σpy + ε) / (Σp + Σy + ε) over the whole batch."""
    y = _target(p, y)
    overlap = (p * y).sum()
    return 1.0 - (2.0 * overlap + eps) / (p.sum() + y.sum() + eps)


def boundary_gt(y: np.ndarray) -> np.ndarray:
    """Morphological gradient of a binary mask with a 3×3 square: dilate(y) − erode(y).

    Works on the last two axes; pixels outside the image repeat the nearest edge.
    """
    y = (np.asarray(y) > 0.5).astype(np.uint8)
    size = (1,) * (y.ndim - 2) + (3, 3)
    dilated = ndimage.maximum_filter(y, size=size, mode="nearest")
    eroded = ndimage.minimum_filter(y, size=size, mode="nearest")
    return (dilated - eroded).astype(np.float64)


def downsample_mask(y: np.ndarray, height: int, width: int) -> np.ndarray:
    """Block max-pool [..., H, W] to [..., height, width]; H and W must be multiples."""
    y = np.asarray(y)
    full_h, full_w = y.shape[-2:]
    if full_h % height or full_w % width:
        raise DimensionError(f"mask axes ({full_h}, {full_w}) are not multiples of ({height}, {width})")
    fh, fw = full_h // height, full_w // width
    blocks = y.reshape(*y.shape[:-2], height, fh, width, fw)
    return blocks.max(axis=(-3, -1))


def boundary_loss(m_bound: Tensor, y) -> Tensor:
    """Plain BCE between the boundary map and the morphological gradient of the max-pooled mask."""
    y = y.data if isinstance(y, Tensor) else np.asarray(y)
    target = boundary_gt(downsample_mask(y, *m_bound.shape[-2:]))
    return wbce(m_bound, target, w_pos=1.0)


@dataclass
class LossBreakdown:
    total: Tensor
    bce: float
    dice: float
    boundary: float


def total_loss(out: BoundaryOutput, y, weights: LossWeights = LossWeights()) -> LossBreakdown:
    """λ_bce·wbce + λ_dice·soft_dice + λ_b·boundary_loss on sigmoid(logits)."""
    p = ops.sigmoid(out.logits)
    bce = wbce(p, y, weights.w_pos)
    dice = soft_dice(p, y, weights.eps)
    boundary = boundary_loss(out.m_bound, y)
    total = weights.bce * bce + weights.dice * dice + weights.boundary * boundary
    return LossBreakdown(total=total, bce=bce.item(), dice=dice.item(), boundary=boundary.item())
