"""Procedural curvilinear-lineament images with pixel-exact masks."""

from collections.abc import Sequence

import numpy as np
from scipy import interpolate, ndimage

from fluxamba.data.sample import Sample
from fluxamba.models import GenSpec

BACKGROUND_LEVEL = 0.4
CURVE_POINTS = 64


def value_noise(rng: np.random.Generator, size: int, scale: int) -> np.ndarray:
    """Octave-summed value noise in [-1, 1] on a size×size grid.

    Octave o uses lattice cells of scale/2**o pixels (down to 2) with weight 2**-o.
    """
    total = np.zeros((size, size))
    weight_sum = 0.0
    cell, weight = scale, 1.0
    while cell >= 2:
        cells = size // cell + 2
        lattice = rng.uniform(-1.0, 1.0, size=(cells, cells))
        total += weight * ndimage.zoom(lattice, cell, order=1)[:size, :size]
        weight_sum += weight
        cell //= 2
        weight /= 2.0
    return total / weight_sum if weight_sum else total


def crater_field(rng: np.random.Generator, size: int, count: int) -> np.ndarray:
    """Additive intensity of circular distractors: darker floors inside brighter rims."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    field = np.zeros((size, size))
    for _ in range(count):
        cy, cx = rng.uniform(0, size, size=2)
        radius = rng.uniform(size / 16, size / 6)
        depth = rng.uniform(0.05, 0.15)
        r = np.hypot(yy - cy, xx - cx) / radius
        field -= depth * np.clip(1.0 - (r / 0.85) ** 2, 0.0, None)
        field += 0.8 * depth * np.exp(-(((r - 1.0) / 0.12) ** 2))
    return field


def bezier_curve(control: np.ndarray, points: int = CURVE_POINTS) -> np.ndarray:
    """Sample a cubic Bézier curve given 4 control points [4, 2] at `points` parameters."""
    curve = interpolate.BPoly(control[:, None, :], [0.0, 1.0])
    return curve(np.linspace(0.0, 1.0, points))


def polyline_distance(polyline: np.ndarray, size: int) -> np.ndarray:
    """Euclidean distance of every pixel center (row, col) to a polyline [P, 2]."""
    pixels = np.stack(np.mgrid[0:size, 0:size], axis=-1).reshape(-1, 2).astype(np.float64)
    best = np.full(pixels.shape[0], np.inf)
    for start, end in zip(polyline[:-1], polyline[1:], strict=True):
        segment = end - start
        length2 = float(segment @ segment)
        if length2 == 0.0:
            projection = np.zeros(pixels.shape[0])
        else:
            projection = np.clip((pixels - start) @ segment / length2, 0.0, 1.0)
        nearest = start + projection[:, None] * segment
        best = np.minimum(best, np.linalg.norm(pixels - nearest, axis=1))
    return best.reshape(size, size)


def render_sample(spec: GenSpec, index: int) -> Sample:
    """Render sample `index`; depends only on (spec, index)."""
    rng = np.random.default_rng([spec.seed, index])
    size = spec.size
    image = BACKGROUND_LEVEL + spec.texture_amplitude * value_noise(rng, size, min(spec.texture_scale, size))
    image = image + crater_field(rng, size, spec.craters)
    mask = np.zeros((size, size), dtype=bool)
    lift = np.zeros((size, size))
    for _ in range(spec.strokes):
        control = rng.uniform(0, size - 1, size=(4, 2))
        half = rng.uniform(spec.thickness_min, spec.thickness_max) / 2.0
        contrast = rng.uniform(spec.contrast_min, spec.contrast_max)
        distance = polyline_distance(bezier_curve(control), size)
        support = distance <= half
        # soft one-pixel edge for the image, hard support for the mask
        alpha = np.where(support, 1.0, np.clip(1.0 - (distance - half), 0.0, 1.0))
        lift = np.maximum(lift, contrast * alpha)
        mask |= support
    image = np.clip(image + lift, 0.0, 1.0)
    return Sample(image=image[None], mask=mask[None].astype(np.float64), id=f"{index:05d}")


def generate(spec: GenSpec) -> list[Sample]:
    """Render spec.count samples."""
    return [render_sample(spec, index) for index in range(spec.count)]


def gaussian_noise(shape: Sequence[int], seed) -> np.ndarray:
    """Standard normal draws from the Box–Muller transform of a seeded uniform stream."""
    rng = np.random.default_rng(seed)
    count = int(np.prod(shape, dtype=np.int64))
    u1 = 1.0 - rng.random(count)
    u2 = rng.random(count)
    return (np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)).reshape(shape)


def add_gaussian_noise(x: np.ndarray, sigma: float, seed=0) -> np.ndarray:
    """x + σ·N(0, 1), clamped to [0, 1]. σ = 0 returns x unchanged.

    Raises:
        ValueError: If σ is negative.
    """
    if sigma < 0:
        raise ValueError(f"noise level must be non-negative, got {sigma}")
    x = np.asarray(x)
    if sigma == 0:
        return x.copy()
    noisy = x + sigma * gaussian_noise(x.shape, seed)
    return np.clip(noisy, 0.0, 1.0).astype(x.dtype, copy=False)
