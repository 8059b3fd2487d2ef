"""Random flips and quarter turns applied identically to an image and its mask."""

from dataclasses import dataclass

import numpy as np

from fluxamba.data.sample import Sample


@dataclass(frozen=True)
class Transform:
    hflip: bool = False
    vflip: bool = False
    quarter_turns: int = 0

    @classmethod
    def draw(cls, rng: np.random.Generator) -> "Transform":
        """Independent 50% flips and a uniform rotation by k·90°, k in 0..3."""
        return cls(
            hflip=bool(rng.random() < 0.5),
            vflip=bool(rng.random() < 0.5),
            quarter_turns=int(rng.integers(0, 4)),
        )

    @property
    def is_identity(self) -> bool:
        return not self.hflip and not self.vflip and self.quarter_turns % 4 == 0

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Transform the last two axes."""
        if self.hflip:
            values = values[..., ::-1]
        if self.vflip:
            values = values[..., ::-1, :]
        return np.ascontiguousarray(np.rot90(values, self.quarter_turns, axes=(-2, -1)))


def augment(s: Sample, seed) -> Sample:
    return apply_transform(s, Transform.draw(np.random.default_rng(seed)))


def apply_transform(s: Sample, transform: Transform) -> Sample:
    return Sample(image=transform.apply(s.image), mask=transform.apply(s.mask), id=s.id)
