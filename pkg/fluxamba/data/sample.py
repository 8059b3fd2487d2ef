from dataclasses import dataclass

import numpy as np

from fluxamba.exceptions import DimensionError


@dataclass
class Sample:
    """A grayscale image in [0, 1] and its binary mask, both [1, H, W]."""

    image: np.ndarray
    mask: np.ndarray
    id: str

    def __post_init__(self) -> None:
        if self.image.shape != self.mask.shape:
            raise DimensionError(
                f"sample {self.id}: image {self.image.shape} and mask {self.mask.shape} differ"
            )
        if self.image.ndim != 3 or self.image.shape[0] != 1:
            raise DimensionError(f"sample {self.id}: expected [1, H, W], got {self.image.shape}")
