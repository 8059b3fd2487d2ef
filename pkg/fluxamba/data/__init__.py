from fluxamba.data.augment import augment, Transform
from fluxamba.data.dataset import load_split, Split, split_ids, write_dataset
from fluxamba.data.pgm import read_pgm, write_pgm
from fluxamba.data.sample import Sample
from fluxamba.data.synthetic import add_gaussian_noise, generate

__all__ = [
    "add_gaussian_noise",
    "augment",
    "generate",
    "load_split",
    "read_pgm",
    "Sample",
    "Split",
    "split_ids",
    "Transform",
    "write_dataset",
    "write_pgm",
]
