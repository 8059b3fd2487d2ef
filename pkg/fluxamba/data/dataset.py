"""On-disk dataset layout.

    <root>/images/<id>.pgm
    <root>/masks/<id>.pgm
    <root>/train.txt, val.txt, test.txt   one id per line, UTF-8, LF
"""

from collections.abc import Sequence
from enum import StrEnum
from pathlib import Path

import numpy as np

from fluxamba.data.pgm import read_pgm, write_pgm
from fluxamba.data.sample import Sample
from fluxamba.exceptions import DataError

HOLDOUT_FRACTION = 0.1


class Split(StrEnum):
    train = "train"
    val = "val"
    test = "test"


def split_ids(ids: Sequence[str]) -> dict[Split, list[str]]:
    """Validation and test each take floor(10%) of the ids from the end; the rest train.

    10 ids split 8/1/1; fewer than 10 leave validation and test empty.
    """
    holdout = int(len(ids) * HOLDOUT_FRACTION)
    train_end = len(ids) - 2 * holdout
    return {
        Split.train: list(ids[:train_end]),
        Split.val: list(ids[train_end : train_end + holdout]),
        Split.test: list(ids[train_end + holdout :]),
    }


def write_dataset(samples: Sequence[Sample], root: str | Path) -> dict[Split, list[str]]:
    """Write image/mask pairs and the split files under `root`."""
    root = Path(root)
    try:
        (root / "images").mkdir(parents=True, exist_ok=True)
        (root / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create dataset directory {root}: {exc.strerror}") from None
    for sample in samples:
        write_pgm(sample.image, root / "images" / f"{sample.id}.pgm")
        write_pgm(sample.mask, root / "masks" / f"{sample.id}.pgm")
    splits = split_ids([sample.id for sample in samples])
    for split, ids in splits.items():
        try:
            (root / f"{split}.txt").write_text("".join(f"{i}\n" for i in ids), encoding="utf-8", newline="\n")
        except OSError as exc:
            raise DataError(f"cannot write split file {split}.txt: {exc.strerror}") from None
    return splits


def read_split_ids(root: str | Path, split: Split | str) -> list[str]:
    path = Path(root) / f"{Split(split)}.txt"
    if not path.is_file():
        raise DataError(f"split file {path} not found")
    return [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def load_sample(root: str | Path, sample_id: str) -> Sample:
    root = Path(root)
    image = read_pgm(root / "images" / f"{sample_id}.pgm")
    mask = (read_pgm(root / "masks" / f"{sample_id}.pgm") > 0.5).astype(np.float64)
    if image.shape != mask.shape:
        raise DataError(f"sample {sample_id}: image {image.shape} and mask {mask.shape} differ")
    return Sample(image=image, mask=mask, id=sample_id)


def load_split(root: str | Path, split: Split | str) -> list[Sample]:
    """All samples listed in a split file.

    Raises:
        DataError: If the dataset, the split file or one of its files is missing.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset directory {root} not found")
    return [load_sample(root, sample_id) for sample_id in read_split_ids(root, split)]
