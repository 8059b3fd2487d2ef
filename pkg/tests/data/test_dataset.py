import numpy as np
import pytest

from fluxamba.data.dataset import load_split, read_split_ids, split_ids, Split, write_dataset
from fluxamba.data.sample import Sample
from fluxamba.data.synthetic import generate
from fluxamba.exceptions import DataError, DimensionError
from fluxamba.models import GenSpec


@pytest.mark.parametrize(
    "count,sizes",
    [
        (10, (8, 1, 1)),
        (9, (9, 0, 0)),
        (25, (21, 2, 2)),
        (0, (0, 0, 0)),
    ],
)
def test_split_sizes(count, sizes):
    """Test the floor-10% validation and test holdouts.

    Args:
        count: Number of ids.
        sizes: Expected train, val and test sizes.
    """
    ids = [f"{i:05d}" for i in range(count)]

    splits = split_ids(ids)

    assert tuple(len(splits[s]) for s in (Split.train, Split.val, Split.test)) == sizes
    assert splits[Split.train] + splits[Split.val] + splits[Split.test] == ids


def test_write_and_load(dataset_dir):
    assert (dataset_dir / "images" / "00000.pgm").is_file()
    assert read_split_ids(dataset_dir, Split.val) == ["00008"]
    assert (dataset_dir / "test.txt").read_text(encoding="utf-8") == "00009\n"

    train = load_split(dataset_dir, "train")

    assert [s.id for s in train] == [f"{i:05d}" for i in range(8)]
    assert all(set(np.unique(s.mask)) <= {0.0, 1.0} for s in train)


def test_loaded_images_match_written_ones(tmp_path):
    samples = generate(GenSpec(count=1, size=32, seed=4))
    write_dataset(samples, tmp_path)

    (loaded,) = load_split(tmp_path, Split.train)

    np.testing.assert_allclose(loaded.image, samples[0].image, atol=0.5 / 255 + 1e-12)
    np.testing.assert_array_equal(loaded.mask, samples[0].mask)


def test_missing_dataset(tmp_path):
    with pytest.raises(DataError) as excinfo:
        load_split(tmp_path / "nowhere", Split.train)
    assert "not found" in str(excinfo.value)


def test_missing_split_file(dataset_dir):
    (dataset_dir / "val.txt").unlink()

    with pytest.raises(DataError):
        load_split(dataset_dir, Split.val)


def test_sample_shape_checks():
    with pytest.raises(DimensionError):
        Sample(image=np.zeros((1, 2, 2)), mask=np.zeros((1, 2, 3)), id="x")
    with pytest.raises(DimensionError):
        Sample(image=np.zeros((2, 2)), mask=np.zeros((2, 2)), id="x")
