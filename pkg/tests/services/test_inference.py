import numpy as np
import pytest

from fluxamba import checkpoint, services
from fluxamba.data.pgm import read_pgm, write_pgm
from fluxamba.exceptions import DataError
from fluxamba.network import TAP_NAMES


@pytest.fixture
def image_path(tmp_path, rng):
    path = tmp_path / "input.pgm"
    write_pgm(rng.uniform(size=(1, 40, 40)), path)
    return path


def test_infer_pads_and_crops(checkpoint_path, image_path, tmp_path):
    out = tmp_path / "mask.pgm"

    outcome = services.infer(checkpoint_path, image_path, out)

    assert outcome.padding == (24, 24)
    assert outcome.dumps == []
    mask = read_pgm(out)
    assert mask.shape == (1, 40, 40)
    assert set(np.unique(mask)) <= {0.0, 1.0}
    assert int(mask.sum()) == outcome.foreground


def test_infer_dumps_features(checkpoint_path, image_path, tmp_path):
    outcome = services.infer(checkpoint_path, image_path, tmp_path / "mask.pgm", tmp_path / "dumps")

    assert [p.name for p in outcome.dumps] == [f"stage{s}.flxa" for s in (1, 2, 3, 4)]
    for stage, path in enumerate(outcome.dumps, start=1):
        tensors, _ = checkpoint.load_tensors(path)
        assert list(tensors) == list(TAP_NAMES)
        assert tensors["base"].shape[2:] == (64 // 2 ** (stage + 1),) * 2


def test_infer_missing_image(checkpoint_path, tmp_path):
    with pytest.raises(DataError) as excinfo:
        services.infer(checkpoint_path, tmp_path / "missing.pgm", tmp_path / "mask.pgm")
    assert "cannot read" in str(excinfo.value)


def test_infer_missing_checkpoint(image_path, tmp_path):
    with pytest.raises(DataError):
        services.infer(tmp_path / "missing.flxa", image_path, tmp_path / "mask.pgm")
