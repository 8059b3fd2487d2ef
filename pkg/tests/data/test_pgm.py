import numpy as np
import pytest

from fluxamba.data.pgm import decode_pgm, encode_pgm, read_pgm, write_pgm
from fluxamba.exceptions import (
    DataError,
    PgmError,
    PgmMagicError,
    PgmMaxvalError,
    PgmTruncatedError,
    PgmUnsupportedFormatError,
)


def test_encode_bytes():
    payload = encode_pgm(np.array([[0.0, 1.0, 0.5, 0.25]]))

    assert payload == b"P5\n4 1\n255\n" + bytes([0, 255, 128, 64])


def test_round_trip(rng, tmp_path):
    values = rng.integers(0, 256, size=(1, 5, 7)) / 255.0
    path = tmp_path / "image.pgm"

    write_pgm(values, path, comment="synthetic")

    np.testing.assert_allclose(read_pgm(path), values, atol=1e-12)


def test_mask_is_written_as_0_and_255(tmp_path):
    path = tmp_path / "mask.pgm"

    write_pgm(np.array([[[0.0, 1.0], [1.0, 0.0]]]), path)

    assert path.read_bytes()[-4:] == bytes([0, 255, 255, 0])


def test_decode_with_comment():
    payload = b"P5\n# made by hand\n2 1\n255\n" + bytes([10, 20])

    values = decode_pgm(payload)

    assert values.shape == (1, 1, 2)
    np.testing.assert_allclose(values[0, 0], [10 / 255, 20 / 255])


@pytest.mark.parametrize(
    "payload,error",
    [
        (b"GIF89a", PgmMagicError),
        (b"P6\n1 1\n255\n\x00\x00\x00", PgmUnsupportedFormatError),
        (b"P2\n1 1\n255\n0", PgmUnsupportedFormatError),
        (b"P5\n1 1\n65535\n\x00\x00", PgmMaxvalError),
        (b"P5\n2 2\n255\n\x00\x00", PgmTruncatedError),
        (b"P5\n2 2", PgmTruncatedError),
        (b"P5\n# one\n# two\n1 1\n255\n\x00", PgmError),
        (b"P5\nx 1\n255\n\x00", PgmError),
    ],
)
def test_decode_errors(payload, error):
    with pytest.raises(error):
        decode_pgm(payload)


def test_pgm_errors_are_data_errors():
    assert issubclass(PgmTruncatedError, DataError)


def test_read_missing_file(tmp_path):
    with pytest.raises(DataError) as excinfo:
        read_pgm(tmp_path / "missing.pgm")
    assert "cannot read" in str(excinfo.value)


def test_read_names_the_file(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P5\n2 2\n255\n\x00")

    with pytest.raises(PgmTruncatedError) as excinfo:
        read_pgm(path)
    assert "bad.pgm" in str(excinfo.value)


def test_encode_rejects_color():
    with pytest.raises(PgmError):
        encode_pgm(np.zeros((3, 2, 2)))
