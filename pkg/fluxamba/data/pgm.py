"""Binary graymap (P5) codec with maxval 255.

Pixel values map linearly to [0, 1]; one comment line is allowed after the magic.
"""

from pathlib import Path

import numpy as np

from fluxamba.exceptions import (
    DataError,
    PgmError,
    PgmMagicError,
    PgmMaxvalError,
    PgmTruncatedError,
    PgmUnsupportedFormatError,
)

MAXVAL = 255
WHITESPACE = b" \t\r\n"


def _header_tokens(payload: bytes) -> tuple[list[bytes], int]:
    """Split the width, height and maxval tokens off the header; returns them and the payload offset."""
    tokens: list[bytes] = []
    offset = 2
    comments = 0
    while len(tokens) < 3:
        while offset < len(payload) and payload[offset] in WHITESPACE:
            offset += 1
        if offset >= len(payload):
            raise PgmTruncatedError("header ends before width, height and maxval")
        if payload[offset] == ord("#"):
            comments += 1
            if comments > 1:
                raise PgmError("only one comment line is supported")
            end = payload.find(b"\n", offset)
            if end < 0:
                raise PgmTruncatedError("header ends inside a comment")
            offset = end + 1
            continue
        start = offset
        while offset < len(payload) and payload[offset] not in WHITESPACE:
            offset += 1
        tokens.append(payload[start:offset])
    if offset >= len(payload):
        raise PgmTruncatedError("header is not followed by pixel data")
    # exactly one whitespace byte separates maxval from the raster
    return tokens, offset + 1


def decode_pgm(payload: bytes) -> np.ndarray:
    """Decode a P5 payload to float64 [1, H, W] in [0, 1].

    Raises:
        PgmMagicError: If the payload is not a netpbm file.
        PgmUnsupportedFormatError: For P1-P4 and P6.
        PgmMaxvalError: If maxval is not 255.
        PgmTruncatedError: If the raster is shorter than width·height.
        PgmError: For a malformed header.
    """
    magic = payload[:2]
    if len(magic) < 2 or magic[:1] != b"P" or magic[1:2] not in b"123456":
        raise PgmMagicError(f"not a netpbm file: magic {magic!r}")
    if magic != b"P5":
        raise PgmUnsupportedFormatError(f"netpbm format {magic.decode()} is not supported, only binary P5")
    tokens, offset = _header_tokens(payload)
    try:
        width, height, maxval = (int(token) for token in tokens)
    except ValueError:
        raise PgmError(f"malformed header values {[t.decode(errors='replace') for t in tokens]}") from None
    if maxval != MAXVAL:
        raise PgmMaxvalError(f"maxval {maxval} is not supported, only {MAXVAL}")
    if width < 1 or height < 1:
        raise PgmError(f"invalid image size {width}x{height}")
    raster = payload[offset : offset + width * height]
    if len(raster) < width * height:
        raise PgmTruncatedError(f"raster has {len(raster)} bytes, header declares {width * height}")
    values = np.frombuffer(raster, dtype=np.uint8).reshape(1, height, width)
    return values.astype(np.float64) / MAXVAL


def encode_pgm(values: np.ndarray, comment: str | None = None) -> bytes:
    """Quantize [1, H, W] or [H, W] values in [0, 1] to 8 bits and encode as P5."""
    values = np.asarray(values)
    if values.ndim == 3 and values.shape[0] == 1:
        values = values[0]
    if values.ndim != 2:
        raise PgmError(f"expected a single-channel image, got shape {values.shape}")
    raster = np.rint(np.clip(values, 0.0, 1.0) * MAXVAL).astype(np.uint8)
    height, width = raster.shape
    header = b"P5\n"
    if comment:
        header += b"# " + comment.replace("\n", " ").encode("utf-8") + b"\n"
    header += f"{width} {height}\n{MAXVAL}\n".encode("ascii")
    return header + raster.tobytes()


def read_pgm(path: str | Path) -> np.ndarray:
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return decode_pgm(payload)
    except PgmError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def write_pgm(values: np.ndarray, path: str | Path, comment: str | None = None) -> None:
    """Write values in [0, 1] as an 8-bit P5 file; binary masks come out as {0, 255}."""
    try:
        Path(path).write_bytes(encode_pgm(values, comment))
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None
