"""Binary checkpoint format for named tensors plus a key=value config block.

Layout, all integers little-endian:

    b"FLXA" | u32 version | u32 tensor count
    per tensor: u16 name length | UTF-8 name | u8 dtype tag | u8 rank | u32 dims | payload
    u32 config length | UTF-8 config text (key=value lines)

dtype tags: 0 = f32, 1 = f64. Payloads are raw row-major values.
"""

import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from fluxamba.exceptions import (
    CheckpointError,
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    DataError,
)
from fluxamba.logger import get_logger
from fluxamba.models import ModelConfig
from fluxamba.network import build, Model

logger = get_logger(__name__)

MAGIC = b"FLXA"
VERSION = 1
DTYPE_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
TAG_DTYPES = {tag: dtype for dtype, tag in DTYPE_TAGS.items()}
HEADER = struct.Struct("<4sII")


def encoded_size(tensors: Mapping[str, np.ndarray], config_text: str = "") -> int:
    """Byte size of encode(tensors, config_text) computed from the layout alone."""
    size = HEADER.size
    for name, values in tensors.items():
        size += 2 + len(name.encode("utf-8")) + 1 + 1 + 4 * values.ndim + values.size * values.dtype.itemsize
    return size + 4 + len(config_text.encode("utf-8"))


def encode(tensors: Mapping[str, np.ndarray], config_text: str = "") -> bytes:
    chunks = [HEADER.pack(MAGIC, VERSION, len(tensors))]
    for name, values in tensors.items():
        dtype = np.dtype(values.dtype).newbyteorder("<")
        if dtype not in DTYPE_TAGS:
            raise CheckpointError(f"{name}: unsupported dtype {values.dtype}")
        encoded_name = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack("<BB", DTYPE_TAGS[dtype], values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(np.ascontiguousarray(values, dtype=dtype).tobytes())
    text = config_text.encode("utf-8")
    chunks.append(struct.pack("<I", len(text)))
    chunks.append(text)
    return b"".join(chunks)


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.payload):
            raise CheckpointTruncatedError(
                f"checkpoint ends at byte {len(self.payload)} while reading {what} (needs {end})"
            )
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(payload: bytes) -> tuple[dict[str, np.ndarray], str]:
    """Inverse of encode.

    Raises:
        CheckpointMagicError: If the magic bytes differ.
        CheckpointVersionError: If the version is not supported.
        CheckpointTruncatedError: If the payload ends early.
        CheckpointError: For an unknown dtype tag or trailing bytes.
    """
    if len(payload) < len(MAGIC) or payload[: len(MAGIC)] != MAGIC:
        raise CheckpointMagicError(f"not a checkpoint: expected magic {MAGIC!r}, got {payload[:4]!r}")
    reader = _Reader(payload)
    _, version, count = reader.unpack("<4sII", "header")
    if version != VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} is not supported (expected {VERSION})"
        )
    tensors = {}
    for _ in range(count):
        (name_length,) = reader.unpack("<H", "name length")
        name = reader.take(name_length, "tensor name").decode("utf-8")
        tag, rank = reader.unpack("<BB", f"{name} header")
        if tag not in TAG_DTYPES:
            raise CheckpointError(f"{name}: unknown dtype tag {tag}")
        shape = reader.unpack(f"<{rank}I", f"{name} dims")
        dtype = TAG_DTYPES[tag]
        raw = reader.take(int(np.prod(shape, dtype=np.int64)) * dtype.itemsize, f"{name} payload")
        tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    (text_length,) = reader.unpack("<I", "config length")
    text = reader.take(text_length, "config block").decode("utf-8")
    if reader.offset != len(payload):
        raise CheckpointError(f"{len(payload) - reader.offset} unexpected trailing bytes")
    return tensors, text


def save_tensors(path: str | Path, tensors: Mapping[str, np.ndarray], config_text: str = "") -> int:
    """Write tensors to `path`; returns the number of bytes written."""
    payload = encode(tensors, config_text)
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None
    return len(payload)


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], str]:
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    return decode(payload)


def model_config_text(m: Model) -> str:
    return "\n".join(m.config.to_lines()) + "\n"


def save(m: Model, path: str | Path) -> int:
    """Write every parameter and buffer of `m` plus its config."""
    size = save_tensors(path, m.store.state_dict(), model_config_text(m))
    logger.debug("checkpoint saved", extra={"path": str(path), "size_bytes": size})
    return size


def load(path: str | Path) -> Model:
    """Rebuild the model described by the checkpoint's config and restore its weights bit-exactly."""
    tensors, text = load_tensors(path)
    try:
        cfg = ModelConfig.from_lines(text.splitlines())
    except ValueError as exc:
        raise CheckpointError(f"invalid config block in {path}: {exc}") from None
    dtype = "f64" if any(v.dtype == np.float64 for v in tensors.values()) else "f32"
    m = build(cfg, dtype)
    try:
        m.store.load_state_dict(tensors)
    except Exception as exc:
        raise CheckpointError(f"{path} does not match its config: {exc}") from None
    logger.debug("checkpoint loaded", extra={"path": str(path), "tensors": len(tensors)})
    return m
