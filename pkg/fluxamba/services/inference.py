"""Inference service: checkpoint + image → thresholded mask, optionally with feature dumps."""

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fluxamba import checkpoint
from fluxamba.data.pgm import read_pgm, write_pgm
from fluxamba.exceptions import DataError
from fluxamba.logger import get_logger
from fluxamba.network import predict, TAP_NAMES
from fluxamba.numerics.tensor import Tensor

logger = get_logger(__name__)

MASK_THRESHOLD = 0.5


@dataclass
class InferenceOutcome:
    """Result of one inference call.

    Attributes:
        padding: Rows and columns of reflect padding added to reach a multiple of 32.
        foreground: Number of predicted foreground pixels.
        dumps: Feature dump files, one per stage.
    """

    padding: tuple[int, int]
    foreground: int
    dumps: list[Path] = field(default_factory=list)


def dump_features(taps: dict[str, Tensor], out: str | Path) -> list[Path]:
    """Write one checkpoint-format file per stage holding its six tapped maps."""
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out}: {exc.strerror}") from None
    stages = sorted({name.split(".", 1)[0] for name in taps})
    paths = []
    for stage in stages:
        tensors = {name: taps[f"{stage}.{name}"].data for name in TAP_NAMES}
        path = out / f"{stage}.flxa"
        checkpoint.save_tensors(path, tensors)
        paths.append(path)
    return paths


def infer(
    ckpt: str | Path, image_path: str | Path, out_path: str | Path, dump_dir: str | Path | None = None
) -> InferenceOutcome:
    """Predict the mask of one PGM image and write it as a {0, 255} PGM.

    Raises:
        DataError: If the checkpoint or the image cannot be read, or an output cannot be written.
    """
    start_time = time.perf_counter()
    logger.info("running inference", extra={"ckpt": str(ckpt), "input": str(image_path)})

    try:
        m = checkpoint.load(ckpt)
        image = read_pgm(image_path)
        taps: dict[str, Tensor] | None = {} if dump_dir is not None else None
        probs, padding = predict(m, image, taps)
        mask = (probs >= MASK_THRESHOLD).astype(np.float64)
        write_pgm(mask, out_path)
        dumps = dump_features(taps, dump_dir) if taps is not None else []
        outcome = InferenceOutcome(padding=padding, foreground=int(mask.sum()), dumps=dumps)

        duration = time.perf_counter() - start_time
        logger.info(
            "inference finished",
            extra={
                "out": str(out_path),
                "padding": list(padding),
                "foreground": outcome.foreground,
                "dumps": len(dumps),
                "duration": f"{duration:.4f}s",
            },
        )
        return outcome
    except Exception as e:
        duration = time.perf_counter() - start_time
        logger.error(
            "inference failed",
            extra={"input": str(image_path), "error": str(e), "duration": f"{duration:.4f}s"},
        )
        raise
