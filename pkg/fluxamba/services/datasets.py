"""Dataset generation service."""

import time
from pathlib import Path

from fluxamba.data.dataset import Split, write_dataset
from fluxamba.data.synthetic import generate
from fluxamba.exceptions import DataError
from fluxamba.logger import get_logger
from fluxamba.models import GenSpec

logger = get_logger(__name__)


def generate_dataset(spec: GenSpec, out: str | Path) -> dict[Split, list[str]]:
    """Render a synthetic dataset and write it under `out`.

    Args:
        spec: Generator parameters.
        out: Dataset root directory; created if missing.

    Returns:
        The sample ids of each split.

    Raises:
        DataError: If spec.count is 0 or the directory cannot be written.
    """
    start_time = time.perf_counter()
    logger.info("generating dataset", extra={"out": str(out), "count": spec.count, "size": spec.size})

    try:
        if spec.count < 1:
            raise DataError("count must be at least 1")
        splits = write_dataset(generate(spec), out)

        duration = time.perf_counter() - start_time
        logger.info(
            "dataset generated",
            extra={
                "out": str(out),
                "train": len(splits[Split.train]),
                "val": len(splits[Split.val]),
                "test": len(splits[Split.test]),
                "duration": f"{duration:.4f}s",
            },
        )
        return splits
    except Exception as e:
        duration = time.perf_counter() - start_time
        logger.error(
            "dataset generation failed",
            extra={"out": str(out), "error": str(e), "duration": f"{duration:.4f}s"},
        )
        raise
