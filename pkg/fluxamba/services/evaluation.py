"""Evaluation service: metrics of a checkpoint on a split, optionally under input noise."""

import csv
import time
from collections.abc import Sequence
from pathlib import Path

from fluxamba import checkpoint
from fluxamba.data.dataset import load_split, Split
from fluxamba.exceptions import DataError, EmptySweepError
from fluxamba.logger import get_logger
from fluxamba.metrics import DEFAULT_THRESHOLD, robustness_sweep
from fluxamba.models import EvalReport, MiouMode
from fluxamba.network import predict

logger = get_logger(__name__)

CSV_HEADER = ("sigma", "metric", "threshold", "value")
CSV_METRICS = ("precision", "recall", "f1", "ods", "ois", "miou", "drop_rate")


def csv_rows(reports: Sequence[EvalReport]) -> list[tuple[str, str, str, str]]:
    """One row per (σ, metric). OIS picks a threshold per image, so its threshold cell is empty."""
    rows = []
    for report in reports:
        for metric in CSV_METRICS:
            if metric == "ods":
                threshold = f"{report.ods_threshold:.2f}"
            elif metric == "ois":
                threshold = ""
            else:
                threshold = f"{DEFAULT_THRESHOLD:.2f}"
            value = getattr(report, metric)
            rows.append((f"{report.sigma:g}", metric, threshold, f"{0.0 if value is None else value:.6f}"))
    return rows


def write_csv(reports: Sequence[EvalReport], path: str | Path) -> None:
    try:
        with Path(path).open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            writer.writerows(csv_rows(reports))
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None


def evaluate_checkpoint(
    ckpt: str | Path,
    data: str | Path,
    split: Split | str = Split.test,
    sigmas: Sequence[float] = (0.0,),
    seed: int = 42,
    mode: MiouMode | str = MiouMode.printed,
    csv_path: str | Path | None = None,
) -> list[EvalReport]:
    """Evaluate a checkpoint on one split at every noise level in `sigmas`.

    Args:
        ckpt: Checkpoint file.
        data: Dataset root.
        split: Split to evaluate.
        sigmas: Gaussian noise levels; the noise-free run is the drop-rate reference.
        seed: Noise seed.
        mode: mIoU aggregation.
        csv_path: Where to write the `sigma,metric,threshold,value` table, if anywhere.

    Returns:
        One report per σ, in the given order.

    Raises:
        EmptySweepError: If the split has no samples.
        DataError: If the checkpoint or dataset cannot be read.
    """
    start_time = time.perf_counter()
    logger.info(
        "evaluating checkpoint",
        extra={"ckpt": str(ckpt), "data": str(data), "split": str(split), "sigmas": list(sigmas)},
    )

    try:
        m = checkpoint.load(ckpt)
        samples = load_split(data, split)
        if not samples:
            raise EmptySweepError(f"split {split} of {data} is empty")
        reports = robustness_sweep(
            lambda image: predict(m, image)[0],
            [s.image for s in samples],
            [s.mask for s in samples],
            sigmas,
            seed=seed,
            mode=mode,
        )
        if csv_path is not None:
            write_csv(reports, csv_path)

        duration = time.perf_counter() - start_time
        logger.info(
            "checkpoint evaluated",
            extra={"images": len(samples), "reports": len(reports), "duration": f"{duration:.4f}s"},
        )
        return reports
    except Exception as e:
        duration = time.perf_counter() - start_time
        logger.error(
            "checkpoint evaluation failed",
            extra={"ckpt": str(ckpt), "error": str(e), "duration": f"{duration:.4f}s"},
        )
        raise
