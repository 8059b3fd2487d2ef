"""Training service: loads a dataset, trains a fresh model and writes checkpoints and the step log."""

import time
from dataclasses import dataclass
from pathlib import Path

from fluxamba import checkpoint
from fluxamba.config import Precision
from fluxamba.data.dataset import load_split, Split
from fluxamba.exceptions import DataError
from fluxamba.logger import get_logger
from fluxamba.models import ModelConfig, TrainParams
from fluxamba.network import build
from fluxamba.training import StepRecord, train_loop, TrainResult

logger = get_logger(__name__)

BEST_CHECKPOINT = "best.flxa"
FINAL_CHECKPOINT = "final.flxa"
TRAIN_LOG = "train.log"


@dataclass
class TrainOutcome:
    best_path: Path
    final_path: Path
    log_path: Path
    result: TrainResult


def train_model(
    data: str | Path,
    cfg: ModelConfig,
    hp: TrainParams,
    out: str | Path,
    dtype: Precision | str = Precision.f32,
    echo=None,
) -> TrainOutcome:
    """Train a model built from `cfg` on the train split of `data`.

    The final weights go to final.flxa, the weights of the best validation epoch to
    best.flxa, and one `epoch step loss lr` line per step to train.log, all
    under `out`. `echo`, when given, also receives every log line.

    Raises:
        DataError: If the dataset is missing or the output cannot be written.
        BatchNormError: If hp.batch is below 2.
        NumericError: If the loss becomes NaN or infinite.
    """
    start_time = time.perf_counter()
    logger.info(
        "training model",
        extra={
            "data": str(data),
            "variant": cfg.variant,
            "epochs": hp.epochs,
            "batch": hp.batch,
            "lr": hp.lr,
        },
    )

    try:
        train = load_split(data, Split.train)
        val = load_split(data, Split.val)
        out = Path(out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            log_file = (out / TRAIN_LOG).open("w", encoding="utf-8", newline="\n", buffering=1)
        except OSError as exc:
            raise DataError(f"cannot write to {out}: {exc.strerror}") from None

        def on_step(record: StepRecord) -> None:
            log_file.write(record.line() + "\n")
            if echo is not None:
                echo(record.line())

        m = build(cfg, dtype)
        with log_file:
            result = train_loop(m, train, val, hp, on_step=on_step)

        final_path = out / FINAL_CHECKPOINT
        best_path = out / BEST_CHECKPOINT
        checkpoint.save(m, final_path)
        m.store.load_state_dict(result.best_state)
        checkpoint.save(m, best_path)

        duration = time.perf_counter() - start_time
        logger.info(
            "model trained",
            extra={
                "steps": len(result.steps),
                "final_loss": result.losses[-1] if result.steps else None,
                "best_epoch": result.best_epoch,
                "best_f1": result.best_f1,
                "duration": f"{duration:.4f}s",
            },
        )
        return TrainOutcome(best_path, final_path, out / TRAIN_LOG, result)
    except Exception as e:
        duration = time.perf_counter() - start_time
        logger.error(
            "model training failed",
            extra={"data": str(data), "error": str(e), "duration": f"{duration:.4f}s"},
        )
        raise
