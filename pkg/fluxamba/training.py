"""Mini-batch training with AdamW, the polynomial schedule and best-validation-F1 retention."""

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from fluxamba.data.augment import augment
from fluxamba.data.sample import Sample
from fluxamba.exceptions import BatchNormError, DataError, NumericError
from fluxamba.logger import get_logger
from fluxamba.losses import total_loss
from fluxamba.metrics import confusion, f1_from_counts
from fluxamba.models import ConfusionCounts, TrainParams
from fluxamba.network import forward, Model, predict
from fluxamba.numerics.optim import adamw_step, AdamWState, poly_lr
from fluxamba.numerics.tensor import backward, Tape, Tensor

logger = get_logger(__name__)

MIN_BATCH = 2


@dataclass(frozen=True)
class StepRecord:
    epoch: int
    step: int
    loss: float
    lr: float
    bce: float
    dice: float
    boundary: float

    def line(self) -> str:
        """`epoch step loss lr` log line."""
        return f"{self.epoch} {self.step} {self.loss:.6f} {self.lr:.6g}"


@dataclass
class TrainResult:
    """Everything a training run produced.

    Attributes:
        steps: One record per optimizer step.
        val_f1: Validation F1 at 0.5 after each epoch (empty without a validation split).
        best_epoch: Epoch whose weights are kept in best_state.
        best_f1: Validation F1 of best_state, None without a validation split.
        best_state: Parameter and buffer snapshot of the best epoch.
    """

    steps: list[StepRecord] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float | None = None
    best_state: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def losses(self) -> list[float]:
        return [record.loss for record in self.steps]


def batches(count: int, batch: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches; a trailing batch smaller than two samples is dropped."""
    order = rng.permutation(count)
    chunks = [order[i : i + batch] for i in range(0, count, batch)]
    return [chunk for chunk in chunks if len(chunk) >= MIN_BATCH]


def stack(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([s.image for s in samples]), np.stack([s.mask for s in samples])


def f1_at_half(m: Model, samples: Sequence[Sample]) -> float:
    """Pooled F1 at threshold 0.5 of the model's predictions."""
    counts = ConfusionCounts()
    for sample in samples:
        probs, _ = predict(m, sample.image)
        counts = counts + confusion(probs, sample.mask, 0.5)
    return f1_from_counts(counts)


def train_step(
    m: Model,
    images: np.ndarray,
    masks: np.ndarray,
    state: AdamWState,
    lr: float,
    hp: TrainParams,
    rng: np.random.Generator,
) -> tuple[float, float, float, float]:
    """One forward/backward/AdamW update; returns (total, bce, dice, boundary).

    Raises:
        NumericError: If the loss is not finite.
    """
    x = Tensor(images, dtype=m.precision)
    m.store.zero_grad()
    with Tape() as tape:
        out = forward(m, x, training=True, rng=rng)
        breakdown = total_loss(out, masks, hp.loss)
    value = breakdown.total.item()
    if not math.isfinite(value):
        raise NumericError(f"loss became {value}")
    backward(breakdown.total, tape)
    grads = {name: p.grad for name, p in m.store.params.items()}
    adamw_step(m.store.params, grads, state, lr, weight_decay=hp.weight_decay)
    return value, breakdown.bce, breakdown.dice, breakdown.boundary


def train_loop(
    m: Model,
    train: Sequence[Sample],
    val: Sequence[Sample] = (),
    hp: TrainParams = TrainParams(),
    on_step: Callable[[StepRecord], None] | None = None,
) -> TrainResult:
    """Train `m` in place.

    Per epoch the training samples are shuffled with the run seed, optionally
    augmented, and fed in batches; the learning rate follows
    poly_lr(lr, epoch, epochs, power). After each epoch the validation F1 at 0.5
    decides whether the weights become the new best; without a validation split
    the last epoch is kept.

    Raises:
        BatchNormError: If the batch size is below 2.
        DataError: If the training split cannot fill one batch.
        NumericError: If the loss turns NaN or infinite; the message names the step.
    """
    if hp.batch < MIN_BATCH:
        raise BatchNormError(
            f"batch size {hp.batch} is too small: batch norm needs at least {MIN_BATCH} samples per step"
        )
    if len(train) < MIN_BATCH:
        raise DataError(f"training split has {len(train)} samples; at least {MIN_BATCH} are needed")

    rng = np.random.default_rng(hp.seed)
    state = AdamWState()
    result = TrainResult()
    step = 0
    for epoch in range(hp.epochs):
        lr = poly_lr(hp.lr, epoch, hp.epochs, hp.power)
        for chunk in batches(len(train), hp.batch, rng):
            samples = [train[i] for i in chunk]
            if hp.augment:
                samples = [augment(s, rng.integers(1 << 32)) for s in samples]
            images, masks = stack(samples)
            try:
                total, bce, dice, boundary = train_step(m, images, masks, state, lr, hp, rng)
            except NumericError as e:
                logger.error("training aborted", extra={"epoch": epoch, "step": step + 1, "error": str(e)})
                raise NumericError(f"epoch {epoch} step {step + 1}: {e}") from None
            step += 1
            record = StepRecord(epoch, step, total, lr, bce, dice, boundary)
            result.steps.append(record)
            logger.debug("training step", extra={"epoch": epoch, "step": step, "loss": total, "lr": lr})
            if on_step is not None:
                on_step(record)
            if hp.max_steps is not None and step >= hp.max_steps:
                break

        if val:
            f1 = f1_at_half(m, val)
            result.val_f1.append(f1)
            if result.best_f1 is None or f1 > result.best_f1:
                result.best_f1, result.best_epoch, result.best_state = f1, epoch, m.store.state_dict()
            logger.info("epoch finished", extra={"epoch": epoch, "val_f1": f1, "steps": step})
        else:
            result.best_epoch, result.best_state = epoch, m.store.state_dict()
            logger.info("epoch finished", extra={"epoch": epoch, "steps": step})
        if hp.max_steps is not None and step >= hp.max_steps:
            break
    return result
