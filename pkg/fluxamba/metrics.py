"""Pixel-exact threshold-sweep metrics: precision, recall, F1, ODS, OIS and mIoU.

Degenerate ratios (0/0) are 0 by convention.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from fluxamba.data.synthetic import add_gaussian_noise
from fluxamba.exceptions import EmptySweepError
from fluxamba.models import ConfusionCounts, EvalReport, MiouMode

THRESHOLDS = np.arange(1, 100) / 100.0
DEFAULT_THRESHOLD = 0.5

# column order of ThresholdSweep.counts
TP, FP, FN, TN = range(4)


def _ratio(numerator, denominator):
    numerator = np.asarray(numerator, dtype=np.float64)
    denominator = np.asarray(denominator, dtype=np.float64)
    safe = np.where(denominator > 0, denominator, 1.0)
    return np.where(denominator > 0, numerator / safe, 0.0)


def confusion(p: np.ndarray, y: np.ndarray, t: float) -> ConfusionCounts:
    """Counts of the prediction [p ≥ t] against the binary mask y."""
    predicted = np.asarray(p) >= t
    actual = np.asarray(y) > 0.5
    return ConfusionCounts(
        tp=int(np.count_nonzero(predicted & actual)),
        fp=int(np.count_nonzero(predicted & ~actual)),
        fn=int(np.count_nonzero(~predicted & actual)),
        tn=int(np.count_nonzero(~predicted & ~actual)),
    )


def precision(c: ConfusionCounts) -> float:
    return float(_ratio(c.tp, c.tp + c.fp))


def recall(c: ConfusionCounts) -> float:
    return float(_ratio(c.tp, c.tp + c.fn))


def f1_from_counts(c: ConfusionCounts) -> float:
    """2PR / (P + R), 0 when P + R = 0."""
    return float(_f1(np.array([c.tp, c.fp, c.fn, c.tn])))


def _f1(counts: np.ndarray) -> np.ndarray:
    tp, fp, fn = counts[..., TP], counts[..., FP], counts[..., FN]
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return _ratio(2.0 * p * r, p + r)


def _miou(counts: np.ndarray) -> np.ndarray:
    # background term as TN / (TN + FN + FP)
    tp, fp, fn, tn = (counts[..., i] for i in (TP, FP, FN, TN))
    return 0.5 * (_ratio(tp, tp + fp + fn) + _ratio(tn, tn + fn + fp))


def miou(p: np.ndarray, y: np.ndarray, t: float = DEFAULT_THRESHOLD) -> float:
    """(1/2)·[TP/(TP+FP+FN) + TN/(TN+FN+FP)] of the prediction [p ≥ t]."""
    c = confusion(p, y, t)
    return float(_miou(np.array([c.tp, c.fp, c.fn, c.tn])))


@dataclass
class ThresholdSweep:
    """Per-image confusion counts at every threshold.

    Attributes:
        thresholds: Ascending thresholds in (0, 1), shape [T].
        counts: int64 [N, T, 4] with columns tp, fp, fn, tn.
    """

    thresholds: np.ndarray
    counts: np.ndarray

    @property
    def images(self) -> int:
        return self.counts.shape[0]

    def at(self, image: int, threshold_index: int) -> ConfusionCounts:
        tp, fp, fn, tn = (int(v) for v in self.counts[image, threshold_index])
        return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)

    def pooled(self) -> np.ndarray:
        """Counts summed over images, [T, 4]."""
        return self.counts.sum(axis=0)

    def index_of(self, t: float) -> int:
        matches = np.flatnonzero(np.isclose(self.thresholds, t))
        if matches.size == 0:
            raise ValueError(f"threshold {t} is not on the sweep grid")
        return int(matches[0])


def sweep(
    probabilities: Sequence[np.ndarray], masks: Sequence[np.ndarray], thresholds: np.ndarray = THRESHOLDS
) -> ThresholdSweep:
    """Confusion counts of every image at every threshold."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    counts = np.zeros((len(probabilities), thresholds.size, 4), dtype=np.int64)
    for index, (p, y) in enumerate(zip(probabilities, masks, strict=True)):
        p = np.asarray(p, dtype=np.float64).reshape(-1)
        actual = np.asarray(y).reshape(-1) > 0.5
        predicted = p[None, :] >= thresholds[:, None]
        positives = int(actual.sum())
        counts[index, :, TP] = (predicted & actual).sum(axis=1)
        counts[index, :, FP] = predicted.sum(axis=1) - counts[index, :, TP]
        counts[index, :, FN] = positives - counts[index, :, TP]
        counts[index, :, TN] = actual.size - counts[index, :, :3].sum(axis=-1)
    return ThresholdSweep(thresholds, counts)


def _require_images(s: ThresholdSweep) -> None:
    if s.images == 0:
        raise EmptySweepError("metrics need at least one image")


def ods(s: ThresholdSweep) -> tuple[float, float]:
    """Best F1 of the pooled counts over the grid and the threshold reaching it."""
    _require_images(s)
    scores = _f1(s.pooled())
    best = int(np.argmax(scores))
    return float(scores[best]), float(s.thresholds[best])


def ois(s: ThresholdSweep) -> float:
    """Mean over images of each image's best F1 over the grid."""
    _require_images(s)
    return float(_f1(s.counts).max(axis=1).mean())


def miou_from_sweep(
    s: ThresholdSweep, t: float = DEFAULT_THRESHOLD, mode: MiouMode | str = MiouMode.printed
) -> float:
    _require_images(s)
    index = s.index_of(t)
    if MiouMode(mode) == MiouMode.per_image:
        return float(_miou(s.counts[:, index]).mean())
    return float(_miou(s.pooled()[index]))


def evaluate(
    probabilities: Sequence[np.ndarray],
    masks: Sequence[np.ndarray],
    sigma: float = 0.0,
    mode: MiouMode | str = MiouMode.printed,
) -> EvalReport:
    """Precision, recall and F1 at 0.5, ODS, OIS and mIoU of one split."""
    s = sweep(probabilities, masks)
    _require_images(s)
    index = s.index_of(DEFAULT_THRESHOLD)
    pooled = s.pooled()[index]
    counts = ConfusionCounts(tp=int(pooled[TP]), fp=int(pooled[FP]), fn=int(pooled[FN]), tn=int(pooled[TN]))
    best, best_threshold = ods(s)
    return EvalReport(
        sigma=sigma,
        images=s.images,
        precision=precision(counts),
        recall=recall(counts),
        f1=f1_from_counts(counts),
        ods=best,
        ods_threshold=best_threshold,
        ois=ois(s),
        miou=miou_from_sweep(s, DEFAULT_THRESHOLD, mode),
    )


def drop_rate(miou_clean: float, miou_noisy: float) -> float:
    """(mIoU(0) − mIoU(σ)) / mIoU(0), 0 when the clean mIoU is 0."""
    if miou_clean == 0:
        return 0.0
    return (miou_clean - miou_noisy) / miou_clean


def robustness_sweep(
    predict: Callable[[np.ndarray], np.ndarray],
    images: Sequence[np.ndarray],
    masks: Sequence[np.ndarray],
    sigmas: Sequence[float],
    seed: int = 42,
    mode: MiouMode | str = MiouMode.printed,
) -> list[EvalReport]:
    """Evaluate under Gaussian input noise at each σ and attach drop rates.

    Image i at noise σ is perturbed with the noise stream seeded by (seed, i), so
    a report can be recomputed directly. The clean reference is σ = 0, evaluated
    even when it is not requested.

    Raises:
        ValueError: If a σ is negative.
    """
    if any(sigma < 0 for sigma in sigmas):
        raise ValueError("noise levels must be non-negative")

    def report_at(sigma: float) -> EvalReport:
        noisy = [add_gaussian_noise(image, sigma, seed=(seed, index)) for index, image in enumerate(images)]
        return evaluate([predict(image) for image in noisy], masks, sigma, mode)

    clean = report_at(0.0)
    reports = []
    for sigma in sigmas:
        report = clean.model_copy() if sigma == 0 else report_at(float(sigma))
        reports.append(report.model_copy(update={"drop_rate": drop_rate(clean.miou, report.miou)}))
    return reports
