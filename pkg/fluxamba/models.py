"""Pydantic models for fluxamba configuration and reports."""

import itertools
from enum import StrEnum
from typing import Any

import orjson
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from fluxamba.config import Precision, settings
from fluxamba.scan import ScanStrategy


class UpsampleMode(StrEnum):
    dynamic = "dynamic"
    bilinear = "bilinear"


class MiouMode(StrEnum):
    """How mIoU is aggregated over a split.

    printed pools counts over all images before applying the two-class formula
    and is the aggregation that reproduces the published mIoU figures; per_image
    averages the per-image values instead.
    """

    printed = "printed"
    per_image = "per_image"


class BlockConfig(BaseModel):
    """Structural Flux Block hyperparameters and component toggles.

    A disabled component is replaced by its pass-through: ASG off keeps x_base,
    PMF off uses a single HRaster scan, HSR off adds x_pmf and x_base, HFFU off
    is the identity.

    Attributes:
        channels: Feature width C of the block.
        enable_asg: Anisotropic geometric gating.
        enable_pmf: Gated four-direction flux aggregation.
        enable_hsr: Stage-adaptive refinement (LMR or GTR).
        enable_hffu: Non-residual dual-gate filtering.
        dilations: Dilation rates of the LMR branches.
        heads: Attention heads of GTR.
        ffn_ratio: GTR feed-forward expansion.
        state_size: Selective-scan state size N.
        strategy: Scan routes used by the flux stage.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    channels: int = Field(default=32, ge=1)
    enable_asg: bool = True
    enable_pmf: bool = True
    enable_hsr: bool = True
    enable_hffu: bool = True
    dilations: tuple[int, ...] = (1, 2, 3)
    heads: int = Field(default=4, ge=1)
    ffn_ratio: int = Field(default=2, ge=1)
    state_size: int = Field(default=8, ge=1)
    strategy: ScanStrategy = ScanStrategy.fs2d

    @field_validator("dilations")
    def validate_dilations(cls, v: tuple[int, ...]):
        """Validate the LMR dilation set.

        Args:
            v: The dilation rates.

        Returns:
            The validated rates.

        Raises:
            ValueError: If the set is empty or a rate is below 1.
        """
        if not v or any(r < 1 for r in v):
            raise ValueError("dilations must be a non-empty list of rates >= 1")
        return v


class ModelConfig(BaseModel):
    """Full architecture hyperparameters.

    Attributes:
        variant: Name of the preset this config came from, if any.
        depths: Number of stacked blocks per stage.
        channels: Feature width per stage.
        block: Block toggles and hyperparameters shared by all stages.
        embed_dim: Shared decoder width C_e.
        boundary_lambda: Weight λ of the boundary-modulated residual.
        in_channels: Image channels (1 for grayscale, 3 for RGB).
        dropout: Segmentation head dropout rate.
        upsample: Decoder upsampling mode.
        seed: Initialization seed.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    variant: str | None = None
    depths: tuple[int, int, int, int] = (1, 1, 2, 1)
    channels: tuple[int, int, int, int] = (32, 64, 128, 256)
    block: BlockConfig = BlockConfig()
    embed_dim: int = Field(default=64, ge=1)
    boundary_lambda: float = Field(default=1.0, ge=0.0)
    in_channels: int = Field(default=1, ge=1)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    upsample: UpsampleMode = UpsampleMode.dynamic
    seed: int = Field(default=42, ge=0)

    @field_validator("depths", "channels")
    def validate_positive(cls, v: tuple[int, ...]):
        """Validate that every stage has at least one block and one channel.

        Args:
            v: Per-stage values.

        Returns:
            The validated values.

        Raises:
            ValueError: If any value is below 1.
        """
        if any(value < 1 for value in v):
            raise ValueError("every stage value must be >= 1")
        return v

    def stage_block(self, stage: int) -> BlockConfig:
        """Block config of a 1-based stage, with its channel width filled in."""
        return self.block.model_copy(update={"channels": self.channels[stage - 1]})

    def to_lines(self) -> list[str]:
        """Flatten to `key=value` lines with JSON-encoded values."""
        lines = []
        for key, value in self.model_dump(mode="json").items():
            if isinstance(value, dict):
                lines.extend(f"{key}.{sub}={orjson.dumps(v).decode()}" for sub, v in value.items())
            else:
                lines.append(f"{key}={orjson.dumps(value).decode()}")
        return lines

    @classmethod
    def from_lines(cls, lines: list[str]) -> "ModelConfig":
        """Inverse of to_lines; unknown keys are rejected by validation."""
        data: dict[str, Any] = {}
        for line in lines:
            if not line.strip():
                continue
            key, _, raw = line.partition("=")
            value = orjson.loads(raw)
            if "." in key:
                outer, inner = key.split(".", 1)
                data.setdefault(outer, {})[inner] = value
            else:
                data[key] = value
        return cls.model_validate(data)


VARIANTS: dict[str, dict[str, Any]] = {
    "micro": {"depths": (1, 1, 1, 1), "channels": (4, 8, 16, 32), "embed_dim": 16},
    "tiny": {"depths": (1, 1, 2, 1)},
    "small": {"depths": (2, 2, 3, 2)},
    "base": {"depths": (2, 2, 4, 2)},
    "large": {"depths": (2, 3, 6, 3)},
}


def variant_config(name: str, **overrides) -> ModelConfig:
    """ModelConfig of a named preset, with field overrides.

    micro is a desk-scale test variant; tiny..large share channels
    (32, 64, 128, 256) and differ in depth.

    Raises:
        ValueError: If the variant is unknown.
    """
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; expected one of {', '.join(VARIANTS)}")
    return ModelConfig(variant=name, **{**VARIANTS[name], **overrides})


TOGGLES = ("enable_asg", "enable_pmf", "enable_hsr", "enable_hffu")


def ablation_lattice(cfg: ModelConfig) -> list[tuple[dict[str, bool], ModelConfig]]:
    """All 16 on/off combinations of the four block components, all-off first."""
    lattice = []
    for bits in itertools.product((False, True), repeat=len(TOGGLES)):
        toggles = dict(zip(TOGGLES, bits, strict=True))
        lattice.append((toggles, cfg.model_copy(update={"block": cfg.block.model_copy(update=toggles)})))
    return lattice


class LossWeights(BaseModel):
    """Weights of the hybrid objective.

    Attributes:
        bce: Weight of the weighted BCE term.
        dice: Weight of the soft Dice term.
        boundary: Weight of the boundary term.
        w_pos: Positive-class weight inside the BCE.
        eps: Dice smoothing.
    """

    model_config = ConfigDict(frozen=True)

    bce: float = Field(default=0.3, ge=0.0)
    dice: float = Field(default=0.4, ge=0.0)
    boundary: float = Field(default=0.2, ge=0.0)
    w_pos: float = Field(default=5.0, ge=0.0)
    eps: float = Field(default=1.0, gt=0.0)


class TrainParams(BaseModel):
    """Training loop hyperparameters.

    Attributes:
        epochs: Passes over the training split.
        batch: Samples per step; batch norm needs at least 2.
        lr: Base learning rate of the polynomial schedule.
        weight_decay: Decoupled AdamW decay.
        power: Polynomial schedule power.
        seed: Shuffle, augmentation and dropout seed.
        augment: Apply random flips and rotations.
        max_steps: Stop after this many optimizer steps.
        loss: Objective weights.
    """

    epochs: int = Field(default=5, ge=1)
    batch: int = Field(default=2, ge=1)
    lr: float = Field(default=1e-5, ge=0.0)
    weight_decay: float = Field(default=0.01, ge=0.0)
    power: float = Field(default=0.9, ge=0.0)
    seed: int = Field(default=settings.seed, ge=0)
    augment: bool = True
    max_steps: int | None = Field(default=None, ge=1)
    loss: LossWeights = LossWeights()


class GenSpec(BaseModel):
    """Synthetic lineament dataset parameters.

    Attributes:
        count: Number of samples.
        size: Image height and width.
        strokes: Curvilinear strokes per image.
        thickness_min: Smallest stroke thickness in pixels.
        thickness_max: Largest stroke thickness in pixels.
        contrast_min: Smallest stroke-vs-background intensity gap.
        contrast_max: Largest stroke-vs-background intensity gap.
        craters: Circular distractors per image.
        texture_scale: Coarsest value-noise cell size in pixels.
        texture_amplitude: Background texture amplitude; 0 gives a flat background.
        seed: Generator seed.
    """

    model_config = ConfigDict(frozen=True)

    count: int = Field(default=10, ge=0)
    size: int = Field(default=64, ge=8)
    strokes: int = Field(default=3, ge=0)
    thickness_min: float = Field(default=1.5, gt=0.0)
    thickness_max: float = Field(default=3.0, gt=0.0)
    contrast_min: float = Field(default=0.15, ge=0.0, le=0.6)
    contrast_max: float = Field(default=0.35, ge=0.0, le=0.6)
    craters: int = Field(default=2, ge=0)
    texture_scale: int = Field(default=16, ge=2)
    texture_amplitude: float = Field(default=0.15, ge=0.0, le=0.4)
    seed: int = Field(default=settings.seed, ge=0)

    @model_validator(mode="after")
    def validate_ranges(self):
        """Validate that every min/max pair is ordered.

        Returns:
            The validated spec.

        Raises:
            ValueError: If a minimum exceeds its maximum.
        """
        if self.thickness_min > self.thickness_max:
            raise ValueError("thickness_min must be less than or equal to thickness_max")
        if self.contrast_min > self.contrast_max:
            raise ValueError("contrast_min must be less than or equal to contrast_max")
        return self


class ConfusionCounts(BaseModel):
    """Pixel confusion counts of a binary prediction."""

    model_config = ConfigDict(frozen=True)

    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp, fp=self.fp + other.fp, fn=self.fn + other.fn, tn=self.tn + other.tn
        )


class EvalReport(BaseModel):
    """Metrics of one split at one noise level.

    Attributes:
        sigma: Gaussian noise level applied to the inputs.
        images: Number of evaluated images.
        precision: Pooled precision at threshold 0.5.
        recall: Pooled recall at threshold 0.5.
        f1: Pooled F1 at threshold 0.5.
        ods: Dataset-level best F1 over the threshold grid.
        ods_threshold: Threshold attaining ODS.
        ois: Mean of per-image best F1.
        miou: Two-class mIoU at threshold 0.5.
        drop_rate: Relative mIoU decline versus the noise-free run.
    """

    sigma: float = 0.0
    images: int
    precision: float
    recall: float
    f1: float
    ods: float
    ods_threshold: float
    ois: float
    miou: float
    drop_rate: float | None = None


class CostReport(BaseModel):
    """Size and speed of a model at one input size.

    Attributes:
        params: Trainable scalar count.
        flops: Analytic FLOPs of one forward pass on one image.
        size_bytes: Serialized checkpoint size.
        latency_mean: Mean forward latency in seconds.
        latency_median: Median forward latency in seconds.
        fps: 1 / latency_mean.
    """

    params: int
    flops: int
    size_bytes: int
    latency_mean: float | None = None
    latency_median: float | None = None
    fps: float | None = None


class RunConfig(BaseModel):
    """A parsed command invocation, logged at command start.

    Attributes:
        command: Subcommand name.
        seed: Effective seed.
        paths: Input/output paths by role.
        options: Remaining flag values.
        model: Resolved architecture, when the command builds one.
        dtype: Tensor precision the command runs in.
    """

    command: str
    seed: int = settings.seed
    paths: dict[str, str] = {}
    options: dict[str, Any] = {}
    model: ModelConfig | None = None
    dtype: Precision = settings.dtype
