"""Boundary-modulated fusion decoder.

Every stage feature is mixed to the shared width C_e, resampled to the stage-1
resolution (H/4) and recalibrated channel-wise. The aligned maps are summed,
and the stage-1 branch is injected once more through a predicted boundary map
before the segmentation head produces full-resolution logits.
"""

from dataclasses import dataclass, field

import numpy as np

from fluxamba.exceptions import ConfigError, DimensionError
from fluxamba.models import UpsampleMode
from fluxamba.numerics import ops
from fluxamba.numerics.layers import Conv2d, ConvBnRelu
from fluxamba.numerics.params import ParamScope
from fluxamba.numerics.tensor import Tensor

SUPPORTED_SCALES = (1, 2, 4, 8)
OFFSET_RANGE = 0.25
SCALE_GATE_RATIO = 4


@dataclass
class StageFeatures:
    """Encoder outputs f1..f4 at H/4, H/8, H/16 and H/32."""

    stages: list[Tensor]

    def validate(self) -> None:
        if len(self.stages) != 4 or any(f is None for f in self.stages):
            raise ConfigError(f"the decoder needs four stage features, got {len(self.stages)}")
        height, width = self.stages[0].shape[2:]
        for index, f in enumerate(self.stages[1:], start=2):
            expected = (height >> (index - 1), width >> (index - 1))
            if f.shape[2:] != expected:
                raise DimensionError(
                    f"stage {index} spatial axes 2, 3 = {f.shape[2:]} but expected {expected}"
                )


@dataclass
class BoundaryOutput:
    """Decoder result.

    Attributes:
        m_bound: Boundary probabilities [B, 1, H/4, W/4].
        fused: F_Σ plus the boundary-modulated stage-1 residual [B, C_e, H/4, W/4].
        logits: Segmentation logits [B, 1, H, W].
        aligned: The recalibrated stage maps F'_1..F'_4.
    """

    m_bound: Tensor
    fused: Tensor
    logits: Tensor
    aligned: list[Tensor] = field(default_factory=list)


@dataclass
class ScaleGate:
    reduce: Conv2d
    expand: Conv2d

    @classmethod
    def create(cls, scope: ParamScope, channels: int) -> "ScaleGate":
        hidden = max(channels // SCALE_GATE_RATIO, 1)
        return cls(
            Conv2d.create(scope.scope("reduce"), channels, hidden),
            Conv2d.create(scope.scope("expand"), hidden, channels),
        )


def scale_gate(f: Tensor, w: ScaleGate) -> Tensor:
    """α = σ(W2·relu(W1·GAP(f))), shaped [B, C, 1, 1]."""
    return ops.sigmoid(w.expand(ops.relu(w.reduce(ops.global_avg_pool(f)))))


@dataclass
class DynamicUpsampler:
    """Per-output-pixel offset predictor: conv1×1 to 2·s² channels then pixel shuffle.

    Offsets start at zero so a fresh upsampler samples the bilinear grid.
    """

    scale: int
    offset: Conv2d

    @classmethod
    def create(cls, scope: ParamScope, channels: int, scale: int) -> "DynamicUpsampler":
        if scale not in SUPPORTED_SCALES:
            raise ConfigError(f"unsupported upsampling scale {scale}; expected one of {SUPPORTED_SCALES}")
        offset_channels = 2 * scale * scale
        offset = Conv2d(
            scope.value("offset.weight", np.zeros((offset_channels, channels, 1, 1))),
            scope.zeros("offset.bias", (offset_channels,)),
        )
        return cls(scale, offset)


def dyn_upsample(f: Tensor, scale: int, w: DynamicUpsampler | None, mode: UpsampleMode | str) -> Tensor:
    """Upsample by `scale`, dynamically (learned offsets) or plain bilinear.

    Dynamic offsets are o = 0.25·tanh(conv1×1(f)) in input pixels; zero
    offsets reproduce the bilinear output exactly.

    Raises:
        ConfigError: For a scale outside {1, 2, 4, 8}.
    """
    if scale not in SUPPORTED_SCALES:
        raise ConfigError(f"unsupported upsampling scale {scale}; expected one of {SUPPORTED_SCALES}")
    if UpsampleMode(mode) == UpsampleMode.bilinear or w is None:
        return ops.interpolate_bilinear(f, scale)
    offsets = OFFSET_RANGE * ops.tanh(ops.pixel_shuffle(w.offset(f), scale))
    return ops.resample_with_offsets(f, scale, offsets)


@dataclass
class DecoderWeights:
    mlps: list[Conv2d]
    upsamplers: list[DynamicUpsampler | None]
    gates: list[ScaleGate]
    boundary: ConvBnRelu
    boundary_out: Conv2d
    project: Conv2d
    seg: ConvBnRelu
    seg_out: Conv2d

    @classmethod
    def create(cls, scope: ParamScope, channels: tuple[int, ...], embed_dim: int) -> "DecoderWeights":
        mlps, upsamplers, gates = [], [], []
        for index, stage_channels in enumerate(channels):
            stage_scope = scope.scope(f"stage{index + 1}")
            mlps.append(Conv2d.create(stage_scope.scope("mlp"), stage_channels, embed_dim))
            scale = 2**index
            # stage 1 is already at H/4
            upsamplers.append(
                DynamicUpsampler.create(stage_scope.scope("up"), embed_dim, scale) if scale > 1 else None
            )
            gates.append(ScaleGate.create(stage_scope.scope("gate"), embed_dim))
        return cls(
            mlps=mlps,
            upsamplers=upsamplers,
            gates=gates,
            boundary=ConvBnRelu.create(scope.scope("boundary"), embed_dim, embed_dim),
            boundary_out=Conv2d.create(scope.scope("boundary_out"), embed_dim, 1),
            project=Conv2d.create(scope.scope("project"), embed_dim, embed_dim),
            seg=ConvBnRelu.create(scope.scope("seg"), embed_dim, embed_dim),
            seg_out=Conv2d.create(scope.scope("seg_out"), embed_dim, 1),
        )


def align_stage(f: Tensor, index: int, w: DecoderWeights, mode: UpsampleMode | str) -> Tensor:
    """F'_s = α_s ⊙ up(MLP(F_s)) for 0-based stage index."""
    mixed = w.mlps[index](f)
    upsampled = dyn_upsample(mixed, 2**index, w.upsamplers[index], mode)
    return scale_gate(upsampled, w.gates[index]) * upsampled


def bmf_forward(
    stages: StageFeatures,
    w: DecoderWeights,
    lam: float = 1.0,
    training: bool = False,
    dropout: float = 0.1,
    rng: np.random.Generator | None = None,
    mode: UpsampleMode | str = UpsampleMode.dynamic,
) -> BoundaryOutput:
    """Fuse the four stage features and predict logits and the boundary map.

    F_fused = Σ F'_s + λ·(proj(F'_1) ⊙ M_bound), M_bound = σ(head(F'_1)).
    The segmentation head is Conv3×3-BN-ReLU, dropout, conv1×1, then ×4
    bilinear upsampling of the logits.
    """
    stages.validate()
    aligned = [align_stage(f, index, w, mode) for index, f in enumerate(stages.stages)]
    total = aligned[0]
    for f in aligned[1:]:
        total = total + f
    m_bound = ops.sigmoid(w.boundary_out(w.boundary(aligned[0], training)))
    fused = total + lam * (w.project(aligned[0]) * m_bound)
    hidden = ops.dropout(w.seg(fused, training), dropout, rng, training)
    logits = ops.interpolate_bilinear(w.seg_out(hidden), 4)
    return BoundaryOutput(m_bound=m_bound, fused=fused, logits=logits, aligned=aligned)
