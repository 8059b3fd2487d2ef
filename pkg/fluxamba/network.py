"""Full model assembly: stem, four stages of stacked blocks, downsamplers and the decoder."""

from dataclasses import dataclass

import numpy as np

from fluxamba.blocks import FeatureMap, sfb_forward, SfbWeights
from fluxamba.config import Precision
from fluxamba.decoder import BoundaryOutput, bmf_forward, DecoderWeights, StageFeatures
from fluxamba.exceptions import ConfigError, DimensionError
from fluxamba.models import ModelConfig
from fluxamba.numerics import ops
from fluxamba.numerics.layers import BatchNorm2d, Conv2d
from fluxamba.numerics.params import ParamStore
from fluxamba.numerics.tensor import Tensor

TOTAL_STRIDE = 32
TAP_NAMES = ("base", "asg", "pmf", "hsr", "hffu", "aligned")


@dataclass
class Stem:
    conv1: Conv2d
    norm: BatchNorm2d
    conv2: Conv2d

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return self.conv2(ops.relu(self.norm(self.conv1(x), training)))


@dataclass
class Model:
    """Built network: its config, the parameter store and the structured weights."""

    config: ModelConfig
    store: ParamStore
    stem: Stem
    stages: list[list[SfbWeights]]
    downsamplers: list[Conv2d]
    decoder: DecoderWeights

    @property
    def precision(self) -> Precision:
        return self.store.dtype


def build(cfg: ModelConfig, dtype: Precision | str = Precision.f32) -> Model:
    """Create a model with deterministic initialization from cfg.seed.

    The stem brings the input to C1 channels at H/4 with two stride-2 3×3
    convolutions; a stride-2 3×3 convolution moves between stages.
    """
    store = ParamStore(cfg.seed, dtype)
    root = store.scope("")
    c1 = cfg.channels[0]
    stem_scope = root.scope("stem")
    stem = Stem(
        conv1=Conv2d.create(stem_scope.scope("conv1"), cfg.in_channels, c1, 3, stride=2, padding=1),
        norm=BatchNorm2d.create(stem_scope.scope("bn"), c1),
        conv2=Conv2d.create(stem_scope.scope("conv2"), c1, c1, 3, stride=2, padding=1),
    )
    stages, downsamplers = [], []
    for index, depth in enumerate(cfg.depths):
        stage = index + 1
        if index > 0:
            downsamplers.append(
                Conv2d.create(
                    root.scope(f"down{stage}"),
                    cfg.channels[index - 1],
                    cfg.channels[index],
                    3,
                    stride=2,
                    padding=1,
                )
            )
        block_cfg = cfg.stage_block(stage)
        stages.append(
            [SfbWeights.create(root.scope(f"stage{stage}.block{b}"), block_cfg, stage) for b in range(depth)]
        )
    decoder = DecoderWeights.create(root.scope("decoder"), cfg.channels, cfg.embed_dim)
    return Model(cfg, store, stem, stages, downsamplers, decoder)


def required_padding(height: int, width: int) -> tuple[int, int]:
    return (-height) % TOTAL_STRIDE, (-width) % TOTAL_STRIDE


def encode(
    m: Model, x: Tensor, training: bool = False, taps: dict[str, Tensor] | None = None
) -> StageFeatures:
    """Run the stem and the four stages, returning f1..f4."""
    if x.ndim != 4 or x.shape[1] != m.config.in_channels:
        raise DimensionError(f"input {x.shape} must be [B, {m.config.in_channels}, H, W]")
    pad_h, pad_w = required_padding(*x.shape[2:])
    if pad_h or pad_w:
        raise ConfigError(
            f"input height and width {x.shape[2:]} must be divisible by {TOTAL_STRIDE}; "
            f"pad by ({pad_h}, {pad_w}) pixels"
        )
    h = m.stem(x, training)
    features = []
    for index, blocks in enumerate(m.stages):
        stage = index + 1
        if index > 0:
            h = m.downsamplers[index - 1](h)
        block_taps: dict[str, Tensor] = {}
        fmap = FeatureMap(h, stage)
        for weights in blocks:
            fmap = sfb_forward(fmap, m.config.stage_block(stage), weights, block_taps)
        h = fmap.values
        if taps is not None:
            taps.update({f"stage{stage}.{name}": value for name, value in block_taps.items()})
        features.append(h)
    return StageFeatures(features)


def forward(
    m: Model,
    x: Tensor,
    training: bool = False,
    rng: np.random.Generator | None = None,
    taps: dict[str, Tensor] | None = None,
) -> BoundaryOutput:
    """Logits at full resolution plus the H/4 boundary map.

    Eval mode uses the batch-norm running stats and disables dropout.

    Raises:
        ConfigError: If H or W is not divisible by 32; the message states the padding needed.
    """
    features = encode(m, x, training, taps)
    out = bmf_forward(
        features,
        m.decoder,
        lam=m.config.boundary_lambda,
        training=training,
        dropout=m.config.dropout,
        rng=rng,
        mode=m.config.upsample,
    )
    if taps is not None:
        taps.update({f"stage{i + 1}.aligned": f for i, f in enumerate(out.aligned)})
    return out


def predict(
    m: Model, images: np.ndarray, taps: dict[str, Tensor] | None = None
) -> tuple[np.ndarray, tuple[int, int]]:
    """Foreground probabilities of [B, 1, H, W] or [1, H, W] images in eval mode.

    Inputs whose height or width is not a multiple of 32 are reflect-padded at the
    bottom and right and the result is cropped back. `taps` receives the
    feature maps of the padded input.

    Returns:
        Probabilities with the input's shape and the (rows, cols) padding applied.
    """
    images = np.asarray(images)
    single = images.ndim == 3
    batch = images[None] if single else images
    height, width = batch.shape[2:]
    pad_h, pad_w = required_padding(height, width)
    if pad_h or pad_w:
        batch = np.pad(batch, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="reflect")
    out = forward(m, Tensor(batch, dtype=m.precision), training=False, taps=taps)
    probs = ops.sigmoid(out.logits).data[:, :, :height, :width]
    return (probs[0] if single else probs), (pad_h, pad_w)
