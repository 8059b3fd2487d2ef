"""The Structural Flux Block and its sub-modules.

A block runs four stages in order: anisotropic gating (ASG), gated directional
flux aggregation (PMF), stage-adaptive refinement (HSR, dispatching to LMR on
shallow stages and GTR on deep ones) and non-residual dual-gate filtering
(HFFU). Each stage has a weights container built from a ParamScope and a pure
forward function.
"""

from dataclasses import dataclass
from enum import StrEnum

from fluxamba.exceptions import DispatchError
from fluxamba.models import BlockConfig
from fluxamba.numerics import ops
from fluxamba.numerics.layers import ChannelNorm, Conv2d
from fluxamba.numerics.params import ParamScope
from fluxamba.numerics.tensor import broadcast_to, Tensor
from fluxamba.scan import (
    DirectionalSequences,
    RouteKind,
    scan_routes,
    ScanStrategy,
    SsmParams,
    STRATEGY_ROUTES,
)

SHALLOW_STAGES = (1, 2)
DEEP_STAGES = (3, 4)


@dataclass
class FeatureMap:
    """[B, C, H, W] values tagged with the encoder stage (1..4) they belong to."""

    values: Tensor
    stage: int

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def with_values(self, values: Tensor) -> "FeatureMap":
        return FeatureMap(values, self.stage)


class GateKind(StrEnum):
    asg = "asg"
    lmr = "lmr"
    channel = "channel"
    spatial = "spatial"
    directional = "directional"


@dataclass
class GateMap:
    """Gate values in [0, 1]; directional gates sum to one over axis 1."""

    values: Tensor
    kind: GateKind


# ASG


@dataclass
class AsgWeights:
    coord_h: Conv2d
    coord_w: Conv2d
    strip_h: tuple[Tensor, Tensor]
    strip_v: tuple[Tensor, Tensor]
    gate: Conv2d

    @classmethod
    def create(cls, scope: ParamScope, channels: int) -> "AsgWeights":
        strip_h = scope.scope("strip_h")
        strip_v = scope.scope("strip_v")
        return cls(
            coord_h=Conv2d.create(scope.scope("coord_h"), channels, channels, (3, 1), padding=(1, 0)),
            coord_w=Conv2d.create(scope.scope("coord_w"), channels, channels, (1, 3), padding=(0, 1)),
            strip_h=(strip_h.kaiming("weight", (channels, 1, 3), 3), strip_h.zeros("bias", (channels,))),
            strip_v=(strip_v.kaiming("weight", (channels, 1, 3), 3), strip_v.zeros("bias", (channels,))),
            gate=Conv2d.create(scope.scope("gate"), 2 * channels, channels),
        )


def coord_features(x: Tensor, w: AsgWeights) -> Tensor:
    """Axis-separated pooling branches, each convolved along its kept axis and broadcast back."""
    along_h = w.coord_h(ops.pool_axis_avg(x, ops.PoolAxis.width))
    along_w = w.coord_w(ops.pool_axis_avg(x, ops.PoolAxis.height))
    return broadcast_to(along_h, x.shape) + broadcast_to(along_w, x.shape)


def strip_features(x: Tensor, w: AsgWeights) -> Tensor:
    horizontal = ops.strip_pool(x, ops.Orientation.horizontal, *w.strip_h)
    vertical = ops.strip_pool(x, ops.Orientation.vertical, *w.strip_v)
    return horizontal + vertical


def asg_forward(x_base: FeatureMap, w: AsgWeights) -> tuple[FeatureMap, GateMap]:
    """x_asg = x + x ⊙ σ(conv1×1([F_coord, F_strip]))."""
    x = x_base.values
    gate = ops.sigmoid(w.gate(ops.concat([coord_features(x, w), strip_features(x, w)], axis=1)))
    return x_base.with_values(x + x * gate), GateMap(gate, GateKind.asg)


# PMF


@dataclass
class PmfWeights:
    """Scan parameters per route plus the directional gate projections (gated strategy only)."""

    routes: tuple[RouteKind, ...]
    scans: list[SsmParams]
    local: Conv2d | None = None
    global_: Conv2d | None = None

    @classmethod
    def create(
        cls, scope: ParamScope, channels: int, state_size: int, strategy: ScanStrategy, gated: bool = True
    ) -> "PmfWeights":
        routes = STRATEGY_ROUTES[strategy] if gated else (RouteKind.h_raster,)
        scans = [SsmParams.create(scope.scope(f"scan{i}"), channels, state_size) for i in range(len(routes))]
        if not gated or strategy != ScanStrategy.fs2d:
            return cls(routes, scans)
        return cls(
            routes,
            scans,
            local=Conv2d.create(scope.scope("local"), channels, len(routes), 3, padding=1),
            global_=Conv2d.create(scope.scope("global"), channels, len(routes)),
        )

    @property
    def gated(self) -> bool:
        return self.local is not None


def directional_gates(x_asg: Tensor, w: PmfWeights) -> Tensor:
    """Split-Softmax over M = conv3×3(x) + conv1×1(GAP(x)); one channel per direction."""
    logits = w.local(x_asg) + w.global_(ops.global_avg_pool(x_asg))
    return ops.softmax(logits, axis=1)


def pmf_forward(
    x_base: FeatureMap, x_asg: FeatureMap, fs2d_out: DirectionalSequences, w: PmfWeights
) -> tuple[FeatureMap, GateMap]:
    """Σ_k Y_k ⊙ M_k with M_k broadcast across channels."""
    gates = directional_gates(x_asg.values, w)
    out = None
    for k, y in enumerate(fs2d_out.maps):
        term = y * gates[:, k : k + 1]
        out = term if out is None else out + term
    return x_base.with_values(out), GateMap(gates, GateKind.directional)


def flux_forward(x_base: FeatureMap, x_asg: FeatureMap, w: PmfWeights) -> tuple[FeatureMap, GateMap | None]:
    """Scan x_base along the configured routes and merge the outputs.

    The fs2d strategy is merged by the directional gates; static strategies
    average their routes uniformly.
    """
    scanned = scan_routes(x_base.values, w.scans, w.routes)
    if w.gated:
        return pmf_forward(x_base, x_asg, scanned, w)
    out = scanned.maps[0]
    for y in scanned.maps[1:]:
        out = out + y
    if len(scanned.maps) > 1:
        out = out * (1.0 / len(scanned.maps))
    return x_base.with_values(out), None


# HSR


@dataclass
class LmrWeights:
    dilations: tuple[int, ...]
    branches: list[Conv2d]
    project: Conv2d
    gate: Conv2d

    @classmethod
    def create(cls, scope: ParamScope, channels: int, dilations: tuple[int, ...]) -> "LmrWeights":
        branches = [
            Conv2d.create(
                scope.scope(f"dw{r}"), channels, channels, 3, padding=r, dilation=r, groups=channels
            )
            for r in dilations
        ]
        return cls(
            dilations=dilations,
            branches=branches,
            project=Conv2d.create(scope.scope("project"), len(dilations) * channels, channels),
            gate=Conv2d.create(scope.scope("gate"), channels, channels),
        )


def lmr_refine(x_pmf: Tensor, w: LmrWeights) -> Tensor:
    """F̃ = conv1×1(concat of dilated depthwise branches)."""
    return w.project(ops.concat([branch(x_pmf) for branch in w.branches], axis=1))


def lmr_forward(x_pmf: FeatureMap, x_base: FeatureMap, w: LmrWeights) -> FeatureMap:
    """(1 − G) ⊙ x_base + G ⊙ F̃ with G = σ(conv1×1(F̃)).

    Raises:
        DispatchError: Outside stages 1-2.
    """
    if x_pmf.stage not in SHALLOW_STAGES:
        raise DispatchError(f"LMR runs on stages 1-2 only, got stage {x_pmf.stage}")
    refined = lmr_refine(x_pmf.values, w)
    gate = ops.sigmoid(w.gate(refined))
    return x_base.with_values((1.0 - gate) * x_base.values + gate * refined)


@dataclass
class AxialAttention:
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    heads: int
    axis: ops.PoolAxis

    @classmethod
    def create(cls, scope: ParamScope, channels: int, heads: int, axis: ops.PoolAxis) -> "AxialAttention":
        weights = [scope.kaiming(name, (channels, channels), channels) for name in ("wq", "wk", "wv", "wo")]
        return cls(*weights, heads=heads, axis=axis)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.multi_head_axial_attention(x, self.axis, self.heads, self.wq, self.wk, self.wv, self.wo)


@dataclass
class GtrWeights:
    norm_h: ChannelNorm
    attn_h: AxialAttention
    norm_w: ChannelNorm
    attn_w: AxialAttention
    norm_ffn: ChannelNorm
    ffn_in: Conv2d
    ffn_out: Conv2d

    @classmethod
    def create(cls, scope: ParamScope, channels: int, heads: int, ffn_ratio: int) -> "GtrWeights":
        hidden = ffn_ratio * channels
        return cls(
            norm_h=ChannelNorm.create(scope.scope("norm_h"), channels),
            attn_h=AxialAttention.create(scope.scope("attn_h"), channels, heads, ops.PoolAxis.height),
            norm_w=ChannelNorm.create(scope.scope("norm_w"), channels),
            attn_w=AxialAttention.create(scope.scope("attn_w"), channels, heads, ops.PoolAxis.width),
            norm_ffn=ChannelNorm.create(scope.scope("norm_ffn"), channels),
            ffn_in=Conv2d.create(scope.scope("ffn_in"), channels, hidden),
            ffn_out=Conv2d.create(scope.scope("ffn_out"), hidden, channels),
        )


def gtr_forward(x_pmf: FeatureMap, x_base: FeatureMap, w: GtrWeights) -> FeatureMap:
    """Axial transformer over X_in = x_pmf + x_base: column attention, row attention, FFN.

    Raises:
        DispatchError: Outside stages 3-4.
    """
    if x_pmf.stage not in DEEP_STAGES:
        raise DispatchError(f"GTR runs on stages 3-4 only, got stage {x_pmf.stage}")
    x_in = x_pmf.values + x_base.values
    x_h = w.attn_h(w.norm_h(x_in)) + x_in
    x_w = w.attn_w(w.norm_w(x_h)) + x_h
    out = w.ffn_out(ops.gelu(w.ffn_in(w.norm_ffn(x_w)))) + x_w
    return x_base.with_values(out)


def hsr_forward(x_pmf: FeatureMap, x_base: FeatureMap, stage: int, w: LmrWeights | GtrWeights) -> FeatureMap:
    """Dispatch to LMR on stages 1-2 and GTR on stages 3-4.

    Raises:
        DispatchError: For a stage outside 1..4 or weights of the wrong kind.
    """
    if stage in SHALLOW_STAGES and isinstance(w, LmrWeights):
        return lmr_forward(FeatureMap(x_pmf.values, stage), FeatureMap(x_base.values, stage), w)
    if stage in DEEP_STAGES and isinstance(w, GtrWeights):
        return gtr_forward(FeatureMap(x_pmf.values, stage), FeatureMap(x_base.values, stage), w)
    if stage not in SHALLOW_STAGES + DEEP_STAGES:
        raise DispatchError(f"stage must be in 1..4, got {stage}")
    raise DispatchError(f"stage {stage} cannot run {type(w).__name__}")


# HFFU


@dataclass
class HffuWeights:
    excite: Conv2d
    spatial: Conv2d

    @classmethod
    def create(cls, scope: ParamScope, channels: int) -> "HffuWeights":
        return cls(
            excite=Conv2d.create(scope.scope("excite"), channels, channels),
            spatial=Conv2d.create(scope.scope("spatial"), channels, 1),
        )


def hffu_gates(x: Tensor, w: HffuWeights) -> tuple[GateMap, GateMap]:
    channel = ops.sigmoid(w.excite(ops.global_avg_pool(x)))
    spatial = ops.sigmoid(w.spatial(x))
    return GateMap(channel, GateKind.channel), GateMap(spatial, GateKind.spatial)


def hffu_forward(x_hsr: FeatureMap, w: HffuWeights) -> FeatureMap:
    """G_ch ⊙ x + G_sp ⊙ x, with no identity term."""
    x = x_hsr.values
    channel, spatial = hffu_gates(x, w)
    return x_hsr.with_values(channel.values * x + spatial.values * x)


# block


@dataclass
class SfbWeights:
    """Weights of one Structural Flux Block; disabled components have none."""

    stage: int
    flux: PmfWeights
    asg: AsgWeights | None = None
    hsr: LmrWeights | GtrWeights | None = None
    hffu: HffuWeights | None = None

    @classmethod
    def create(cls, scope: ParamScope, cfg: BlockConfig, stage: int) -> "SfbWeights":
        if stage not in SHALLOW_STAGES + DEEP_STAGES:
            raise DispatchError(f"stage must be in 1..4, got {stage}")
        channels = cfg.channels
        asg = AsgWeights.create(scope.scope("asg"), channels) if cfg.enable_asg else None
        flux = PmfWeights.create(
            scope.scope("pmf"), channels, cfg.state_size, cfg.strategy, gated=cfg.enable_pmf
        )
        hsr = None
        if cfg.enable_hsr:
            if stage in SHALLOW_STAGES:
                hsr = LmrWeights.create(scope.scope("lmr"), channels, cfg.dilations)
            else:
                hsr = GtrWeights.create(scope.scope("gtr"), channels, cfg.heads, cfg.ffn_ratio)
        hffu = HffuWeights.create(scope.scope("hffu"), channels) if cfg.enable_hffu else None
        return cls(stage, flux, asg, hsr, hffu)


def sfb_forward(
    x_base: FeatureMap, cfg: BlockConfig, w: SfbWeights, taps: dict[str, Tensor] | None = None
) -> FeatureMap:
    """ASG → PMF → HSR → HFFU with the configured pass-throughs.

    When PMF is disabled a single HRaster scan of x_asg replaces the gated
    aggregation. `taps`, when given, receives the intermediate maps under the
    keys base, asg, pmf, hsr and hffu.
    """
    x_asg = asg_forward(x_base, w.asg)[0] if cfg.enable_asg else x_base
    if cfg.enable_pmf:
        x_pmf = flux_forward(x_base, x_asg, w.flux)[0]
    else:
        x_pmf = flux_forward(x_asg, x_asg, w.flux)[0]
    if cfg.enable_hsr:
        x_hsr = hsr_forward(x_pmf, x_base, x_base.stage, w.hsr)
    else:
        x_hsr = x_base.with_values(x_pmf.values + x_base.values)
    out = hffu_forward(x_hsr, w.hffu) if cfg.enable_hffu else x_hsr
    if taps is not None:
        taps.update(
            base=x_base.values, asg=x_asg.values, pmf=x_pmf.values, hsr=x_hsr.values, hffu=out.values
        )
    return out
