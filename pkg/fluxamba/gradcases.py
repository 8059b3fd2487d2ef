"""Registered finite-difference cases for every differentiable operator, block and the full model.

Each case reduces its output to a scalar with a fixed random weighting so every
output element contributes to the checked gradient.
"""

import numpy as np

from fluxamba import blocks
from fluxamba.blocks import FeatureMap
from fluxamba.config import Precision
from fluxamba.decoder import bmf_forward, DecoderWeights, StageFeatures
from fluxamba.models import BlockConfig, variant_config
from fluxamba.network import build, forward
from fluxamba.numerics import ops
from fluxamba.numerics.gradcheck import register
from fluxamba.numerics.params import ParamStore
from fluxamba.numerics.tensor import Tensor
from fluxamba.scan import make_route, RouteKind, selective_scan, serialize, SsmParams

F64 = Precision.f64
BLOCK_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-5


def _tensor(rng: np.random.Generator, *shape: int, low: float = -1.0, high: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), dtype=F64)


def _probe(rng: np.random.Generator, shape: tuple[int, ...]):
    """Return f(t) = Σ t ⊙ R for a fixed random R of the given shape."""
    weights = Tensor(rng.standard_normal(shape), dtype=F64)

    def reduce(t: Tensor) -> Tensor:
        return (t * weights).sum()

    return reduce


def _unary_case(name: str, op, low: float = -2.0, high: float = 2.0):
    @register("ops", name)
    def build_case(rng):
        x = _tensor(rng, 2, 3, 4, low=low, high=high)
        reduce = _probe(rng, x.shape)
        return (lambda: reduce(op(x))), [x]

    return build_case


_unary_case("sigmoid", ops.sigmoid)
_unary_case("softplus", ops.softplus)
_unary_case("gelu", ops.gelu)
_unary_case("tanh", ops.tanh)
_unary_case("exp", ops.exp)
_unary_case("log", ops.log, low=0.5, high=2.0)
_unary_case("sqrt", ops.sqrt, low=0.5, high=2.0)
_unary_case("softmax", lambda x: ops.softmax(x, axis=1))


@register("ops", "broadcast_arithmetic")
def _broadcast_arithmetic(rng):
    a = _tensor(rng, 2, 3, 4)
    b = _tensor(rng, 3, 1, low=0.5, high=1.5)
    reduce = _probe(rng, a.shape)
    return (lambda: reduce((a + b) * a - a / b)), [a, b]


@register("ops", "reductions")
def _reductions(rng):
    x = _tensor(rng, 2, 3, 4)
    reduce = _probe(rng, (2, 1, 4))
    return (lambda: reduce(x.mean(axis=1, keepdims=True) * x.sum(axis=(1,), keepdims=True))), [x]


@register("ops", "shape_ops")
def _shape_ops(rng):
    x = _tensor(rng, 2, 3, 4)
    y = _tensor(rng, 2, 2, 4)
    permutation = rng.permutation(4)
    reduce = _probe(rng, (4, 5, 2))

    def shuffle(a: Tensor, b: Tensor) -> Tensor:
        return ops.permute_last(ops.concat([a, b], axis=1), permutation).transpose(2, 1, 0)[:, :, ::-1]

    return (lambda: reduce(shuffle(x, y))), [x, y]


@register("ops", "dropout")
def _dropout(rng):
    x = _tensor(rng, 2, 3, 4, 4)
    reduce = _probe(rng, x.shape)
    return (lambda: reduce(ops.dropout(x, 0.3, np.random.default_rng(7), training=True))), [x]


@register("ops", "pixel_shuffle")
def _pixel_shuffle(rng):
    x = _tensor(rng, 1, 8, 2, 3)
    reduce = _probe(rng, (1, 2, 4, 6))
    return (lambda: reduce(ops.pixel_shuffle(x, 2))), [x]


@register("ops", "linear")
def _linear(rng):
    x = _tensor(rng, 2, 5, 3)
    weight = _tensor(rng, 4, 3)
    bias = _tensor(rng, 4)
    reduce = _probe(rng, (2, 5, 4))
    return (lambda: reduce(ops.linear(x, weight, bias))), [x, weight, bias]


@register("ops", "matmul")
def _matmul(rng):
    a = _tensor(rng, 2, 3, 4)
    b = _tensor(rng, 2, 4, 5)
    reduce = _probe(rng, (2, 3, 5))
    return (lambda: reduce(ops.matmul(a, b))), [a, b]


@register("ops", "conv2d")
def _conv2d(rng):
    x = _tensor(rng, 2, 4, 7, 6)
    weight = _tensor(rng, 6, 2, 3, 3)
    bias = _tensor(rng, 6)

    def conv(t: Tensor) -> Tensor:
        return ops.conv2d(t, weight, bias, stride=(2, 1), padding=2, dilation=2, groups=2)

    reduce = _probe(rng, conv(x).shape)
    return (lambda: reduce(conv(x))), [x, weight, bias]


@register("ops", "strip_pool")
def _strip_pool(rng):
    x = _tensor(rng, 2, 3, 5, 4)
    weight = _tensor(rng, 3, 1, 3)
    bias = _tensor(rng, 3)
    reduce = _probe(rng, x.shape)
    return (
        lambda: reduce(
            ops.strip_pool(x, ops.Orientation.horizontal, weight, bias)
            * ops.strip_pool(x, ops.Orientation.vertical, weight, bias)
        )
    ), [x, weight, bias]


@register("ops", "layer_norm")
def _layer_norm(rng):
    x = _tensor(rng, 2, 4, 3, 3)
    gamma = _tensor(rng, 4)
    beta = _tensor(rng, 4)
    reduce = _probe(rng, x.shape)
    return (lambda: reduce(ops.layer_norm(x, 1, gamma, beta))), [x, gamma, beta]


@register("ops", "batch_norm")
def _batch_norm(rng):
    x = _tensor(rng, 3, 2, 3, 3)
    gamma = _tensor(rng, 2)
    beta = _tensor(rng, 2)
    stats = ops.RunningStats(Tensor(np.zeros(2), dtype=F64), Tensor(np.ones(2), dtype=F64))
    reduce = _probe(rng, x.shape)
    return (lambda: reduce(ops.batch_norm(x, gamma, beta, stats, training=True))), [x, gamma, beta]


@register("ops", "axial_attention")
def _axial_attention(rng):
    x = _tensor(rng, 1, 4, 3, 5)
    wq, wk, wv, wo = (_tensor(rng, 4, 4) for _ in range(4))
    reduce = _probe(rng, x.shape)

    def attend(t: Tensor) -> Tensor:
        columns = ops.multi_head_axial_attention(t, ops.PoolAxis.height, 2, wq, wk, wv, wo)
        return ops.multi_head_axial_attention(columns, ops.PoolAxis.width, 2, wq, wk, wv, wo)

    return (lambda: reduce(attend(x))), [x, wq, wk, wv, wo]


@register("ops", "sample_bilinear")
def _sample_bilinear(rng):
    x = _tensor(rng, 1, 2, 4, 5)
    # interior, non-integer coordinates
    py = Tensor(rng.uniform(0.1, 2.9, size=(1, 3, 3)), dtype=F64)
    px = Tensor(rng.uniform(0.1, 3.9, size=(1, 3, 3)), dtype=F64)
    reduce = _probe(rng, (1, 2, 3, 3))
    return (lambda: reduce(ops.sample_bilinear(x, py, px))), [x, py, px]


@register("ops", "resample_with_offsets")
def _resample_with_offsets(rng):
    x = _tensor(rng, 1, 2, 3, 3)
    offsets = _tensor(rng, 1, 2, 6, 6, low=-0.2, high=0.2)
    reduce = _probe(rng, (1, 2, 6, 6))
    return (lambda: reduce(ops.resample_with_offsets(x, 2, offsets))), [x, offsets]


@register("ops", "selective_scan")
def _selective_scan(rng):
    store = ParamStore(seed=int(rng.integers(1 << 31)), dtype=F64)
    params = SsmParams.create(store.scope("scan"), channels=3, state_size=4)
    seq = _tensor(rng, 2, 3, 9)
    reduce = _probe(rng, seq.shape)
    return (lambda: reduce(selective_scan(seq, params))), [seq, *store.params.values()]


@register("ops", "serialize")
def _serialize(rng):
    x = _tensor(rng, 1, 2, 3, 4)
    route = make_route(RouteKind.diag_anti, 3, 4)
    reduce = _probe(rng, (1, 2, 12))
    return (lambda: reduce(serialize(x, route))), [x]


# blocks


def _block_store(rng: np.random.Generator) -> ParamStore:
    return ParamStore(seed=int(rng.integers(1 << 31)), dtype=F64)


def _feature(rng: np.random.Generator, channels: int, size: int, stage: int) -> FeatureMap:
    return FeatureMap(_tensor(rng, 2, channels, size, size), stage)


@register("blocks", "asg", tolerance=BLOCK_TOLERANCE, max_elements=12)
def _asg(rng):
    store = _block_store(rng)
    w = blocks.AsgWeights.create(store.scope("asg"), 4)
    x = _feature(rng, 4, 5, 1)
    reduce = _probe(rng, x.shape)
    return (lambda: reduce(blocks.asg_forward(x, w)[0].values)), [x.values, *store.params.values()]


@register("blocks", "pmf", tolerance=BLOCK_TOLERANCE, max_elements=12)
def _pmf(rng):
    store = _block_store(rng)
    w = blocks.PmfWeights.create(store.scope("pmf"), 4, 4, BlockConfig().strategy)
    x_base = _feature(rng, 4, 4, 1)
    x_asg = _feature(rng, 4, 4, 1)
    reduce = _probe(rng, x_base.shape)
    return (
        lambda: reduce(blocks.flux_forward(x_base, x_asg, w)[0].values)
    ), [x_base.values, x_asg.values, *store.params.values()]


@register("blocks", "lmr", tolerance=BLOCK_TOLERANCE, max_elements=12)
def _lmr(rng):
    store = _block_store(rng)
    w = blocks.LmrWeights.create(store.scope("lmr"), 4, (1, 2, 3))
    x_pmf = _feature(rng, 4, 6, 1)
    x_base = _feature(rng, 4, 6, 1)
    reduce = _probe(rng, x_base.shape)
    return (
        lambda: reduce(blocks.hsr_forward(x_pmf, x_base, 1, w).values)
    ), [x_pmf.values, x_base.values, *store.params.values()]


@register("blocks", "gtr", tolerance=BLOCK_TOLERANCE, max_elements=12)
def _gtr(rng):
    store = _block_store(rng)
    w = blocks.GtrWeights.create(store.scope("gtr"), 4, 2, 2)
    x_pmf = _feature(rng, 4, 3, 3)
    x_base = _feature(rng, 4, 3, 3)
    reduce = _probe(rng, x_base.shape)
    return (
        lambda: reduce(blocks.hsr_forward(x_pmf, x_base, 3, w).values)
    ), [x_pmf.values, x_base.values, *store.params.values()]


@register("blocks", "hffu", tolerance=BLOCK_TOLERANCE, max_elements=12)
def _hffu(rng):
    store = _block_store(rng)
    w = blocks.HffuWeights.create(store.scope("hffu"), 4)
    x = _feature(rng, 4, 4, 2)
    reduce = _probe(rng, x.shape)
    return (lambda: reduce(blocks.hffu_forward(x, w).values)), [x.values, *store.params.values()]


def _sfb_case(stage: int, channels: int, size: int):
    @register("blocks", f"sfb_stage{stage}", tolerance=BLOCK_TOLERANCE, max_elements=8)
    def build_case(rng):
        store = _block_store(rng)
        cfg = BlockConfig(channels=channels, heads=2, state_size=4)
        w = blocks.SfbWeights.create(store.scope("sfb"), cfg, stage)
        x = _feature(rng, channels, size, stage)
        reduce = _probe(rng, x.shape)
        return (lambda: reduce(blocks.sfb_forward(x, cfg, w).values)), [x.values, *store.params.values()]

    return build_case


_sfb_case(1, 4, 4)
_sfb_case(3, 4, 3)


@register("blocks", "bmf", tolerance=BLOCK_TOLERANCE, max_elements=8)
def _bmf(rng):
    store = _block_store(rng)
    channels = (2, 3, 4, 5)
    w = DecoderWeights.create(store.scope("decoder"), channels, 4)
    # small offsets keep sampling points away from integer pixel positions
    for upsampler in w.upsamplers:
        if upsampler is not None:
            upsampler.offset.weight.data = rng.uniform(-0.05, 0.05, size=upsampler.offset.weight.shape)
    features = StageFeatures([_tensor(rng, 1, c, 8 >> i, 8 >> i) for i, c in enumerate(channels)])
    reduce_logits = _probe(rng, (1, 1, 32, 32))
    reduce_boundary = _probe(rng, (1, 1, 8, 8))

    def loss() -> Tensor:
        out = bmf_forward(features, w, training=False)
        return reduce_logits(out.logits) + reduce_boundary(out.m_bound)

    return loss, [*features.stages, *store.params.values()]


# model


@register("model", "micro", tolerance=MODEL_TOLERANCE, max_elements=4)
def _micro(rng):
    m = build(variant_config("micro"), F64)
    x = _tensor(rng, 1, 1, 32, 32, low=0.0, high=1.0)
    reduce_logits = _probe(rng, (1, 1, 32, 32))
    reduce_boundary = _probe(rng, (1, 1, 8, 8))

    def loss() -> Tensor:
        out = forward(m, x, training=False)
        return reduce_logits(out.logits) + reduce_boundary(out.m_bound)

    # one tensor per distinct parameterized component keeps the check affordable
    suffixes = ("weight", "a_log", "w_delta", "w_b", "w_c", "wq", "wo")
    names = [name for name in m.store.params if name.endswith(suffixes)]
    chosen = {}
    for name in names:
        component = name.rsplit(".", 2)[0]
        chosen.setdefault(component, m.store.params[name])
    return loss, [x, *chosen.values()]
