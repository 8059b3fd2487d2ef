import numpy as np
import pytest

from fluxamba import blocks
from fluxamba.blocks import FeatureMap, GateKind
from fluxamba.exceptions import DispatchError
from fluxamba.models import BlockConfig
from fluxamba.numerics.params import ParamStore
from fluxamba.scan import scan_routes, ScanStrategy
from tests.helpers import random_tensor


def force_gate(conv, bias: float) -> None:
    """Make sigmoid(conv(x)) a constant 0 or 1."""
    conv.weight.data = np.zeros_like(conv.weight.data)
    conv.bias.data = np.full_like(conv.bias.data, bias)


@pytest.fixture
def store():
    return ParamStore(seed=11, dtype="f64")


def feature(rng, channels: int = 4, size: int = 6, stage: int = 1) -> FeatureMap:
    return FeatureMap(random_tensor(rng, 2, channels, size, size), stage)


@pytest.mark.parametrize("bias,factor", [(1000.0, 2.0), (-1000.0, 1.0)])
def test_asg_forced_gate(rng, store, bias, factor):
    w = blocks.AsgWeights.create(store.scope("asg"), 4)
    force_gate(w.gate, bias)
    x = feature(rng)

    out, gate = blocks.asg_forward(x, w)

    np.testing.assert_array_equal(out.values.data, factor * x.values.data)
    assert gate.kind == GateKind.asg
    assert out.stage == x.stage


def test_asg_gate_range(rng, store):
    w = blocks.AsgWeights.create(store.scope("asg"), 4)
    x = feature(rng)

    out, gate = blocks.asg_forward(x, w)

    assert out.shape == x.shape
    assert gate.values.shape == x.shape
    assert ((gate.values.data > 0) & (gate.values.data < 1)).all()


def test_directional_gates_sum_to_one(store):
    w = blocks.PmfWeights.create(store.scope("pmf"), 4, 4, ScanStrategy.fs2d)
    gen = np.random.default_rng(5)

    for _ in range(100):
        x = random_tensor(gen, 1, 4, 4, 4, low=-3.0, high=3.0)

        gates = blocks.directional_gates(x, w)

        assert gates.shape == (1, 4, 4, 4)
        assert (gates.data >= 0).all()
        np.testing.assert_allclose(gates.data.sum(axis=1), 1.0, atol=1e-12)


def test_pmf_output_is_a_convex_combination(rng, store):
    w = blocks.PmfWeights.create(store.scope("pmf"), 4, 4, ScanStrategy.fs2d)
    x_base = feature(rng)
    x_asg = feature(rng)

    scanned = scan_routes(x_base.values, w.scans, w.routes)
    out, gates = blocks.pmf_forward(x_base, x_asg, scanned, w)

    stacked = np.stack([m.data for m in scanned.maps])
    assert gates.kind == GateKind.directional
    assert (out.values.data <= stacked.max(axis=0) + 1e-12).all()
    assert (out.values.data >= stacked.min(axis=0) - 1e-12).all()


def test_pmf_equal_directions_pass_through(rng, store):
    w = blocks.PmfWeights.create(store.scope("pmf"), 4, 4, ScanStrategy.fs2d)
    x_base = feature(rng)
    scanned = scan_routes(x_base.values, w.scans, w.routes)
    scanned.maps = [scanned.maps[0]] * 4

    out, _ = blocks.pmf_forward(x_base, feature(rng), scanned, w)

    np.testing.assert_allclose(out.values.data, scanned.maps[0].data, rtol=1e-12, atol=1e-14)


def test_static_strategy_averages_routes(rng, store):
    w = blocks.PmfWeights.create(store.scope("pmf"), 4, 4, ScanStrategy.parallel)
    x = feature(rng)

    out, gates = blocks.flux_forward(x, x, w)

    scanned = scan_routes(x.values, w.scans, w.routes)
    assert gates is None
    assert not w.gated
    expected = 0.5 * (scanned.maps[0].data + scanned.maps[1].data)
    np.testing.assert_allclose(out.values.data, expected, rtol=1e-12)


@pytest.mark.parametrize("bias,expect_refined", [(-1000.0, False), (1000.0, True)])
def test_lmr_forced_gate(rng, store, bias, expect_refined):
    w = blocks.LmrWeights.create(store.scope("lmr"), 4, (1, 2, 3))
    force_gate(w.gate, bias)
    x_pmf = feature(rng)
    x_base = feature(rng)

    out = blocks.lmr_forward(x_pmf, x_base, w)

    expected = blocks.lmr_refine(x_pmf.values, w).data if expect_refined else x_base.values.data
    np.testing.assert_array_equal(out.values.data, expected)


def test_gtr_with_silenced_branches_is_residual_sum(rng, store):
    w = blocks.GtrWeights.create(store.scope("gtr"), 4, 2, 2)
    for attention in (w.attn_h, w.attn_w):
        attention.wv.data = np.zeros((4, 4))
        attention.wo.data = np.zeros((4, 4))
    w.ffn_out.weight.data = np.zeros_like(w.ffn_out.weight.data)
    x_pmf = feature(rng, stage=3)
    x_base = feature(rng, stage=3)

    out = blocks.gtr_forward(x_pmf, x_base, w)

    np.testing.assert_allclose(out.values.data, x_pmf.values.data + x_base.values.data, rtol=1e-12)


def test_gtr_output_shape(rng, store):
    w = blocks.GtrWeights.create(store.scope("gtr"), 4, 2, 2)

    out = blocks.gtr_forward(feature(rng, stage=4), feature(rng, stage=4), w)

    assert out.shape == (2, 4, 6, 6)
    assert np.isfinite(out.values.data).all()


def test_hsr_dispatch(rng, store):
    lmr = blocks.LmrWeights.create(store.scope("lmr"), 4, (1, 2))
    gtr = blocks.GtrWeights.create(store.scope("gtr"), 4, 2, 2)
    x_pmf, x_base = feature(rng), feature(rng)

    shallow = blocks.hsr_forward(x_pmf, x_base, 2, lmr)
    deep = blocks.hsr_forward(x_pmf, x_base, 3, gtr)

    np.testing.assert_array_equal(
        shallow.values.data,
        blocks.lmr_forward(FeatureMap(x_pmf.values, 2), FeatureMap(x_base.values, 2), lmr).values.data,
    )
    assert deep.stage == 3

    with pytest.raises(DispatchError) as excinfo:
        blocks.hsr_forward(x_pmf, x_base, 3, lmr)
    assert "stage 3 cannot run LmrWeights" in str(excinfo.value)

    with pytest.raises(DispatchError) as excinfo:
        blocks.hsr_forward(x_pmf, x_base, 5, gtr)
    assert "stage must be in 1..4, got 5" in str(excinfo.value)


def test_refinements_check_their_stage(rng, store):
    lmr = blocks.LmrWeights.create(store.scope("lmr"), 4, (1,))
    gtr = blocks.GtrWeights.create(store.scope("gtr"), 4, 2, 2)

    with pytest.raises(DispatchError) as excinfo:
        blocks.lmr_forward(feature(rng, stage=3), feature(rng, stage=3), lmr)
    assert "LMR runs on stages 1-2 only" in str(excinfo.value)

    with pytest.raises(DispatchError) as excinfo:
        blocks.gtr_forward(feature(rng, stage=1), feature(rng, stage=1), gtr)
    assert "GTR runs on stages 3-4 only" in str(excinfo.value)


def test_hffu_zero_input(store):
    w = blocks.HffuWeights.create(store.scope("hffu"), 4)
    x = FeatureMap(random_tensor(np.random.default_rng(1), 1, 4, 3, 3) * 0.0, 1)

    out = blocks.hffu_forward(x, w)

    np.testing.assert_array_equal(out.values.data, 0.0)


@pytest.mark.parametrize("bias,factor", [(1000.0, 2.0), (-1000.0, 0.0)])
def test_hffu_forced_gates(rng, store, bias, factor):
    w = blocks.HffuWeights.create(store.scope("hffu"), 4)
    force_gate(w.excite, bias)
    force_gate(w.spatial, bias)
    x = feature(rng)

    out = blocks.hffu_forward(x, w)

    np.testing.assert_array_equal(out.values.data, factor * x.values.data)


def test_hffu_gate_shapes(rng, store):
    w = blocks.HffuWeights.create(store.scope("hffu"), 4)

    channel, spatial = blocks.hffu_gates(feature(rng).values, w)

    assert channel.values.shape == (2, 4, 1, 1)
    assert spatial.values.shape == (2, 1, 6, 6)


def test_sfb_all_components_off(rng, store):
    cfg = BlockConfig(
        channels=4, enable_asg=False, enable_pmf=False, enable_hsr=False, enable_hffu=False, state_size=4
    )
    w = blocks.SfbWeights.create(store.scope("block"), cfg, 1)
    x = feature(rng)

    out = blocks.sfb_forward(x, cfg, w)

    scanned = scan_routes(x.values, w.flux.scans, w.flux.routes)
    assert w.asg is None and w.hsr is None and w.hffu is None
    assert len(w.flux.scans) == 1
    np.testing.assert_allclose(out.values.data, scanned.maps[0].data + x.values.data, rtol=1e-12)


@pytest.mark.parametrize("stage", [1, 2, 3, 4])
def test_sfb_preserves_shape_and_fills_taps(rng, store, stage):
    cfg = BlockConfig(channels=4, heads=2, state_size=4)
    w = blocks.SfbWeights.create(store.scope("block"), cfg, stage)
    x = feature(rng, stage=stage)
    taps = {}

    out = blocks.sfb_forward(x, cfg, w, taps)

    assert out.shape == x.shape
    assert out.stage == stage
    assert set(taps) == {"base", "asg", "pmf", "hsr", "hffu"}
    assert taps["hffu"] is out.values
    assert isinstance(w.hsr, blocks.LmrWeights if stage <= 2 else blocks.GtrWeights)


@pytest.mark.parametrize("strategy", list(ScanStrategy))
def test_sfb_every_strategy(rng, store, strategy):
    cfg = BlockConfig(channels=4, heads=2, state_size=4, strategy=strategy)
    w = blocks.SfbWeights.create(store.scope("block"), cfg, 1)

    out = blocks.sfb_forward(feature(rng), cfg, w)

    assert out.shape == (2, 4, 6, 6)
    assert np.isfinite(out.values.data).all()


def test_sfb_rejects_unknown_stage(store):
    with pytest.raises(DispatchError):
        blocks.SfbWeights.create(store.scope("block"), BlockConfig(channels=4), 0)
