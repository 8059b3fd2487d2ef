import numpy as np
import pytest

from fluxamba.config import Precision
from fluxamba.decoder import bmf_forward
from fluxamba.exceptions import ConfigError, DimensionError
from fluxamba.models import variant_config
from fluxamba.network import build, encode, forward, predict, required_padding, TAP_NAMES
from fluxamba.numerics.tensor import Tensor


def image_batch(rng, batch: int = 2, size: int = 64) -> Tensor:
    return Tensor(rng.uniform(0.0, 1.0, size=(batch, 1, size, size)), dtype="f64")


def test_forward_shapes(rng, micro_model):
    out = forward(micro_model, image_batch(rng))

    assert out.logits.shape == (2, 1, 64, 64)
    assert out.m_bound.shape == (2, 1, 16, 16)
    assert np.isfinite(out.logits.data).all()


def test_stage_resolutions(rng, micro_model):
    features = encode(micro_model, image_batch(rng, batch=1))

    assert [f.shape for f in features.stages] == [
        (1, 4, 16, 16),
        (1, 8, 8, 8),
        (1, 16, 4, 4),
        (1, 32, 2, 2),
    ]


def test_forward_rejects_unpadded_input(rng, micro_model):
    with pytest.raises(ConfigError) as excinfo:
        forward(micro_model, image_batch(rng, size=40))
    assert "pad by (24, 24) pixels" in str(excinfo.value)


def test_forward_rejects_wrong_channels(rng, micro_model):
    x = Tensor(rng.uniform(size=(1, 3, 32, 32)), dtype="f64")

    with pytest.raises(DimensionError):
        forward(micro_model, x)


def test_samples_are_independent_in_eval(rng, micro_model):
    image = rng.uniform(size=(1, 1, 32, 32))
    batch = Tensor(np.concatenate([image, image]), dtype="f64")

    out = forward(micro_model, batch)

    np.testing.assert_allclose(out.logits.data[0], out.logits.data[1], rtol=1e-12, atol=1e-12)


def test_build_is_deterministic(rng):
    cfg = variant_config("micro", seed=4)
    first, second = build(cfg, "f64"), build(cfg, "f64")
    x = image_batch(rng, batch=1, size=32)

    for name, values in first.store.state_dict().items():
        np.testing.assert_array_equal(second.store.state_dict()[name], values)
    np.testing.assert_array_equal(forward(first, x).logits.data, forward(second, x).logits.data)

    other = build(variant_config("micro", seed=5), "f64")
    name = "stem.conv1.weight"
    assert not np.array_equal(other.store.params[name].data, first.store.params[name].data)


def test_build_precision():
    model = build(variant_config("micro"))

    assert model.precision == Precision.f32
    assert all(t.data.dtype == np.float32 for _, t in model.store.named_tensors())


def test_forward_composes_encoder_and_decoder(rng, micro_model):
    x = image_batch(rng, batch=1, size=32)

    out = forward(micro_model, x)

    cfg = micro_model.config
    expected = bmf_forward(
        encode(micro_model, x), micro_model.decoder, lam=cfg.boundary_lambda, mode=cfg.upsample
    )
    np.testing.assert_array_equal(out.logits.data, expected.logits.data)
    np.testing.assert_array_equal(out.m_bound.data, expected.m_bound.data)


def test_forward_taps(rng, micro_model):
    taps = {}

    forward(micro_model, image_batch(rng, batch=1, size=32), taps=taps)

    assert len(taps) == 24
    assert set(taps) == {f"stage{s}.{name}" for s in range(1, 5) for name in TAP_NAMES}
    assert taps["stage2.hffu"].shape == (1, 8, 4, 4)
    assert taps["stage2.aligned"].shape == (1, 16, 8, 8)


def test_training_forward_updates_running_stats(rng, micro_model):
    before = micro_model.store.buffers["stem.bn.running_mean"].data.copy()

    forward(micro_model, image_batch(rng, size=32), training=True, rng=rng)

    assert not np.array_equal(micro_model.store.buffers["stem.bn.running_mean"].data, before)


def test_predict_pads_and_crops(rng, micro_model):
    image = rng.uniform(size=(1, 40, 40))

    probs, padding = predict(micro_model, image)

    assert padding == (24, 24)
    assert probs.shape == (1, 40, 40)
    assert ((probs > 0) & (probs < 1)).all()


def test_predict_without_padding(rng, micro_model):
    images = rng.uniform(size=(2, 1, 32, 32))

    probs, padding = predict(micro_model, images)

    assert padding == (0, 0)
    assert probs.shape == (2, 1, 32, 32)


def test_required_padding():
    assert required_padding(64, 64) == (0, 0)
    assert required_padding(40, 33) == (24, 31)
