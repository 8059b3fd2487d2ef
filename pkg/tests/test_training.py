import numpy as np
import pytest

from fluxamba.data.sample import Sample
from fluxamba.data.synthetic import generate
from fluxamba.exceptions import BatchNormError, DataError, NumericError
from fluxamba.models import GenSpec, TrainParams, variant_config
from fluxamba.network import build
from fluxamba.training import batches, f1_at_half, StepRecord, train_loop


@pytest.fixture
def samples():
    return generate(GenSpec(count=4, size=32, seed=3))


def test_batches_drop_a_single_trailing_sample(rng):
    chunks = batches(5, 2, rng)

    assert [len(c) for c in chunks] == [2, 2]
    assert len(set(np.concatenate(chunks))) == 4


def test_batches_keep_a_trailing_pair(rng):
    chunks = batches(7, 3, rng)

    assert sorted(len(c) for c in chunks) == [3, 3]
    assert [len(c) for c in batches(8, 3, rng)] == [3, 3, 2]


def test_batch_of_one_is_rejected(micro_model, samples):
    with pytest.raises(BatchNormError) as excinfo:
        train_loop(micro_model, samples, hp=TrainParams(batch=1))
    assert "batch size 1 is too small" in str(excinfo.value)


def test_training_needs_two_samples(micro_model, samples):
    with pytest.raises(DataError) as excinfo:
        train_loop(micro_model, samples[:1], hp=TrainParams(epochs=1))
    assert "training split has 1 samples" in str(excinfo.value)


def test_zero_learning_rate_keeps_parameters(micro_model, samples):
    params = {name: t.data.copy() for name, t in micro_model.store.params.items()}
    buffers = {name: t.data.copy() for name, t in micro_model.store.buffers.items()}

    result = train_loop(micro_model, samples, hp=TrainParams(epochs=1, lr=0.0, max_steps=1))

    assert len(result.steps) == 1
    for name, values in params.items():
        np.testing.assert_array_equal(micro_model.store.params[name].data, values)
    assert any(not np.array_equal(micro_model.store.buffers[n].data, v) for n, v in buffers.items())


def test_training_is_deterministic(samples):
    hp = TrainParams(epochs=1, lr=1e-3, seed=5)
    runs = []
    for _ in range(2):
        model = build(variant_config("micro"), "f64")
        result = train_loop(model, samples, hp=hp)
        runs.append((result.losses, model.store.state_dict()))

    assert runs[0][0] == runs[1][0]
    for name, values in runs[0][1].items():
        np.testing.assert_array_equal(runs[1][1][name], values)


def test_non_finite_loss_names_the_step(micro_model):
    image = np.full((1, 32, 32), np.nan)
    broken = [Sample(image=image, mask=np.zeros((1, 32, 32)), id=f"{i}") for i in range(2)]

    with pytest.raises(NumericError) as excinfo:
        train_loop(micro_model, broken, hp=TrainParams(epochs=1, augment=False))
    assert "epoch 0 step 1" in str(excinfo.value)


def test_step_records(micro_model, samples):
    seen = []

    result = train_loop(micro_model, samples, hp=TrainParams(epochs=2, lr=1e-4), on_step=seen.append)

    assert seen == result.steps
    assert [r.step for r in result.steps] == [1, 2, 3, 4]
    assert [r.epoch for r in result.steps] == [0, 0, 1, 1]
    assert result.steps[0].lr == 1e-4
    assert result.steps[2].lr == pytest.approx(1e-4 * 0.5**0.9)
    assert all(np.isfinite(r.loss) and r.loss > 0 for r in result.steps)
    assert result.best_epoch == 1
    assert result.best_f1 is None


def test_step_record_line():
    record = StepRecord(epoch=0, step=1, loss=0.5, lr=1e-05, bce=0.1, dice=0.2, boundary=0.3)

    assert record.line() == "0 1 0.500000 1e-05"


def test_validation_keeps_best_epoch(micro_model, samples):
    result = train_loop(micro_model, samples[:2], samples[2:], hp=TrainParams(epochs=3, lr=1e-3))

    assert len(result.val_f1) == 3
    assert result.best_f1 == max(result.val_f1)
    assert result.best_epoch == result.val_f1.index(max(result.val_f1))
    assert set(result.best_state) == set(micro_model.store.state_dict())


def test_max_steps_stops_training(micro_model, samples):
    result = train_loop(micro_model, samples, samples[:1], hp=TrainParams(epochs=3, max_steps=1))

    assert len(result.steps) == 1
    assert len(result.val_f1) == 1


def test_f1_at_half_range(micro_model, samples):
    assert 0.0 <= f1_at_half(micro_model, samples) <= 1.0


@pytest.mark.slow
def test_loss_decreases():
    data = generate(GenSpec(count=4, size=32, seed=11))
    model = build(variant_config("micro"), "f64")

    result = train_loop(model, data, hp=TrainParams(epochs=25, lr=1e-3, power=0.0, max_steps=50))

    assert len(result.losses) == 50
    assert np.mean(result.losses[-10:]) < np.mean(result.losses[:10])


@pytest.mark.slow
def test_micro_overfits_small_training_set(overfit_run):
    model, samples, result = overfit_run

    assert len(result.steps) == 300
    assert result.losses[-1] <= 0.2 * result.losses[0]
    assert f1_at_half(model, samples) >= 0.95
