import csv

import pytest

from fluxamba import services
from fluxamba.data.dataset import write_dataset
from fluxamba.data.synthetic import generate
from fluxamba.exceptions import DataError, EmptySweepError
from fluxamba.metrics import THRESHOLDS
from fluxamba.models import GenSpec


def test_evaluate_checkpoint(checkpoint_path, dataset_dir, tmp_path):
    out = tmp_path / "metrics.csv"

    reports = services.evaluate_checkpoint(checkpoint_path, dataset_dir, sigmas=(0.0, 0.1), csv_path=out)

    assert [r.sigma for r in reports] == [0.0, 0.1]
    assert all(r.images == 1 for r in reports)
    assert reports[0].drop_rate == 0.0
    assert reports[1].drop_rate is not None
    for report in reports:
        for value in (report.precision, report.recall, report.f1, report.ods, report.ois, report.miou):
            assert 0.0 <= value <= 1.0
        assert report.ods_threshold in THRESHOLDS
        assert report.ods >= report.f1

    with out.open(encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["sigma", "metric", "threshold", "value"]
    assert len(rows) == 7 * 2 + 1
    assert [row[1] for row in rows[1:8]] == ["precision", "recall", "f1", "ods", "ois", "miou", "drop_rate"]
    assert rows[1][:3] == ["0", "precision", "0.50"]
    assert rows[5][2] == ""


def test_evaluate_is_seeded(checkpoint_path, dataset_dir):
    first = services.evaluate_checkpoint(checkpoint_path, dataset_dir, "val", sigmas=(0.2,), seed=3)
    second = services.evaluate_checkpoint(checkpoint_path, dataset_dir, "val", sigmas=(0.2,), seed=3)

    assert first == second


def test_evaluate_empty_split(checkpoint_path, tmp_path):
    write_dataset(generate(GenSpec(count=5, size=32)), tmp_path / "small")

    with pytest.raises(EmptySweepError) as excinfo:
        services.evaluate_checkpoint(checkpoint_path, tmp_path / "small", "test")
    assert "is empty" in str(excinfo.value)


def test_evaluate_missing_checkpoint(dataset_dir, tmp_path):
    with pytest.raises(DataError):
        services.evaluate_checkpoint(tmp_path / "missing.flxa", dataset_dir)
