import csv
import logging

import pytest
from typer.main import get_command
from typer.testing import CliRunner

from fluxamba.config import settings
from fluxamba.data.pgm import write_pgm
from fluxamba.logger import set_log_level
from fluxamba.main import cli, config_default_map, ExitCode, read_config_file

runner = CliRunner()


def invoke(*args: str):
    return runner.invoke(cli, [str(a) for a in args])


def test_gen(tmp_path):
    out = tmp_path / "data"

    result = invoke("gen", "--out", out, "--count", 10, "--size", 32)

    assert result.exit_code == ExitCode.ok
    assert "generated 10 samples" in result.stdout
    assert len(list((out / "images").glob("*.pgm"))) == 10


def test_gen_without_samples_is_a_data_error(tmp_path):
    result = invoke("gen", "--out", tmp_path / "data", "--count", 0)

    assert result.exit_code == ExitCode.data


def test_gen_invalid_range_is_a_usage_error(tmp_path):
    result = invoke("gen", "--out", tmp_path / "data", "--contrast-min", 0.5, "--contrast-max", 0.2)

    assert result.exit_code == ExitCode.usage


def test_unknown_flag(tmp_path):
    result = invoke("gen", "--out", tmp_path / "data", "--wingspan", 3)

    assert result.exit_code == ExitCode.usage


def test_train_batch_of_one(dataset_dir, tmp_path):
    run = tmp_path / "run"

    result = invoke("train", "--data", dataset_dir, "--out", run, "--variant", "micro", "--batch", 1)

    assert result.exit_code == ExitCode.usage


def test_train_unknown_variant(dataset_dir, tmp_path):
    result = invoke("train", "--data", dataset_dir, "--variant", "huge")

    assert result.exit_code == ExitCode.usage


def test_train(dataset_dir, tmp_path):
    run = tmp_path / "run"

    result = invoke(
        "train", "--data", dataset_dir, "--out", run, "--variant", "micro", "--epochs", 1, "--lr", 1e-4
    )

    assert result.exit_code == ExitCode.ok, result.output
    assert result.stdout.startswith("0 1 ")
    assert "best checkpoint:" in result.stdout
    assert (run / "best.flxa").is_file() and (run / "final.flxa").is_file()
    assert len((run / "train.log").read_text(encoding="utf-8").splitlines()) == 4


def test_eval(checkpoint_path, dataset_dir, tmp_path):
    out = tmp_path / "metrics.csv"

    result = invoke(
        "eval", "--ckpt", checkpoint_path, "--data", dataset_dir, "--noise", "0,0.1", "--csv", out
    )

    assert result.exit_code == ExitCode.ok, result.output
    assert "sigma" in result.stdout
    with out.open(encoding="utf-8") as handle:
        assert len(list(csv.reader(handle))) == 15


def test_eval_default_csv_location(checkpoint_path, dataset_dir):
    result = invoke("eval", "--ckpt", checkpoint_path, "--data", dataset_dir, "--split", "val")

    assert result.exit_code == ExitCode.ok
    assert (checkpoint_path.parent / "eval.csv").is_file()


def test_eval_empty_split(checkpoint_path, tmp_path):
    data = tmp_path / "small"
    invoke("gen", "--out", data, "--count", 5, "--size", 32)

    result = invoke("eval", "--ckpt", checkpoint_path, "--data", data)

    assert result.exit_code == ExitCode.data


@pytest.mark.parametrize("noise", ["-0.1", "a,b", ""])
def test_eval_bad_noise(checkpoint_path, dataset_dir, noise):
    result = invoke("eval", "--ckpt", checkpoint_path, "--data", dataset_dir, "--noise", noise)

    assert result.exit_code == ExitCode.usage


def test_infer(checkpoint_path, tmp_path, rng):
    image = tmp_path / "input.pgm"
    write_pgm(rng.uniform(size=(1, 40, 40)), image)

    result = invoke(
        "infer",
        "--ckpt",
        checkpoint_path,
        "--input",
        image,
        "--out",
        tmp_path / "mask.pgm",
        "--dump-features",
        tmp_path / "dumps",
    )

    assert result.exit_code == ExitCode.ok, result.output
    assert "padded by 24 rows and 24 columns" in result.stdout
    assert len(list((tmp_path / "dumps").glob("*.flxa"))) == 4


def test_infer_missing_input(checkpoint_path, tmp_path):
    result = invoke(
        "infer", "--ckpt", checkpoint_path, "--input", tmp_path / "missing.pgm", "--out", tmp_path / "m.pgm"
    )

    assert result.exit_code == ExitCode.data


def test_bench():
    result = invoke("bench", "--variant", "micro", "--size", 32, "--repeat", 2, "--scan-lengths", "")

    assert result.exit_code == ExitCode.ok, result.output
    assert "params" in result.stdout
    assert "warmup         1" in result.stdout
    assert "scan_length" not in result.stdout


def test_gradcheck_ops():
    result = invoke("gradcheck", "--scope", "ops")

    assert result.exit_code == ExitCode.ok, result.output
    assert "FAIL" not in result.stdout
    assert "cases passed" in result.stdout


def test_gradcheck_unknown_scope():
    result = invoke("gradcheck", "--scope", "everything")

    assert result.exit_code == ExitCode.usage


def test_ablate():
    result = invoke("ablate", "--variant", "micro", "--size", 32)

    assert result.exit_code == ExitCode.ok, result.output
    assert len(result.stdout.splitlines()) == 17


def test_ablate_unknown_variant():
    result = invoke("ablate", "--variant", "huge")

    assert result.exit_code == ExitCode.usage


def test_config_file_sets_defaults(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("# generator\ncount=50\nsize=32\n", encoding="utf-8")
    out = tmp_path / "data"

    result = invoke("--config", config, "gen", "--out", out, "--count", 3)

    assert result.exit_code == ExitCode.ok, result.output
    assert "generated 3 samples" in result.stdout
    assert (out / "images" / "00000.pgm").read_bytes().startswith(b"P5\n32 32\n")


def test_config_file_unknown_key(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("wingspan=3\n", encoding="utf-8")

    result = invoke("--config", config, "gen", "--out", tmp_path / "data")

    assert result.exit_code == ExitCode.usage


def test_read_config_file(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("\n# comment\n--thickness-min = 2.0\nseed=7\n", encoding="utf-8")

    assert read_config_file(config) == {"thickness_min": "2.0", "seed": "7"}


def test_config_default_map_spreads_shared_keys():
    default_map = config_default_map(get_command(cli), {"seed": "7", "epochs": "2"})

    assert default_map["gen"] == {"seed": "7"}
    assert default_map["train"] == {"seed": "7", "epochs": "2"}
    assert default_map["infer"] == {}


def test_log_level_option(tmp_path):
    try:
        result = invoke("--log-level", "error", "gen", "--out", tmp_path / "data", "--count", 1, "--size", 32)

        assert result.exit_code == ExitCode.ok
        assert logging.getLogger("fluxamba.services.datasets").level == logging.ERROR
    finally:
        set_log_level(settings.log_level)
