"""Command-line interface for fluxamba."""

from enum import IntEnum
from pathlib import Path
from typing import Annotated

import click
import typer
from pydantic import ValidationError
from typer.core import TyperGroup

from fluxamba import services
from fluxamba.config import LogLevel, Precision, settings
from fluxamba.exceptions import ConfigError, DataError, FluxambaError, GradientError, NumericError
from fluxamba.logger import get_logger, set_log_level
from fluxamba.models import (
    BlockConfig,
    GenSpec,
    MiouMode,
    ModelConfig,
    RunConfig,
    TrainParams,
    variant_config,
)
from fluxamba.numerics.gradcheck import SCOPES
from fluxamba.scan import ScanStrategy

logger = get_logger(__name__)


class ExitCode(IntEnum):
    ok = 0
    usage = 1
    data = 2
    numeric = 3


VARIANT_NAMES = ("micro", "tiny", "small", "base", "large")


class CliGroup(TyperGroup):
    """Maps failures to the stable exit codes: 1 usage, 2 data, 3 numeric."""

    def make_context(self, info_name, args, parent=None, **extra):
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except click.UsageError as e:
            e.exit_code = ExitCode.usage
            raise

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = ExitCode.usage
            raise
        except DataError as e:
            typer.echo(f"error: {e}", err=True)
            raise typer.Exit(ExitCode.data) from None
        except (NumericError, GradientError) as e:
            typer.echo(f"error: {e}", err=True)
            raise typer.Exit(ExitCode.numeric) from None
        except (ConfigError, FluxambaError, ValidationError) as e:
            typer.echo(f"error: {e}", err=True)
            raise typer.Exit(ExitCode.usage) from None


cli = typer.Typer(cls=CliGroup, no_args_is_help=True, add_completion=False)


def read_config_file(path: Path) -> dict[str, str]:
    """Parse `key=value` lines; blank lines and lines starting with # are skipped.

    Raises:
        click.BadParameter: If a line has no '=' or the file cannot be read.
    """
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise click.BadParameter(f"cannot read {path}: {exc.strerror}", param_hint="--config") from None
    values = {}
    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise click.BadParameter(f"line {number} is not key=value: {line!r}", param_hint="--config")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def config_default_map(group: click.Group, values: dict[str, str]) -> dict[str, dict[str, str]]:
    """Spread config values over every subcommand that has a parameter of that name.

    Raises:
        click.BadParameter: For a key no subcommand accepts.
    """
    default_map: dict[str, dict[str, str]] = {}
    known = set()
    for name, command in group.commands.items():
        params = {p.name for p in command.params}
        known |= params
        default_map[name] = {key: value for key, value in values.items() if key in params}
    unknown = sorted(set(values) - known)
    if unknown:
        raise click.BadParameter(f"unknown keys {', '.join(unknown)}", param_hint="--config")
    return default_map


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise typer.BadParameter(f"expected comma-separated numbers, got {text!r}", param_hint=flag) from None
    if not values or any(v < 0 for v in values):
        raise typer.BadParameter("expected one or more non-negative numbers", param_hint=flag)
    return values


def _parse_ints(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        message = f"expected comma-separated integers, got {text!r}"
        raise typer.BadParameter(message, param_hint=flag) from None


def _check_variant(name: str) -> str:
    if name not in VARIANT_NAMES:
        raise typer.BadParameter(f"expected one of {', '.join(VARIANT_NAMES)}", param_hint="--variant")
    return name


def _model_config(variant: str, strategy: ScanStrategy, seed: int) -> ModelConfig:
    return variant_config(_check_variant(variant), seed=seed, block=BlockConfig(strategy=strategy))


def _run_command(run: RunConfig, func, *args, **kwargs):
    """Helper to log command execution with start and finish messages.

    Args:
        run: The parsed invocation, logged with the start message.
        func: Service function to execute.
        *args: Positional arguments to pass to the function.
        **kwargs: Keyword arguments to pass to the function.

    Returns:
        The result of the executed function.
    """
    logger.info(f"Starting {run.command} command", extra={"run": run.model_dump(mode="json")})
    result = func(*args, **kwargs)
    logger.info(f"Finishing {run.command} command")
    return result


@cli.callback()
def main(
    ctx: typer.Context,
    config: Annotated[
        Path | None, typer.Option("--config", help="File of key=value lines setting any flag's default.")
    ] = None,
    log_level: Annotated[
        LogLevel | None, typer.Option(help="Override the fluxamba_log_level setting.")
    ] = None,
) -> None:
    """Fluxamba: curvilinear lineament segmentation with directional selective scans."""
    if log_level is not None:
        set_log_level(log_level)
    if config is not None:
        ctx.default_map = config_default_map(ctx.command, read_config_file(config))


@cli.command("gen")
def gen_command(
    out: Annotated[Path, typer.Option(help="Dataset root directory.")],
    count: Annotated[int, typer.Option(help="Number of samples.")] = 10,
    size: Annotated[int, typer.Option(help="Image height and width.")] = 64,
    seed: Annotated[int, typer.Option(help="Generator seed.")] = settings.seed,
    strokes: Annotated[int, typer.Option(help="Strokes per image.")] = 3,
    thickness_min: Annotated[float, typer.Option(help="Smallest stroke thickness (px).")] = 1.5,
    thickness_max: Annotated[float, typer.Option(help="Largest stroke thickness (px).")] = 3.0,
    contrast_min: Annotated[float, typer.Option(help="Smallest stroke contrast.")] = 0.15,
    contrast_max: Annotated[float, typer.Option(help="Largest stroke contrast.")] = 0.35,
    craters: Annotated[int, typer.Option(help="Crater distractors per image.")] = 2,
    texture_scale: Annotated[int, typer.Option(help="Coarsest background noise cell (px).")] = 16,
    texture_amplitude: Annotated[float, typer.Option(help="Background texture amplitude.")] = 0.15,
) -> None:
    """Generate a synthetic lineament dataset with train/val/test splits."""
    spec = GenSpec(
        count=count,
        size=size,
        seed=seed,
        strokes=strokes,
        thickness_min=thickness_min,
        thickness_max=thickness_max,
        contrast_min=contrast_min,
        contrast_max=contrast_max,
        craters=craters,
        texture_scale=texture_scale,
        texture_amplitude=texture_amplitude,
    )
    run = RunConfig(command="gen", seed=seed, paths={"out": str(out)}, options=spec.model_dump(mode="json"))
    splits = _run_command(run, services.generate_dataset, spec, out)
    sizes = ", ".join(f"{split} {len(ids)}" for split, ids in splits.items())
    typer.echo(f"generated {count} samples in {out} ({sizes})")


@cli.command("train")
def train_command(
    data: Annotated[Path, typer.Option(help="Dataset root directory.")],
    out: Annotated[Path, typer.Option(help="Directory for checkpoints and the step log.")] = Path("runs"),
    variant: Annotated[str, typer.Option(help="micro, tiny, small, base or large.")] = settings.variant,
    strategy: Annotated[ScanStrategy, typer.Option(help="Scan route strategy.")] = ScanStrategy.fs2d,
    epochs: Annotated[int, typer.Option(help="Passes over the training split.")] = 5,
    batch: Annotated[int, typer.Option(help="Samples per step (at least 2).")] = 2,
    lr: Annotated[float, typer.Option(help="Base learning rate.")] = 1e-5,
    weight_decay: Annotated[float, typer.Option(help="Decoupled AdamW weight decay.")] = 0.01,
    power: Annotated[float, typer.Option(help="Polynomial schedule power.")] = 0.9,
    max_steps: Annotated[int | None, typer.Option(help="Stop after this many steps.")] = None,
    augment: Annotated[bool, typer.Option(help="Random flips and rotations.")] = True,
    seed: Annotated[int, typer.Option(help="Initialization, shuffle and dropout seed.")] = settings.seed,
    dtype: Annotated[Precision, typer.Option(help="Tensor precision.")] = settings.dtype,
) -> None:
    """Train a model and write best.flxa, final.flxa and train.log."""
    cfg = _model_config(variant, strategy, seed)
    hp = TrainParams(
        epochs=epochs,
        batch=batch,
        lr=lr,
        weight_decay=weight_decay,
        power=power,
        seed=seed,
        augment=augment,
        max_steps=max_steps,
    )
    run = RunConfig(
        command="train",
        seed=seed,
        paths={"data": str(data), "out": str(out)},
        options=hp.model_dump(mode="json"),
        model=cfg,
        dtype=dtype,
    )
    outcome = _run_command(run, services.train_model, data, cfg, hp, out, dtype, echo=typer.echo)
    best = outcome.result.best_f1
    score = f", val F1 {best:.4f}" if best is not None else ""
    typer.echo(f"best checkpoint: {outcome.best_path} (epoch {outcome.result.best_epoch}{score})")
    typer.echo(f"final checkpoint: {outcome.final_path}")


@cli.command("infer")
def infer_command(
    ckpt: Annotated[Path, typer.Option(help="Checkpoint file.")],
    input_path: Annotated[Path, typer.Option("--input", help="Grayscale P5 image.")],
    out: Annotated[Path, typer.Option(help="Output mask (P5, values 0/255).")],
    dump_features: Annotated[Path | None, typer.Option(help="Directory for per-stage feature dumps.")] = None,
) -> None:
    """Predict the lineament mask of one image."""
    run = RunConfig(
        command="infer",
        paths={
            "ckpt": str(ckpt),
            "input": str(input_path),
            "out": str(out),
            "dump": str(dump_features or ""),
        },
    )
    outcome = _run_command(run, services.infer, ckpt, input_path, out, dump_features)
    if any(outcome.padding):
        rows, cols = outcome.padding
        typer.echo(f"input padded by {rows} rows and {cols} columns to a multiple of 32, output cropped back")
    typer.echo(f"wrote {out} ({outcome.foreground} foreground pixels)")
    for path in outcome.dumps:
        typer.echo(f"wrote {path}")


@cli.command("eval")
def eval_command(
    ckpt: Annotated[Path, typer.Option(help="Checkpoint file.")],
    data: Annotated[Path, typer.Option(help="Dataset root directory.")],
    split: Annotated[str, typer.Option(help="train, val or test.")] = "test",
    noise: Annotated[str, typer.Option(help="Comma-separated Gaussian noise levels.")] = "0",
    seed: Annotated[int, typer.Option(help="Noise seed.")] = settings.seed,
    csv: Annotated[
        Path | None, typer.Option(help="CSV output; defaults to eval.csv next to the checkpoint.")
    ] = None,
    miou_mode: Annotated[MiouMode, typer.Option(help="mIoU aggregation.")] = MiouMode.printed,
) -> None:
    """Evaluate a checkpoint: P/R/F1 at 0.5, ODS, OIS, mIoU and noise drop rates."""
    if split not in ("train", "val", "test"):
        raise typer.BadParameter("expected train, val or test", param_hint="--split")
    sigmas = _parse_floats(noise, "--noise")
    csv_path = csv if csv is not None else ckpt.parent / "eval.csv"
    run = RunConfig(
        command="eval",
        seed=seed,
        paths={"ckpt": str(ckpt), "data": str(data), "csv": str(csv_path)},
        options={"split": split, "noise": sigmas, "miou_mode": str(miou_mode)},
    )
    reports = _run_command(
        run, services.evaluate_checkpoint, ckpt, data, split, sigmas, seed, miou_mode, csv_path
    )
    typer.echo(f"{'sigma':>6} {'P':>7} {'R':>7} {'F1':>7} {'ODS':>7} {'OIS':>7} {'mIoU':>7} {'drop':>7}")
    for r in reports:
        typer.echo(
            f"{r.sigma:>6g} {r.precision:7.4f} {r.recall:7.4f} {r.f1:7.4f} {r.ods:7.4f} "
            f"{r.ois:7.4f} {r.miou:7.4f} {r.drop_rate or 0.0:7.4f}"
        )
    typer.echo(f"wrote {csv_path}")


@cli.command("bench")
def bench_command(
    variant: Annotated[str, typer.Option(help="micro, tiny, small, base or large.")] = settings.variant,
    size: Annotated[int, typer.Option(help="Input height and width (multiple of 32).")] = settings.input_size,
    repeat: Annotated[int, typer.Option(min=1, help="Timed forward passes.")] = settings.bench_repeat,
    strategy: Annotated[ScanStrategy, typer.Option(help="Scan route strategy.")] = ScanStrategy.fs2d,
    scan_lengths: Annotated[str, typer.Option(help="Sequence lengths of the scan timing; empty to skip.")] = (
        "4096,16384,65536"
    ),
    seed: Annotated[int, typer.Option(help="Initialization seed.")] = settings.seed,
    dtype: Annotated[Precision, typer.Option(help="Tensor precision.")] = settings.dtype,
) -> None:
    """Report parameters, FLOPs, checkpoint size, forward latency and scan scaling."""
    cfg = _model_config(variant, strategy, seed)
    lengths = _parse_ints(scan_lengths, "--scan-lengths")
    run = RunConfig(
        command="bench",
        seed=seed,
        options={"size": size, "repeat": repeat, "scan_lengths": lengths},
        model=cfg,
        dtype=dtype,
    )
    report = _run_command(run, services.benchmark, cfg, size, repeat, dtype, lengths, seed)
    cost = report.cost
    typer.echo(f"variant        {cfg.variant} ({strategy})")
    typer.echo(f"params         {cost.params}")
    typer.echo(f"flops          {cost.flops}")
    typer.echo(f"size_bytes     {cost.size_bytes}")
    typer.echo(f"warmup         {report.warmup}")
    typer.echo(f"latency_mean   {cost.latency_mean:.6f}s")
    typer.echo(f"latency_median {cost.latency_median:.6f}s")
    typer.echo(f"fps            {cost.fps or 0.0:.2f}")
    if report.profile is not None:
        typer.echo("scan_length seconds")
        for length, seconds in report.profile.points:
            typer.echo(f"{length:>11} {seconds:.6f}")
        typer.echo(f"linear fit r2={report.profile.r_squared:.4f} slope={report.profile.slope:.3e}s/step")


@cli.command("gradcheck")
def gradcheck_command(
    scope: Annotated[str, typer.Option(help="ops, blocks or model.")] = "ops",
    seed: Annotated[int, typer.Option(help="Input and element-sampling seed.")] = settings.seed,
) -> None:
    """Compare analytic gradients with central finite differences in f64."""
    if scope not in SCOPES:
        raise typer.BadParameter(f"expected one of {', '.join(SCOPES)}", param_hint="--scope")
    run = RunConfig(command="gradcheck", seed=seed, options={"scope": scope})
    results = _run_command(run, services.run_gradcheck, scope, seed)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        typer.echo(f"{status} {r.scope}/{r.name} max_rel_error={r.max_rel_error:.3e} tol={r.tolerance:.0e}")
    failed = [r for r in results if not r.passed]
    typer.echo(f"{len(results) - len(failed)}/{len(results)} cases passed")
    if failed:
        raise typer.Exit(ExitCode.numeric)


@cli.command("ablate")
def ablate_command(
    variant: Annotated[str, typer.Option(help="micro, tiny, small, base or large.")] = settings.variant,
    size: Annotated[int, typer.Option(help="Input height and width (multiple of 32).")] = settings.input_size,
    seed: Annotated[int, typer.Option(help="Initialization and input seed.")] = settings.seed,
    dtype: Annotated[Precision, typer.Option(help="Tensor precision.")] = settings.dtype,
) -> None:
    """Build and run all 16 ASG/PMF/HSR/HFFU toggle combinations once."""
    cfg = variant_config(_check_variant(variant), seed=seed)
    run = RunConfig(command="ablate", seed=seed, options={"size": size}, model=cfg, dtype=dtype)
    rows = _run_command(run, services.run_ablation, cfg, size, dtype, seed)
    typer.echo("asg pmf hsr hffu     params        flops finite")
    for row in rows:
        flags = " ".join(f"{int(on):>3}" for on in row.toggles.values())
        typer.echo(f"{flags} {row.params:>10} {row.flops:>12} {row.finite}")
    if not all(row.finite for row in rows):
        raise typer.Exit(ExitCode.numeric)
