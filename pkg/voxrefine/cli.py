#!/usr/bin/env python
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from functools import wraps
from pathlib import Path
from typing import Optional

import typer
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from voxrefine.checks import GradCheckRegistry
from voxrefine.metrics import confusion_of, render_csv, render_text, report_table
from voxrefine.network import load_checkpoint
from voxrefine.train import DivergenceError, RunConfig, load_samples, predict, train_refiner
from voxrefine.voxio import (
    GRID_FORMATS,
    downsample_labels_majority,
    load_grid,
    load_remap,
    load_scene,
    load_text,
    save_grid,
    scene_files,
)

load_dotenv()

app = typer.Typer(help="voxrefine - refine coarse semantic voxel grids")

EXIT_USAGE = 1
EXIT_INTERNAL = 2

console = Console()


def setup_logging(debug: bool = False):
    """Configure logging based on debug flag"""
    log_level = logging.INFO if debug else logging.WARNING

    logging.basicConfig(
        level=log_level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, console=console)]
    )
    logging.getLogger("voxrefine").setLevel(log_level)

    if debug:
        console.print("[yellow]Debug mode enabled - logging set to INFO level[/]")


def thread_budget() -> int:
    """Parallel fan-out cap from ESSC_THREADS (default 1)."""
    try:
        return max(1, int(os.getenv("ESSC_THREADS", "1")))
    except ValueError:
        return 1


def reports_errors(func):
    """Map exceptions to exit codes: 1 for bad input or usage, 2 for broken invariants."""

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except typer.Exit:
            raise
        except (AssertionError, RuntimeError, DivergenceError) as e:
            console.print(f"[bold red]Internal error:[/] {e}")
            raise typer.Exit(EXIT_INTERNAL)
        except ValidationError as e:
            console.print(f"[bold red]Invalid configuration[/] ({e.error_count()} errors)")
            for error in e.errors():
                location = ".".join(str(part) for part in error["loc"]) or "<document>"
                console.print(f"  [red]{location}[/]: {error['msg']}")
            raise typer.Exit(EXIT_USAGE)
        except (ValueError, OSError) as e:
            console.print(f"[bold red]Error:[/] {e}")
            raise typer.Exit(EXIT_USAGE)

    return wrapper


def load_run_config(path: Path) -> RunConfig:
    return RunConfig.model_validate_json(path.read_text())


@app.command()
@reports_errors
def gradcheck(
    op_filter: Optional[str] = typer.Option(None, "--filter", help="Only check this operation and its variants"),
    trials: int = typer.Option(10, "--trials", help="Random instances per operation"),
    corrupt_backward: bool = typer.Option(False, "--corrupt-backward", hidden=True),
    debug: bool = typer.Option(False, "--debug", help="Enable debug logging")
):
    """
    Compare analytic gradients with central finite differences
    """
    setup_logging(debug)
    report = GradCheckRegistry().check(op_filter, trials=trials, include_negative=corrupt_backward)

    table = Table(title=f"Gradient checks (eps {report.eps:g}, tol {report.tol:g}, atol {report.atol:g})")
    table.add_column("operation")
    table.add_column("max rel err", justify="right")
    table.add_column("status")
    for result in report.results:
        table.add_row(result.op, f"{result.max_rel_err:.2e}", "[green]ok[/]" if result.passed else "[red]FAIL[/]")
    console.print(table)
    if not report.passed:
        console.print(f"[bold red]Failed:[/] {', '.join(report.failures)}")
        raise typer.Exit(EXIT_USAGE)


@app.command()
@reports_errors
def train(
    config: Path = typer.Option(..., "--config", help="Run configuration JSON"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the configured seed"),
    debug: bool = typer.Option(False, "--debug", help="Enable debug logging")
):
    """
    Train a refiner and write its checkpoint and metric log
    """
    setup_logging(debug)
    run = load_run_config(config)
    if seed is not None:
        run = run.model_copy(update={"refine": run.refine.model_copy(update={"seed": seed})})
    train_samples, val_samples = load_samples(run.dataset, run.refine)
    _, result = train_refiner(train_samples, val_samples, run)

    console.print(f"[green]Checkpoint[/] {result.checkpoint} sha256 {result.checkpoint_sha256}")
    if result.final is not None:
        console.print(
            f"Validation IoU {100 * result.final.iou:.2f}  mIoU {100 * result.final.miou:.2f}  "
            f"(coarse mIoU {100 * result.final.coarse_miou:.2f})"
        )


@app.command()
@reports_errors
def refine(
    grid: Path = typer.Argument(..., help="Coarse grid file"),
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Weight checkpoint"),
    config: Path = typer.Option(..., "--config", help="Run configuration JSON the checkpoint was trained with"),
    text: Optional[Path] = typer.Option(None, "--text", help="Text embedding file"),
    out: Path = typer.Option(..., "--out", help="Refined grid output file"),
    debug: bool = typer.Option(False, "--debug", help="Enable debug logging")
):
    """
    Refine one coarse grid with a trained checkpoint
    """
    setup_logging(debug)
    cfg = load_run_config(config).refine
    weights = load_checkpoint(checkpoint, cfg)
    coarse, _ = load_grid(grid)
    if coarse.max_label >= cfg.num_classes:
        raise ValueError(f"grid label {coarse.max_label} is outside the {cfg.num_classes} configured classes")
    embedding = load_text(text) if text is not None else None

    refined = predict(coarse, weights, embedding)
    save_grid(out, refined, cfg.num_classes - 1)
    console.print(f"[green]Wrote[/] {out} ({'x'.join(str(n) for n in refined.dims)})")


@app.command(name="eval")
@reports_errors
def evaluate(
    pred_dir: Path = typer.Argument(..., help="Directory of predicted grid files"),
    gt_dir: Path = typer.Argument(..., help="Directory of ground-truth grid files with matching names"),
    classes: int = typer.Option(20, "--classes", help="Number of classes including empty"),
    grid_format: str = typer.Option("grid", "--format", help="File format: grid or semkitti (.label with .invalid masks)"),
    remap: Optional[Path] = typer.Option(None, "--remap", help="Label remap (JSON, or the benchmark YAML) for semkitti files"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write the table as CSV here"),
    debug: bool = typer.Option(False, "--debug", help="Enable debug logging")
):
    """
    Score predictions against ground truth in known space
    """
    setup_logging(debug)
    if grid_format not in GRID_FORMATS:
        raise ValueError(f"unknown format {grid_format!r}, choose from {list(GRID_FORMATS)}")
    if grid_format == "semkitti" and remap is None:
        raise ValueError("--format semkitti needs --remap")
    table = load_remap(remap) if grid_format == "semkitti" else None
    preds, gts = scene_files(pred_dir, grid_format), scene_files(gt_dir, grid_format)
    if set(preds) != set(gts):
        only_pred = sorted(set(preds) - set(gts))
        only_gt = sorted(set(gts) - set(preds))
        raise ValueError(f"file sets differ: only predicted {only_pred[:5]}, only ground truth {only_gt[:5]}")
    if not preds:
        raise ValueError(f"no {grid_format} files in {pred_dir}")

    def score_scene(name: str):
        pred = load_scene(preds[name], grid_format, table)
        gt = load_scene(gts[name], grid_format, table, require_mask=True)
        return confusion_of(pred, gt, classes)

    names = sorted(preds)
    with ThreadPoolExecutor(max_workers=thread_budget()) as pool:
        matrices = list(pool.map(score_scene, names))
    report = report_table({Path(name).stem: cm for name, cm in zip(names, matrices)})

    console.print(render_text(report), markup=False, highlight=False)
    if out is not None:
        out.write_text(render_csv(report))
        console.print(f"[green]Wrote[/] {out}")


@app.command(name="make-msgt")
@reports_errors
def make_msgt(
    gt_dir: Path = typer.Argument(..., help="Directory of ground-truth grid files"),
    out: Path = typer.Option(..., "--out", help="Output directory"),
    scales: str = typer.Option("1,2,4,8", "--scales", help="Comma-separated downsampling factors"),
    debug: bool = typer.Option(False, "--debug", help="Enable debug logging")
):
    """
    Write majority-vote targets for every supervised scale
    """
    setup_logging(debug)
    factors = [int(part) for part in scales.split(",") if part.strip()]
    if not factors:
        raise ValueError("no scales given")
    out.mkdir(parents=True, exist_ok=True)
    for name, path in scene_files(gt_dir).items():
        grid, max_class = load_grid(path)
        for axis, extent in zip("XYZ", grid.dims):
            if extent % max(factors):
                raise ValueError(f"{name}: {axis} extent {extent} is not divisible by {max(factors)}")
        stem, suffix = Path(name).stem, Path(name).suffix
        for factor in factors:
            save_grid(out / f"{stem}_1_{factor}{suffix}", downsample_labels_majority(grid, factor), max_class)
    console.print(f"[green]Wrote[/] targets for scales {factors} to {out}")


@app.command(name="print-default-config")
def print_default_config():
    """
    Print a fully populated default run configuration
    """
    typer.echo(RunConfig().model_dump_json(indent=2))


def main():
    """Entry point for the CLI"""
    app()


if __name__ == "__main__":
    main()
