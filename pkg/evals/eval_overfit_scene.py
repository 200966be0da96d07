import tempfile
from pathlib import Path
from typing import Any, Dict

from rich.console import Console
from rich.table import Table

from voxrefine.network import RefineConfig
from voxrefine.train import RunConfig, SyntheticDataset, load_samples, train_refiner

# a refiner should clear this mIoU gain over its corrupted input on one memorised scene
MIN_GAIN = 0.15


def run_refiner(data: Dict[str, Any], workdir: Path):
    """Overfit one synthetic scene and return the final validation record"""
    refine = RefineConfig(
        num_classes=5,
        base_width=8,
        heads=4,
        dcam_heads=4,
        lr_peak=1e-2,
        decoder=data["decoder"],
        fusion=data["fusion"],
    )
    run = RunConfig(
        refine=refine,
        dataset=SyntheticDataset(dims=(32, 32, 8), text=data["fusion"] != "none"),
        steps=data["steps"],
        eval_every=100,
        checkpoint=str(workdir / f"{data['name']}.ckpt"),
        metric_log=str(workdir / f"{data['name']}.jsonl"),
    )
    train, val = load_samples(run.dataset, run.refine)
    _, result = train_refiner(train, val, run)
    return result.final


def eval_gain(final, target: Dict[str, Any]) -> bool:
    return final.miou - final.coarse_miou >= target["min_gain"]


data = [
    {"data": {"name": "unet", "decoder": "conv", "fusion": "none", "steps": 500}, "target": {"min_gain": MIN_GAIN}},
    {"data": {"name": "pnam", "decoder": "pnam", "fusion": "none", "steps": 500}, "target": {"min_gain": MIN_GAIN}},
    {"data": {"name": "pnam_vlgm", "decoder": "pnam", "fusion": "both", "steps": 500}, "target": {"min_gain": MIN_GAIN}},
]


def main():
    console = Console()
    table = Table(title="Single-scene overfit")
    for column in ("variant", "coarse mIoU", "refined mIoU", "gain", "status"):
        table.add_column(column, justify="left" if column == "variant" else "right")

    with tempfile.TemporaryDirectory() as tmp:
        for item in data:
            final = run_refiner(item["data"], Path(tmp))
            passed = eval_gain(final, item["target"])
            table.add_row(
                item["data"]["name"],
                f"{100 * final.coarse_miou:.2f}",
                f"{100 * final.miou:.2f}",
                f"{100 * (final.miou - final.coarse_miou):+.2f}",
                "[green]ok[/]" if passed else "[red]FAIL[/]",
            )
    console.print(table)


if __name__ == "__main__":
    main()
