# Learning check: a refiner overfits one corrupted layered scene
#
# Runs 500 training steps per decoder configuration; deselected by default, run with `pytest -m slow`.

import pytest

from voxrefine.network import RefineConfig
from voxrefine.train import RunConfig, SyntheticDataset, load_samples, train_refiner

DECODERS = {
    "unet": dict(),
    "pnam": dict(decoder="pnam"),
    "pnam_vlgm": dict(decoder="pnam", fusion="both"),
}


@pytest.mark.slow
@pytest.mark.parametrize("variant", sorted(DECODERS))
def test_refiner_beats_its_coarse_input(tmp_path, variant):
    refine = RefineConfig(num_classes=5, base_width=8, heads=4, dcam_heads=4, lr_peak=1e-2, **DECODERS[variant])
    run = RunConfig(
        refine=refine,
        dataset=SyntheticDataset(dims=(32, 32, 8), text=refine.fusion != "none"),
        steps=500,
        eval_every=100,
        checkpoint=str(tmp_path / "refiner.ckpt"),
        metric_log=str(tmp_path / "metrics.jsonl"),
    )
    train, val = load_samples(run.dataset, refine)
    _, result = train_refiner(train, val, run)
    assert result.final.miou - result.final.coarse_miou >= 0.15
