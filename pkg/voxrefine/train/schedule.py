"""Linear warmup followed by cosine decay to zero."""

from __future__ import annotations

import math


def warmup_steps(total_steps: int, warmup_frac: float) -> int:
    return int(round(warmup_frac * total_steps))


def cosine_warmup_lr(step: int, total_steps: int, peak: float, warmup_frac: float = 0.05) -> float:
    """
    Learning rate at `step` of `total_steps`.

    Ramps linearly from 0 to `peak` over the first round(warmup_frac * total_steps) steps,
    then follows half a cosine from `peak` down to 0 at `total_steps`.
    """
    if total_steps <= 0:
        return 0.0
    step = min(max(step, 0), total_steps)
    warmup = warmup_steps(total_steps, warmup_frac)
    if step < warmup:
        return peak * step / warmup
    if total_steps == warmup:
        return peak
    progress = (step - warmup) / (total_steps - warmup)
    return peak * 0.5 * (1.0 + math.cos(math.pi * progress))
