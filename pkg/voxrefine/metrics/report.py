"""
Tabular reporting of per-sequence and aggregate scores.
"""

from __future__ import annotations

import csv
import io
from functools import reduce
from operator import add
from typing import Mapping, Optional, Sequence

from rich.console import Console
from rich.table import Table

from voxrefine.metrics.models import SEMKITTI_CLASSES, ConfusionMatrix, MetricsError, MetricsReport, SceneMetrics
from voxrefine.metrics.scores import completion_iou, miou

AGGREGATE_ROW = "all"


def score(sequence: str, cm: ConfusionMatrix) -> SceneMetrics:
    completion = completion_iou(cm)
    semantic = miou(cm)
    return SceneMetrics(
        sequence=sequence,
        iou=completion.iou,
        miou=semantic.mean,
        miou_present=semantic.present_mean,
        per_class=semantic.per_class,
        degenerate=completion.degenerate,
    )


def default_class_names(num_classes: int) -> list[str]:
    if num_classes == len(SEMKITTI_CLASSES):
        return list(SEMKITTI_CLASSES[1:])
    return [f"class{c}" for c in range(1, num_classes)]


def report_table(
    per_sequence: Mapping[str, ConfusionMatrix],
    class_names: Optional[Sequence[str]] = None,
) -> MetricsReport:
    """Score each sequence, then the micro-averaged sum of all matrices as the last row."""
    if not per_sequence:
        raise MetricsError("no confusion matrices to report")
    matrices = list(per_sequence.values())
    num_classes = matrices[0].num_classes
    names = list(class_names) if class_names is not None else default_class_names(num_classes)
    if len(names) != num_classes - 1:
        raise MetricsError(f"{len(names)} class names for {num_classes - 1} semantic classes")
    rows = [score(sequence, cm) for sequence, cm in per_sequence.items()]
    rows.append(score(AGGREGATE_ROW, reduce(add, matrices)))
    return MetricsReport(rows=rows, class_names=names)


def render_text(report: MetricsReport, width: int = 320) -> str:
    """Percentages with two decimals, one row per sequence; `width` must fit every column unwrapped."""
    table = Table(title="Semantic scene completion")
    for column in ("sequence", "IoU", "mIoU", "mIoU (present)", *report.class_names):
        table.add_column(column, justify="left" if column == "sequence" else "right")
    for row in report.rows:
        table.add_row(
            row.sequence,
            f"{100 * row.iou:.2f}",
            f"{100 * row.miou:.2f}",
            f"{100 * row.miou_present:.2f}",
            *(f"{100 * value:.2f}" for value in row.per_class),
        )
    console = Console(file=io.StringIO(), width=width, color_system=None)
    console.print(table)
    return console.file.getvalue()


def render_csv(report: MetricsReport) -> str:
    """Header: sequence, iou, miou, miou_present, then one column per semantic class; values as fractions."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["sequence", "iou", "miou", "miou_present", *report.class_names])
    for row in report.rows:
        writer.writerow([
            row.sequence,
            f"{row.iou:.6f}",
            f"{row.miou:.6f}",
            f"{row.miou_present:.6f}",
            *(f"{v:.6f}" for v in row.per_class),
        ])
    return buffer.getvalue()
