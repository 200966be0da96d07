from voxrefine.metrics.models import (
    SEMKITTI_CLASSES,
    CompletionIoU,
    ConfusionMatrix,
    MetricsError,
    MetricsReport,
    SceneMetrics,
    SemanticIoU,
)
from voxrefine.metrics.report import render_csv, render_text, report_table, score
from voxrefine.metrics.scores import accumulate, completion_iou, confusion_of, miou

__all__ = [
    'SEMKITTI_CLASSES',
    'CompletionIoU',
    'ConfusionMatrix',
    'MetricsError',
    'MetricsReport',
    'SceneMetrics',
    'SemanticIoU',
    'accumulate',
    'completion_iou',
    'confusion_of',
    'miou',
    'render_csv',
    'render_text',
    'report_table',
    'score',
]
