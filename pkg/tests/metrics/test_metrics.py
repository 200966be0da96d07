# Tests for confusion matrices, IoU / mIoU scoring and report rendering

import csv
import io

import numpy as np
import pytest

from voxrefine.metrics import (
    ConfusionMatrix,
    MetricsError,
    accumulate,
    completion_iou,
    confusion_of,
    miou,
    render_csv,
    render_text,
    report_table,
)
from voxrefine.voxio import SemGrid


def random_pair(rng, dims=(8, 8, 4), classes=5):
    gt = SemGrid(rng.integers(0, classes, size=dims), rng.random(dims) < 0.7)
    pred = SemGrid(rng.integers(0, classes, size=dims))
    return pred, gt


def voxel_sets(grid: SemGrid, keep: set[int], predicate) -> set[int]:
    flat = grid.labels.reshape(-1)
    return {i for i in keep if predicate(flat[i])}


def brute_force(pred: SemGrid, gt: SemGrid, classes: int):
    keep = set(np.flatnonzero(gt.valid.reshape(-1)).tolist())
    occ_gt = voxel_sets(gt, keep, lambda v: v != 0)
    occ_pred = voxel_sets(pred, keep, lambda v: v != 0)
    union = occ_gt | occ_pred
    iou = len(occ_gt & occ_pred) / len(union) if union else 1.0
    per_class = []
    for c in range(1, classes):
        g = voxel_sets(gt, keep, lambda v: v == c)
        p = voxel_sets(pred, keep, lambda v: v == c)
        per_class.append(len(g & p) / (len(g | p) + 1e-12))
    return iou, per_class


# --- Tests for accumulate ---

def test_identical_grids_give_diagonal_matrix():
    _, gt = random_pair(np.random.default_rng(0))
    cm = confusion_of(gt, gt, 5)
    assert cm.total == int(gt.valid.sum())
    assert np.array_equal(cm.counts, np.diag(np.diag(cm.counts)))


def test_invalid_ground_truth_is_not_counted():
    pred, gt = random_pair(np.random.default_rng(1))
    gt.valid[...] = False
    assert confusion_of(pred, gt, 5).total == 0


def test_accumulate_matches_voxel_tally():
    pred, gt = random_pair(np.random.default_rng(2))
    expected = np.zeros((5, 5), dtype=np.int64)
    for idx in np.ndindex(*gt.dims):
        if gt.valid[idx]:
            expected[gt.labels[idx], pred.labels[idx]] += 1
    assert np.array_equal(confusion_of(pred, gt, 5).counts, expected)


def test_accumulate_is_monotone():
    rng = np.random.default_rng(3)
    cm = ConfusionMatrix(5)
    previous = cm.counts.copy()
    for _ in range(5):
        accumulate(cm, *random_pair(rng))
        assert (cm.counts >= previous).all()
        previous = cm.counts.copy()


def test_accumulate_rejects_mismatched_dims_and_labels():
    rng = np.random.default_rng(4)
    pred, gt = random_pair(rng)
    with pytest.raises(MetricsError):
        confusion_of(SemGrid.empty((2, 2, 2)), gt, 5)
    with pytest.raises(MetricsError):
        confusion_of(pred, gt, 3)


# --- Tests for scores ---

def test_perfect_prediction_scores_one():
    gt = SemGrid(np.arange(8).reshape(2, 2, 2) % 5)
    cm = confusion_of(gt, gt, 5)
    assert completion_iou(cm).iou == 1.0
    assert miou(cm).mean == pytest.approx(1.0)


def test_all_occupied_prediction_over_empty_scene_scores_zero():
    gt = SemGrid.empty((2, 2, 2))
    pred = SemGrid(np.ones((2, 2, 2)))
    assert completion_iou(confusion_of(pred, gt, 5)).iou == 0.0


def test_all_empty_scene_is_degenerate():
    gt = SemGrid.empty((2, 2, 2))
    result = completion_iou(confusion_of(gt, gt, 5))
    assert result.iou == 1.0
    assert result.degenerate


def test_absent_class_pulls_the_mean_down():
    gt = SemGrid(np.array([1, 1, 2, 2, 0, 0, 0, 0]).reshape(2, 2, 2))
    result = miou(confusion_of(gt, gt, 4))
    assert result.per_class == pytest.approx([1.0, 1.0, 0.0])
    assert result.mean == pytest.approx(2 / 3)
    assert result.present == [True, True, False]
    assert result.present_mean == pytest.approx(1.0)


def test_scores_match_set_oracle():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        pred, gt = random_pair(rng)
        cm = confusion_of(pred, gt, 5)
        iou, per_class = brute_force(pred, gt, 5)
        assert completion_iou(cm).iou == pytest.approx(iou, abs=1e-9)
        result = miou(cm)
        assert result.per_class == pytest.approx(per_class, abs=1e-9)
        assert result.mean == pytest.approx(np.mean(per_class), abs=1e-9)
        assert 0.0 <= result.mean <= 1.0


def test_merged_matrices_equal_whole_set_scoring():
    rng = np.random.default_rng(6)
    pairs = [random_pair(rng) for _ in range(4)]
    merged = ConfusionMatrix(5)
    for pred, gt in pairs:
        merged = merged + confusion_of(pred, gt, 5)
    whole_pred = SemGrid(np.concatenate([p.labels for p, _ in pairs]))
    whole_gt = SemGrid(np.concatenate([g.labels for _, g in pairs]), np.concatenate([g.valid for _, g in pairs]))
    whole = confusion_of(whole_pred, whole_gt, 5)
    assert np.array_equal(merged.counts, whole.counts)
    assert miou(merged) == miou(whole)
    assert completion_iou(merged) == completion_iou(whole)


def test_voxel_order_does_not_matter():
    rng = np.random.default_rng(7)
    pred, gt = random_pair(rng)
    perm = rng.permutation(gt.labels.size)

    def shuffled(grid):
        return SemGrid(grid.labels.reshape(-1)[perm].reshape(grid.dims), grid.valid.reshape(-1)[perm].reshape(grid.dims))

    assert np.array_equal(confusion_of(pred, gt, 5).counts, confusion_of(shuffled(pred), shuffled(gt), 5).counts)


# --- Tests for reports ---

def reference_matrix() -> ConfusionMatrix:
    """Every semantic class recovers 1687 of 10000 voxels, the rest predicted empty."""
    cm = ConfusionMatrix(20)
    for c in range(1, 20):
        cm.counts[c, c] = 1687
        cm.counts[c, 0] = 8313
    return cm


def test_reference_point_renders_as_published():
    report = report_table({"08": reference_matrix()})
    assert report.aggregate.miou == pytest.approx(0.1687, abs=1e-9)
    text = render_text(report)
    assert "16.87" in text
    assert "vegetation" in text


def test_single_matrix_report_matches_direct_calls():
    pred, gt = random_pair(np.random.default_rng(8))
    cm = confusion_of(pred, gt, 5)
    report = report_table({"00": cm})
    assert [row.sequence for row in report.rows] == ["00", "all"]
    assert report.rows[0].miou == miou(cm).mean
    assert report.aggregate.iou == completion_iou(cm).iou
    assert report.class_names == ["class1", "class2", "class3", "class4"]


def test_duplicate_matrices_do_not_change_ratios():
    pred, gt = random_pair(np.random.default_rng(9))
    cm = confusion_of(pred, gt, 5)
    report = report_table({"a": cm, "b": cm.copy()})
    assert report.aggregate.miou == pytest.approx(report.rows[0].miou, abs=1e-12)
    assert report.aggregate.iou == pytest.approx(report.rows[0].iou, abs=1e-12)


def test_csv_has_header_and_one_row_per_sequence():
    report = report_table({"08": reference_matrix()})
    rows = list(csv.reader(io.StringIO(render_csv(report))))
    assert rows[0][:5] == ["sequence", "iou", "miou", "miou_present", "car"]
    assert len(rows[0]) == 4 + 19
    assert rows[1][0] == "08"
    assert rows[2][0] == "all"
    assert float(rows[1][2]) == pytest.approx(0.1687, abs=1e-6)
    assert float(rows[1][3]) == pytest.approx(0.1687, abs=1e-6)


def test_csv_present_mean_skips_absent_classes():
    cm = ConfusionMatrix(4)
    cm.counts[1, 1] = 3
    cm.counts[1, 0] = 1
    cm.counts[2, 2] = 5
    rows = list(csv.reader(io.StringIO(render_csv(report_table({"00": cm})))))
    assert rows[0][:4] == ["sequence", "iou", "miou", "miou_present"]
    assert float(rows[1][2]) == pytest.approx((0.75 + 1.0 + 0.0) / 3, abs=1e-6)
    assert float(rows[1][3]) == pytest.approx((0.75 + 1.0) / 2, abs=1e-6)
    assert rows[1][4:] == ["0.750000", "1.000000", "0.000000"]


def test_report_rejects_empty_input_and_wrong_names():
    with pytest.raises(MetricsError):
        report_table({})
    with pytest.raises(MetricsError):
        report_table({"00": ConfusionMatrix(5)}, class_names=["a", "b"])
