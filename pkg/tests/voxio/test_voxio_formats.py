# Tests for voxel file formats, bit packing and multi-scale targets

import numpy as np
import pytest

from voxrefine.voxio import (
    SEMKITTI_DIMS,
    FormatError,
    LabelRemap,
    LabelRemapError,
    SemGrid,
    TextEmbedding,
    VoxIOError,
    crop_grid,
    downsample_labels_majority,
    load_grid,
    load_remap,
    load_scene,
    pack_bits,
    pad_grid,
    read_grid_simple,
    read_semkitti_files,
    read_semkitti_voxels,
    read_text_embedding,
    save_grid,
    scene_files,
    unpack_bits,
    write_grid_simple,
    write_semkitti_voxels,
    write_text_embedding,
)

VOXELS = SEMKITTI_DIMS[0] * SEMKITTI_DIMS[1] * SEMKITTI_DIMS[2]


def random_grid(rng, dims, classes=5, valid_prob=0.8):
    return SemGrid(rng.integers(0, classes, size=dims), rng.random(dims) < valid_prob)


# --- Tests for bit packing ---

def test_unpack_bits_is_msb_first():
    assert unpack_bits(b"\x80", 8).tolist() == [True] + [False] * 7
    assert unpack_bits(b"\x01", 8).tolist() == [False] * 7 + [True]


def test_pack_bits_fixtures():
    assert pack_bits(np.ones(8, dtype=bool)) == b"\xff"
    assert pack_bits(np.zeros(8, dtype=bool)) == b"\x00"
    assert pack_bits(np.array([True, False, True])) == b"\xa0"


def test_unpack_bits_rejects_wrong_length():
    with pytest.raises(FormatError):
        unpack_bits(b"\x00\x00", 8)


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(50):
        data = rng.integers(0, 256, size=32768, dtype=np.uint8).tobytes()
        assert pack_bits(unpack_bits(data, len(data) * 8)) == data


# --- Tests for SemanticKITTI buffers ---

def test_all_zero_buffers_read_as_valid_empty_grid():
    grid = read_semkitti_voxels(bytes(2 * VOXELS), bytes(VOXELS // 8), LabelRemap.identity(19))
    assert grid.dims == SEMKITTI_DIMS
    assert grid.max_label == 0
    assert grid.valid.all()


def test_all_set_invalid_mask_marks_everything_unknown():
    grid = read_semkitti_voxels(bytes(2 * VOXELS), b"\xff" * (VOXELS // 8), LabelRemap.identity(19))
    assert not grid.valid.any()


def test_write_single_voxel_is_little_endian():
    grid = SemGrid.empty(SEMKITTI_DIMS)
    grid.labels[0, 0, 0] = 5
    label_bytes, invalid_bytes = write_semkitti_voxels(grid)
    assert label_bytes[:2] == b"\x05\x00"
    assert len(label_bytes) == 4_194_304
    assert invalid_bytes == bytes(262_144)


def test_semkitti_round_trip_is_byte_identical():
    rng = np.random.default_rng(1)
    remap = LabelRemap.identity(19)
    for _ in range(3):
        grid = random_grid(rng, SEMKITTI_DIMS, classes=20)
        label_bytes, invalid_bytes = write_semkitti_voxels(grid)
        back = read_semkitti_voxels(label_bytes, invalid_bytes, remap)
        assert back == grid
        assert write_semkitti_voxels(back) == (label_bytes, invalid_bytes)


def test_unmapped_raw_label_is_named():
    label_bytes = bytearray(2 * VOXELS)
    label_bytes[0:2] = (252).to_bytes(2, "little")
    with pytest.raises(LabelRemapError, match="252"):
        read_semkitti_voxels(bytes(label_bytes), bytes(VOXELS // 8), LabelRemap.identity(19))


def test_remap_applies_learning_map():
    label_bytes = bytearray(2 * VOXELS)
    label_bytes[0:2] = (10).to_bytes(2, "little")
    remap = LabelRemap(learning_map={0: 0, 10: 1})
    grid = read_semkitti_voxels(bytes(label_bytes), bytes(VOXELS // 8), remap)
    assert grid.labels[0, 0, 0] == 1
    assert grid.labels.sum() == 1


def test_semkitti_rejects_wrong_sizes():
    with pytest.raises(FormatError):
        read_semkitti_voxels(b"\x00" * 10, bytes(VOXELS // 8), LabelRemap.identity(19))
    with pytest.raises(FormatError):
        write_semkitti_voxels(SemGrid.empty((4, 4, 4)))


def test_load_remap_reads_json(tmp_path):
    path = tmp_path / "remap.json"
    path.write_text('{"learning_map": {"0": 0, "10": 1, "40": 9}}')
    remap = load_remap(path)
    assert remap.learning_map == {0: 0, 10: 1, 40: 9}


REMAP_YAML = """\
labels:
  0: "unlabeled"
  10: "car"
  40: "road"
color_map:
  0: [0, 0, 0]
  10: [245, 150, 100]
learning_map:
  0: 0
  10: 1
  40: 9
learning_map_inv:
  0: 0
  1: 10
  9: 40
"""


def raw_scene(rng) -> SemGrid:
    """Full-size grid of raw benchmark ids 0, 10 and 40."""
    raw = rng.choice(np.array([0, 10, 40]), size=SEMKITTI_DIMS)
    return SemGrid(raw, rng.random(SEMKITTI_DIMS) < 0.9)


def write_scene(directory, stem, grid, with_mask=True):
    label_bytes, invalid_bytes = write_semkitti_voxels(grid)
    (directory / f"{stem}.label").write_bytes(label_bytes)
    if with_mask:
        (directory / f"{stem}.invalid").write_bytes(invalid_bytes)
    return directory / f"{stem}.label"


def test_load_remap_reads_benchmark_yaml(tmp_path):
    path = tmp_path / "semantic-kitti.yaml"
    path.write_text(REMAP_YAML)
    assert load_remap(path).learning_map == {0: 0, 10: 1, 40: 9}


def test_load_remap_yaml_without_learning_map(tmp_path):
    path = tmp_path / "broken.yml"
    path.write_text("labels:\n  0: unlabeled\n")
    with pytest.raises(LabelRemapError, match="learning_map"):
        load_remap(path)
    path.write_text("learning_map: [unbalanced\n")
    with pytest.raises(LabelRemapError):
        load_remap(path)


def test_semkitti_files_round_trip_through_remap(tmp_path):
    (tmp_path / "remap.yaml").write_text(REMAP_YAML)
    remap = load_remap(tmp_path / "remap.yaml")
    raw = raw_scene(np.random.default_rng(3))
    label_path = write_scene(tmp_path, "000000", raw)

    grid = read_semkitti_files(label_path, tmp_path / "000000.invalid", remap)
    expected = np.select([raw.labels == 10, raw.labels == 40], [1, 9], 0)
    assert np.array_equal(grid.labels, expected)
    assert np.array_equal(grid.valid, raw.valid)
    assert load_scene(label_path, "semkitti", remap, require_mask=True) == grid


def test_prediction_files_without_mask_are_fully_known(tmp_path):
    remap = LabelRemap(learning_map={0: 0, 10: 1, 40: 9})
    label_path = write_scene(tmp_path, "000005", raw_scene(np.random.default_rng(4)), with_mask=False)
    assert read_semkitti_files(label_path, None, remap).valid.all()
    assert load_scene(label_path, "semkitti", remap).valid.all()
    with pytest.raises(VoxIOError, match="000005.invalid"):
        load_scene(label_path, "semkitti", remap, require_mask=True)


def test_load_scene_dispatch_errors(tmp_path):
    grid = random_grid(np.random.default_rng(5), (4, 4, 2))
    save_grid(tmp_path / "a.grid", grid, 4)
    assert load_scene(tmp_path / "a.grid") == grid
    with pytest.raises(VoxIOError, match="remap"):
        load_scene(tmp_path / "a.label", "semkitti")
    with pytest.raises(VoxIOError, match="unknown grid format"):
        load_scene(tmp_path / "a.grid", "ply")


def test_scene_files_keys(tmp_path):
    for name in ("000000.label", "000000.invalid", "000001.label", ".hidden"):
        (tmp_path / name).write_bytes(b"")
    assert list(scene_files(tmp_path, "semkitti")) == ["000000", "000001"]
    assert list(scene_files(tmp_path)) == ["000000.invalid", "000000.label", "000001.label"]
    with pytest.raises(VoxIOError):
        scene_files(tmp_path / "missing")


# --- Tests for simple grid files ---

def test_single_voxel_grid_payload():
    data = write_grid_simple(SemGrid.empty((1, 1, 1)), max_class=19)
    grid, max_class = read_grid_simple(data)
    assert max_class == 19
    assert data[28:30] == b"\x00\x00"
    assert data[30:] == b"\x80"
    assert grid == SemGrid.empty((1, 1, 1))


def test_simple_grid_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    for i in range(20):
        grid = random_grid(rng, (8, 8, 4))
        data = write_grid_simple(grid, max_class=4)
        back, _ = read_grid_simple(data)
        assert back == grid
        assert write_grid_simple(back, max_class=4) == data
    save_grid(tmp_path / "g.grid", grid, 4)
    assert load_grid(tmp_path / "g.grid") == (grid, 4)


def test_simple_grid_rejects_small_class_field():
    grid = SemGrid(np.full((2, 2, 2), 7))
    with pytest.raises(FormatError):
        write_grid_simple(grid, max_class=6)


def test_simple_grid_rejects_bad_magic_and_truncation():
    data = write_grid_simple(SemGrid.empty((2, 2, 2)), max_class=3)
    with pytest.raises(FormatError, match="magic"):
        read_grid_simple(b"NOTAGRID" + data[8:])
    with pytest.raises(FormatError):
        read_grid_simple(data[:-1])


# --- Tests for text embeddings ---

def test_minimal_zero_embedding():
    text = TextEmbedding(np.zeros(2), np.zeros((1, 2)))
    back = read_text_embedding(write_text_embedding(text))
    assert back.global_dim == 2
    assert back.tokens.shape == (1, 2)
    assert not back.global_vector.any()


def test_query_token_shape_parses():
    rng = np.random.default_rng(3)
    text = TextEmbedding(rng.normal(size=768), rng.normal(size=(77, 256)))
    back = read_text_embedding(write_text_embedding(text))
    assert back.tokens.shape == (77, 256)
    np.testing.assert_array_equal(back.tokens, text.tokens)
    np.testing.assert_array_equal(back.global_vector, text.global_vector)


def test_text_embedding_rejects_truncation_and_version():
    data = write_text_embedding(TextEmbedding(np.ones(2), np.ones((1, 2))))
    with pytest.raises(FormatError, match="truncated"):
        read_text_embedding(data[:-8])
    bumped = data[:8] + (2).to_bytes(4, "little") + data[12:]
    with pytest.raises(FormatError, match="version"):
        read_text_embedding(bumped)


def test_text_embedding_rejects_non_finite():
    with pytest.raises(VoxIOError):
        TextEmbedding(np.array([np.nan]), np.ones((1, 1)))


# --- Tests for multi-scale targets ---

def test_uniform_block_keeps_its_class():
    grid = SemGrid(np.full((2, 2, 2), 3))
    out = downsample_labels_majority(grid, 2)
    assert out.labels.tolist() == [[[3]]]
    assert out.valid.all()


def test_empty_valid_block_stays_empty_and_valid():
    out = downsample_labels_majority(SemGrid.empty((2, 2, 2)), 2)
    assert out.labels[0, 0, 0] == 0
    assert out.valid[0, 0, 0]


def test_nonempty_minority_beats_empty_majority():
    labels = np.zeros((2, 2, 2), dtype=int)
    labels[0, 0, 0] = 4
    out = downsample_labels_majority(SemGrid(labels), 2)
    assert out.labels[0, 0, 0] == 4


def test_tie_goes_to_smaller_class():
    labels = np.array([2, 2, 5, 5, 0, 0, 0, 0]).reshape(2, 2, 2)
    out = downsample_labels_majority(SemGrid(labels), 2)
    assert out.labels[0, 0, 0] == 2


def test_invalid_children_do_not_vote():
    labels = np.array([1, 3, 3, 3, 0, 0, 0, 0]).reshape(2, 2, 2)
    valid = np.array([True, False, False, False, True, True, True, True]).reshape(2, 2, 2)
    out = downsample_labels_majority(SemGrid(labels, valid), 2)
    assert out.labels[0, 0, 0] == 1


def test_all_invalid_block_stays_invalid():
    out = downsample_labels_majority(SemGrid(np.ones((2, 2, 2)), np.zeros((2, 2, 2), dtype=bool)), 2)
    assert not out.valid[0, 0, 0]


def test_majority_matches_block_tally():
    rng = np.random.default_rng(4)
    for _ in range(50):
        grid = random_grid(rng, (4, 4, 4), valid_prob=0.6)
        out = downsample_labels_majority(grid, 2)
        for bx in range(2):
            for by in range(2):
                for bz in range(2):
                    block = (slice(2 * bx, 2 * bx + 2), slice(2 * by, 2 * by + 2), slice(2 * bz, 2 * bz + 2))
                    labels = grid.labels[block].reshape(-1)
                    valid = grid.valid[block].reshape(-1)
                    votes = labels[valid & (labels != 0)]
                    expected = int(np.bincount(votes).argmax()) if votes.size else 0
                    assert out.labels[bx, by, bz] == expected
                    assert out.valid[bx, by, bz] == valid.any()


def test_downsample_rejects_non_divisible_dims():
    with pytest.raises(VoxIOError):
        downsample_labels_majority(SemGrid.empty((4, 4, 6)), 4)


def test_pad_then_crop_restores_grid():
    grid = random_grid(np.random.default_rng(5), (5, 16, 3))
    padded = pad_grid(grid, 16)
    assert padded.dims == (16, 16, 16)
    assert not padded.valid[5:].any()
    assert crop_grid(padded, grid.dims) == grid
