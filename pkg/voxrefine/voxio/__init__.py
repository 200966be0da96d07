from voxrefine.voxio.bits import pack_bits, unpack_bits
from voxrefine.voxio.formats import (
    load_grid,
    load_text,
    read_grid_simple,
    read_text_embedding,
    save_grid,
    save_text,
    write_grid_simple,
    write_text_embedding,
)
from voxrefine.voxio.models import (
    SEMKITTI_DIMS,
    FormatError,
    LabelRemap,
    LabelRemapError,
    SemGrid,
    TextEmbedding,
    VoxIOError,
)
from voxrefine.voxio.multiscale import crop_grid, downsample_labels_majority, pad_grid
from voxrefine.voxio.scenes import GRID_FORMATS, GridFormat, load_scene, scene_files
from voxrefine.voxio.semkitti import (
    load_remap,
    read_semkitti_files,
    read_semkitti_voxels,
    write_semkitti_voxels,
)

__all__ = [
    'GRID_FORMATS',
    'SEMKITTI_DIMS',
    'FormatError',
    'GridFormat',
    'LabelRemap',
    'LabelRemapError',
    'SemGrid',
    'TextEmbedding',
    'VoxIOError',
    'crop_grid',
    'downsample_labels_majority',
    'load_grid',
    'load_remap',
    'load_scene',
    'load_text',
    'pack_bits',
    'pad_grid',
    'read_grid_simple',
    'read_semkitti_files',
    'read_semkitti_voxels',
    'read_text_embedding',
    'save_grid',
    'save_text',
    'scene_files',
    'unpack_bits',
    'write_grid_simple',
    'write_semkitti_voxels',
    'write_text_embedding',
]
