"""
Format-independent access to scene grids on disk.
"""

from pathlib import Path
from typing import Literal, Optional, Union

from voxrefine.voxio.formats import load_grid
from voxrefine.voxio.models import LabelRemap, SemGrid, VoxIOError
from voxrefine.voxio.semkitti import read_semkitti_files

GridFormat = Literal["grid", "semkitti"]
GRID_FORMATS = ("grid", "semkitti")


def load_scene(
    path: Union[str, Path],
    grid_format: str = "grid",
    remap: Optional[LabelRemap] = None,
    require_mask: bool = False,
) -> SemGrid:
    """
    Read one scene grid.

    SemanticKITTI scenes are `.label` files whose unknown-space mask sits next to them as
    `.invalid`; with `require_mask` a missing mask is an error, otherwise every voxel is known.
    """
    path = Path(path)
    if grid_format == "grid":
        return load_grid(path)[0]
    if grid_format != "semkitti":
        raise VoxIOError(f"unknown grid format {grid_format!r}, choose from {list(GRID_FORMATS)}")
    if remap is None:
        raise VoxIOError("SemanticKITTI scenes need a label remap")
    invalid = path.with_suffix(".invalid")
    if not invalid.exists():
        if require_mask:
            raise VoxIOError(f"{path.name} has no {invalid.name} next to it")
        invalid = None
    return read_semkitti_files(path, invalid, remap)


def scene_files(directory: Union[str, Path], grid_format: str = "grid") -> dict[str, Path]:
    """Scene files of a directory keyed by name: file names for grids, `.label` stems for SemanticKITTI."""
    directory = Path(directory)
    if not directory.is_dir():
        raise VoxIOError(f"{directory} is not a directory")
    files = [path for path in sorted(directory.iterdir()) if path.is_file() and not path.name.startswith(".")]
    if grid_format == "semkitti":
        return {path.stem: path for path in files if path.suffix == ".label"}
    return {path.name: path for path in files}
