import numpy as np

from voxrefine.voxio.models import FormatError


def unpack_bits(data: bytes, voxel_count: int) -> np.ndarray:
    """
    Unpack MSB-first bit flags: voxel i is bit (7 - i % 8) of byte i // 8.

    Args:
        data: packed bytes, exactly ceil(voxel_count / 8) of them.
        voxel_count: number of flags to return.
    """
    expected = (voxel_count + 7) // 8
    if len(data) != expected:
        raise FormatError(f"expected {expected} packed bytes for {voxel_count} voxels, got {len(data)}")
    flags = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="big")
    return flags[:voxel_count].astype(bool)


def pack_bits(flags: np.ndarray) -> bytes:
    """Inverse of `unpack_bits`; trailing pad bits are zero."""
    return np.packbits(np.asarray(flags, dtype=bool).reshape(-1), bitorder="big").tobytes()
