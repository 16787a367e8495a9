"""Split a segmentation into interior and surface voxels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .volume import BinaryMask


def erode_bits(bits: np.ndarray) -> np.ndarray:
    """Erode a 3D boolean array with the 6-connected (face) structuring element.

    A voxel survives iff it and all six face neighbours are set. Anything
    outside the array counts as background, so set voxels on the array
    border never survive.
    """
    bits = np.asarray(bits, dtype=bool)
    if bits.ndim != 3:
        raise ContractError(f"expected a 3D array, got shape {bits.shape}")
    out = bits.copy()
    for axis in range(3):
        n = bits.shape[axis]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        # neighbour at +1 and at -1 along this axis
        out[tuple(lo)] &= bits[tuple(hi)]
        out[tuple(hi)] &= bits[tuple(lo)]
        edge = [slice(None)] * 3
        edge[axis] = 0
        out[tuple(edge)] = False
        edge[axis] = n - 1
        out[tuple(edge)] = False
    return out


def erode_face_connected(mask: BinaryMask) -> BinaryMask:
    """Face-connected binary erosion of ``mask`` (see :func:`erode_bits`)."""
    return BinaryMask(mask.geometry, erode_bits(mask.bits))


@dataclass(frozen=True)
class VoxelPartition:
    """Disjoint split of a segmentation into interior and surface voxels.

    ``interior`` survives face-connected erosion; ``surface`` is the rest of
    ``source``.
    """

    interior: BinaryMask
    surface: BinaryMask
    source: BinaryMask

    def __post_init__(self):
        src = self.source.bits
        if np.any(self.interior.bits & self.surface.bits):
            raise ContractError("interior and surface overlap")
        if not np.array_equal(self.interior.bits | self.surface.bits, src):
            raise ContractError("interior and surface do not cover the source mask")

    @property
    def geometry(self):
        return self.source.geometry


def partition(mask: BinaryMask) -> VoxelPartition:
    """Partition ``mask`` into its eroded interior and the remaining surface shell."""
    interior = erode_bits(mask.bits)
    surface = mask.bits & ~interior
    return VoxelPartition(
        BinaryMask(mask.geometry, interior), BinaryMask(mask.geometry, surface), mask
    )
