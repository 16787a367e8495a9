"""Voxel grid data model: geometry, scalar volumes and binary masks.

Arrays are indexed ``[i, j, k]`` with shape ``(nx, ny, nz)``. All distances
are in world units (mm) and use the voxel spacing only; the grid orientation
is carried along as metadata since an orthonormal rotation does not change
Euclidean distances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Tuple

import numpy as np

from .errors import AlignmentError, BoundsError, GeometryError

Triple = Tuple[float, float, float]
VoxelIndex = Tuple[int, int, int]

IDENTITY_ORIENTATION = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))

SPACING_TOL = 1e-6
ORIGIN_TOL = 1e-3
ORTHO_TOL = 1e-9

# Lexicographic (di, dj, dk) order; every accumulation over a neighbourhood
# walks the offsets in this order so results are reproducible bit for bit.
NEIGHBOR_OFFSETS: Tuple[VoxelIndex, ...] = tuple(
    off for off in itertools.product((-1, 0, 1), repeat=3) if off != (0, 0, 0)
)

FACE_OFFSETS: Tuple[VoxelIndex, ...] = (
    (-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1),
)


@dataclass(frozen=True)
class GridGeometry:
    """Shape and placement of a voxel grid.

    Attributes:
        dims: number of voxels along i, j, k.
        spacing: voxel size in mm along i, j, k.
        origin: world position (mm) of the centre of voxel (0, 0, 0).
        orientation: unit direction vectors of the i, j and k axes.
    """

    dims: Tuple[int, int, int]
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)
    orientation: Tuple[Triple, Triple, Triple] = IDENTITY_ORIENTATION

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        orientation = tuple(tuple(float(c) for c in row) for row in self.orientation)
        if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise GeometryError("dims, spacing and origin must be triples")
        if any(d < 1 for d in dims):
            raise GeometryError(f"all dims must be >= 1, got {dims}")
        if not all(s > 0 and math.isfinite(s) for s in spacing):
            raise GeometryError(f"spacing must be positive, got {spacing}")
        if len(orientation) != 3 or any(len(r) != 3 for r in orientation):
            raise GeometryError("orientation must be three direction triples")
        gram = np.asarray(orientation) @ np.asarray(orientation).T
        if not np.allclose(gram, np.eye(3), rtol=0.0, atol=ORTHO_TOL):
            raise GeometryError("orientation vectors must be orthonormal")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "orientation", orientation)

    @property
    def size(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def contains(self, index) -> bool:
        return len(index) == 3 and all(0 <= int(c) < d for c, d in zip(index, self.dims))

    def check_index(self, index) -> VoxelIndex:
        if not self.contains(index):
            raise BoundsError(f"voxel index {tuple(index)} outside grid {self.dims}")
        return tuple(int(c) for c in index)

    def world_position(self, index) -> np.ndarray:
        """World coordinates (mm) of a voxel centre."""
        ijk = np.asarray(index, dtype=float) * np.asarray(self.spacing)
        return np.asarray(self.origin) + ijk @ np.asarray(self.orientation)

    def matches(self, other: GridGeometry) -> bool:
        """True when ``other`` describes the same grid within tolerance."""
        return (
            self.dims == other.dims
            and all(abs(a - b) <= SPACING_TOL for a, b in zip(self.spacing, other.spacing))
            and all(abs(a - b) <= ORIGIN_TOL for a, b in zip(self.origin, other.origin))
        )

    def require_match(self, other: GridGeometry, what: str = "grids") -> None:
        if not self.matches(other):
            raise AlignmentError(
                f"{what} are not aligned: dims {self.dims} vs {other.dims}, "
                f"spacing {self.spacing} vs {other.spacing}, "
                f"origin {self.origin} vs {other.origin}"
            )


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ScalarVolume:
    """A grid of HU values.

    ``rescale`` is the ``(slope, intercept)`` pair mapping stored integers to
    HU; it is applied when reading and inverted when writing integer files.
    ``metadata`` carries arbitrary provenance through processing untouched.
    """

    geometry: GridGeometry
    values: np.ndarray
    rescale: Tuple[float, float] = (1.0, 0.0)
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.flags.writeable:
            # read-only arrays are adopted as-is; anything mutable is copied
            values = values.copy()
        if values.shape != self.geometry.dims:
            raise GeometryError(
                f"values shape {values.shape} does not match dims {self.geometry.dims}"
            )
        slope, intercept = (float(v) for v in self.rescale)
        if slope == 0:
            raise GeometryError("rescale slope must be non-zero")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "rescale", (slope, intercept))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @classmethod
    def from_stored(cls, geometry, stored, slope=1.0, intercept=0.0, metadata=None):
        """Build a volume from stored integers using ``HU = slope * stored + intercept``."""
        hu = float(slope) * np.asarray(stored, dtype=np.float64) + float(intercept)
        return cls(geometry, hu, (slope, intercept), metadata or {})

    def with_values(self, values: np.ndarray) -> ScalarVolume:
        """Copy of this volume with new values and the same geometry and metadata."""
        return ScalarVolume(self.geometry, values, self.rescale, self.metadata)

    def __getitem__(self, index) -> float:
        return float(self.values[self.geometry.check_index(index)])


@dataclass(frozen=True)
class BinaryMask:
    """Boolean voxel grid marking a segmented structure."""

    geometry: GridGeometry
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.dtype != bool:
            bits = bits != 0
        elif bits.flags.writeable:
            bits = bits.copy()
        if bits.shape != self.geometry.dims:
            raise GeometryError(
                f"mask shape {bits.shape} does not match dims {self.geometry.dims}"
            )
        object.__setattr__(self, "bits", _frozen(bits))

    @classmethod
    def empty(cls, geometry: GridGeometry) -> BinaryMask:
        return cls(geometry, np.zeros(geometry.dims, dtype=bool))

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __contains__(self, index) -> bool:
        return self.geometry.contains(index) and bool(self.bits[tuple(index)])

    def require_aligned(self, volume: ScalarVolume) -> None:
        volume.geometry.require_match(self.geometry, "mask and volume")


def world_distance(a, b, geometry: GridGeometry) -> float:
    """Euclidean distance in mm between the centres of voxels ``a`` and ``b``."""
    a = geometry.check_index(a)
    b = geometry.check_index(b)
    return math.sqrt(squared_offset_length(
        (b[0] - a[0], b[1] - a[1], b[2] - a[2]), geometry.spacing
    ))


def squared_offset_length(offset, spacing) -> float:
    """Squared world length of an index offset, summed in i, j, k order."""
    di, dj, dk = offset
    sx, sy, sz = spacing
    return (di * sx) ** 2 + (dj * sy) ** 2 + (dk * sz) ** 2


def neighborhood26(x, geometry: GridGeometry) -> list:
    """In-bounds voxels sharing a face, edge or corner with ``x``.

    The centre voxel itself is excluded. Neighbours are listed in
    lexicographic offset order.
    """
    i, j, k = geometry.check_index(x)
    out = []
    for di, dj, dk in NEIGHBOR_OFFSETS:
        n = (i + di, j + dj, k + dk)
        if geometry.contains(n):
            out.append(n)
    return out
