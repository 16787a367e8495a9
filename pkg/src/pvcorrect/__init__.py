"""Partial volume correction of cortical bone boundaries in CT volumes."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AlignmentError,
    BoundsError,
    ContractError,
    DomainError,
    FormatError,
    GeometryError,
    MissingTagError,
    PvcError,
)
from .morphology import VoxelPartition, erode_face_connected, partition  # noqa: E402
from .pvc import CorrectionReport, PvcParams, correct, idw_estimate, idw_weights  # noqa: E402
from .volume import (  # noqa: E402
    BinaryMask,
    GridGeometry,
    ScalarVolume,
    neighborhood26,
    world_distance,
)
