"""Volume and mask files: the raw format and DICOM series.

A path that is a directory is treated as a DICOM series, anything else as
a raw file.
"""

from pathlib import Path

from ..errors import FormatError
from ..volume import BinaryMask, ScalarVolume
from .dicom import (
    DicomSeriesRef,
    read_dicom_mask,
    read_dicom_series,
    write_dicom_series,
)
from .raw import read_header, read_raw, write_raw

__all__ = [
    "DicomSeriesRef",
    "load_mask",
    "load_volume",
    "read_dicom_mask",
    "read_dicom_series",
    "read_header",
    "read_raw",
    "write_dicom_series",
    "write_raw",
]


def load_volume(path) -> ScalarVolume:
    path = Path(path)
    if path.is_dir():
        return read_dicom_series(path)
    obj = read_raw(path)
    if not isinstance(obj, ScalarVolume):
        raise FormatError(f"{path} holds a mask, expected a scalar volume")
    return obj


def load_mask(path) -> BinaryMask:
    """Read a mask; raw scalar volumes and DICOM series count non-zero as set."""
    path = Path(path)
    if path.is_dir():
        return read_dicom_mask(path)
    obj = read_raw(path)
    if isinstance(obj, ScalarVolume):
        return BinaryMask(obj.geometry, obj.values != 0)
    return obj
