"""Self-describing little-endian raw volume format.

Layout (all little-endian, no padding)::

    offset  size  field
         0     8  magic  b"PVCRAW\\x00\\x00"
         8     2  version (uint16, currently 1)
        10     1  kind (uint8: 0 scalar volume, 1 binary mask)
        11     1  element type (uint8: 0 int16, 1 float64)
        12    12  dims nx, ny, nz (3 x uint32)
        24    24  spacing (3 x float64, mm)
        48    24  origin (3 x float64, mm)
        72    72  orientation, i/j/k direction vectors (9 x float64)
       144    16  rescale slope, intercept (2 x float64)
       160     4  metadata length n (uint32)
       164     n  metadata, UTF-8 JSON object
     164+n        payload, nx*ny*nz elements, i fastest, then j, then k

int16 payloads hold stored integers with ``HU = slope * stored + intercept``.
float64 payloads hold HU directly; the rescale pair is then carried only so
that a later integer export knows how to quantise. Masks are int16 {0, 1}.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..volume import BinaryMask, GridGeometry, ScalarVolume
from .quantize import to_stored

MAGIC = b"PVCRAW\x00\x00"
VERSION = 1
HEADER = struct.Struct("<8sHBB3I3d3d9d2dI")

KIND_VOLUME, KIND_MASK = 0, 1
ELEMENT_TYPES = {0: np.dtype("<i2"), 1: np.dtype("<f8")}
ELEMENT_CODES = {"int16": 0, "float64": 1}


def _header_bytes(geometry: GridGeometry, kind, element, rescale, metadata) -> bytes:
    meta = json.dumps(dict(metadata), sort_keys=True).encode("utf-8")
    orient = [c for row in geometry.orientation for c in row]
    head = HEADER.pack(
        MAGIC, VERSION, kind, element, *geometry.dims, *geometry.spacing,
        *geometry.origin, *orient, *rescale, len(meta),
    )
    return head + meta


def write_raw(obj, path, element_type: str = "int16") -> None:
    """Write a :class:`ScalarVolume` or :class:`BinaryMask`.

    Volumes written as int16 are quantised with round-half-away-from-zero
    under their rescale pair and clamped to the int16 range.
    """
    if isinstance(obj, BinaryMask):
        kind, element = KIND_MASK, ELEMENT_CODES["int16"]
        rescale, metadata = (1.0, 0.0), {}
        payload = obj.bits.astype("<i2")
    elif isinstance(obj, ScalarVolume):
        if element_type not in ELEMENT_CODES:
            raise ValueError(f"element type must be one of {sorted(ELEMENT_CODES)}")
        kind, element = KIND_VOLUME, ELEMENT_CODES[element_type]
        rescale, metadata = obj.rescale, obj.metadata
        if element_type == "int16":
            payload = to_stored(obj.values, *obj.rescale, np.int16).astype("<i2")
        else:
            payload = obj.values.astype("<f8")
    else:
        raise TypeError(f"cannot write {type(obj).__name__} as a raw volume")
    with open(path, "wb") as fh:
        fh.write(_header_bytes(obj.geometry, kind, element, rescale, metadata))
        fh.write(payload.tobytes(order="F"))


def read_header(data: bytes):
    """Parse the header of a raw file; returns ``(fields, payload_offset)``."""
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise FormatError("not a raw volume file: bad magic", offset=0)
    if len(data) < HEADER.size:
        raise FormatError(
            f"truncated header: need {HEADER.size} bytes, file has {len(data)}",
            offset=len(data),
        )
    f = HEADER.unpack_from(data)
    version, kind, element = f[1], f[2], f[3]
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=8)
    if kind not in (KIND_VOLUME, KIND_MASK):
        raise FormatError(f"unknown volume kind {kind}", offset=10)
    if element not in ELEMENT_TYPES:
        raise FormatError(f"unknown element type {element}", offset=11)
    meta_len = f[-1]
    meta_end = HEADER.size + meta_len
    if len(data) < meta_end:
        raise FormatError(
            f"truncated metadata: need {meta_len} bytes, found {len(data) - HEADER.size}",
            offset=HEADER.size,
        )
    try:
        metadata = json.loads(data[HEADER.size:meta_end].decode("utf-8")) if meta_len else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad metadata block: {exc}", offset=HEADER.size) from None
    fields = {
        "version": version,
        "kind": "mask" if kind == KIND_MASK else "volume",
        "element_type": "int16" if element == 0 else "float64",
        "dims": tuple(f[4:7]),
        "spacing": tuple(f[7:10]),
        "origin": tuple(f[10:13]),
        "orientation": (tuple(f[13:16]), tuple(f[16:19]), tuple(f[19:22])),
        "rescale": (f[22], f[23]),
        "metadata": metadata,
    }
    return fields, meta_end


def read_raw(path):
    """Read a raw file, returning a :class:`ScalarVolume` or :class:`BinaryMask`.

    Raises:
        FormatError: bad magic or version, or a payload size that does not
            match the header.
    """
    data = Path(path).read_bytes()
    h, offset = read_header(data)
    dims = h["dims"]
    if min(dims) < 1:
        raise FormatError(f"invalid dims {dims}", offset=12)
    geometry = GridGeometry(dims, h["spacing"], h["origin"], h["orientation"])
    dtype = ELEMENT_TYPES[0 if h["element_type"] == "int16" else 1]
    expected = geometry.size * dtype.itemsize
    actual = len(data) - offset
    if actual != expected:
        raise FormatError(
            f"payload size mismatch: expected {expected} bytes for dims {dims}, "
            f"found {actual}",
            offset=offset,
        )
    stored = np.frombuffer(data, dtype=dtype, offset=offset).reshape(dims, order="F")
    if h["kind"] == "mask":
        return BinaryMask(geometry, stored != 0)
    if h["element_type"] == "int16":
        slope, intercept = h["rescale"]
        return ScalarVolume.from_stored(geometry, stored, slope, intercept, h["metadata"])
    return ScalarVolume(geometry, stored, h["rescale"], h["metadata"])
