"""Minimal DICOM series import/export for single-frame, uncompressed CT.

Only the tags needed to place pixels in space and convert them to HU are
required; everything else in the template series is copied verbatim on
export. Slices are ordered by projecting ``ImagePositionPatient`` onto the
slice normal, never by file name or instance number.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pydicom
from pydicom.errors import InvalidDicomError
from pydicom.uid import generate_uid

from ..errors import FormatError, GeometryError, MissingTagError
from ..volume import ORTHO_TOL, SPACING_TOL, BinaryMask, GridGeometry, ScalarVolume
from .quantize import round_half_away, stored_range

REQUIRED_TAGS = (
    "Rows",
    "Columns",
    "PixelSpacing",
    "ImagePositionPatient",
    "ImageOrientationPatient",
    "RescaleSlope",
    "RescaleIntercept",
)
SLICE_SPACING_TOL = 1e-3  # mm
DERIVATION_NOTE = "Partial volume correction of cortical bone surface voxels"
UID_SALT = "pvcorrect"


@dataclass
class DicomSlice:
    path: Path
    position: np.ndarray
    offset: float  # position projected onto the slice normal
    slope: float
    intercept: float
    sop_instance_uid: str


@dataclass
class DicomSeriesRef:
    """A sorted, geometry-checked DICOM series on disk.

    Use :meth:`scan` to build one from a directory.
    """

    directory: Path
    slices: List[DicomSlice]
    rows: int
    columns: int
    pixel_spacing: Tuple[float, float]  # (between rows, between columns)
    orientation: Tuple[Tuple[float, float, float], ...]  # row dir, column dir, normal
    slice_spacing: float
    series_instance_uid: Optional[str] = None

    @classmethod
    def scan(cls, directory) -> DicomSeriesRef:
        directory = Path(directory)
        if not directory.is_dir():
            raise FormatError(f"{directory} is not a directory")
        headers = []
        for path in sorted(p for p in directory.iterdir() if p.is_file()):
            try:
                ds = pydicom.dcmread(path, stop_before_pixels=True)
            except (InvalidDicomError, EOFError, OSError):
                continue
            if "PixelSpacing" not in ds and "Rows" not in ds:
                continue  # DICOMDIR and other non-image objects
            for tag in REQUIRED_TAGS:
                if tag not in ds or ds.data_element(tag).value in (None, ""):
                    raise MissingTagError(tag, path)
            headers.append((path, ds))
        if not headers:
            raise FormatError(f"no DICOM image files in {directory}")

        _, first = headers[0]
        rows, cols = int(first.Rows), int(first.Columns)
        spacing = tuple(float(v) for v in first.PixelSpacing)
        iop = [float(v) for v in first.ImageOrientationPatient]
        row_dir, col_dir = np.array(iop[:3]), np.array(iop[3:])
        normal = np.cross(row_dir, col_dir)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-6 or abs(row_dir @ col_dir) > 1e-6:
            raise GeometryError(f"non-orthonormal ImageOrientationPatient {iop}")

        slices = []
        for path, ds in headers:
            if (int(ds.Rows), int(ds.Columns)) != (rows, cols):
                raise GeometryError(f"{path.name}: matrix size differs from the series")
            ps = tuple(float(v) for v in ds.PixelSpacing)
            if any(abs(a - b) > SPACING_TOL for a, b in zip(ps, spacing)):
                raise GeometryError(f"{path.name}: pixel spacing {ps} differs from {spacing}")
            if not np.allclose([float(v) for v in ds.ImageOrientationPatient], iop, atol=1e-6):
                raise GeometryError(f"{path.name}: orientation differs from the series")
            pos = np.array([float(v) for v in ds.ImagePositionPatient])
            slices.append(DicomSlice(
                path, pos, float(pos @ normal), float(ds.RescaleSlope),
                float(ds.RescaleIntercept), str(ds.get("SOPInstanceUID", "")),
            ))
        slices.sort(key=lambda s: s.offset)

        if len(slices) > 1:
            steps = np.diff([s.offset for s in slices])
            slice_spacing = float(steps.mean())
            if slice_spacing <= 0 or np.any(np.abs(steps - slice_spacing) > SLICE_SPACING_TOL):
                raise GeometryError(
                    f"non-uniform slice spacing in {directory}: steps range "
                    f"{steps.min():.6f}..{steps.max():.6f} mm"
                )
        else:
            slice_spacing = float(first.get("SliceThickness", 1.0) or 1.0)

        return cls(
            directory, slices, rows, cols, spacing,
            (tuple(row_dir), tuple(col_dir), tuple(normal)), slice_spacing,
            str(first.get("SeriesInstanceUID", "")) or None,
        )

    @property
    def geometry(self) -> GridGeometry:
        """Grid with i along rows (columns index), j down columns, k along the normal."""
        orient = self.orientation
        gram = np.asarray(orient) @ np.asarray(orient).T
        if not np.allclose(gram, np.eye(3), atol=ORTHO_TOL):
            # renormalise values that are orthonormal only to file precision
            q, _ = np.linalg.qr(np.asarray(orient).T)
            q = q * np.sign(np.diag(q.T @ np.asarray(orient).T))
            orient = tuple(tuple(r) for r in q.T)
        return GridGeometry(
            (self.columns, self.rows, len(self.slices)),
            (self.pixel_spacing[1], self.pixel_spacing[0], self.slice_spacing),
            tuple(self.slices[0].position),
            orient,
        )


def _as_ref(source) -> DicomSeriesRef:
    return source if isinstance(source, DicomSeriesRef) else DicomSeriesRef.scan(source)


def _stored_pixels(path: Path) -> np.ndarray:
    ds = pydicom.dcmread(path)
    if ds.file_meta.TransferSyntaxUID.is_compressed:
        raise FormatError(f"{path.name}: compressed transfer syntaxes are not supported")
    if int(ds.get("NumberOfFrames", 1) or 1) != 1:
        raise FormatError(f"{path.name}: multi-frame images are not supported")
    return ds.pixel_array


def read_dicom_series(source) -> ScalarVolume:
    """Load a series as HU, applying each slice's own rescale slope/intercept."""
    ref = _as_ref(source)
    geometry = ref.geometry
    values = np.empty(geometry.dims, dtype=np.float64)
    for k, s in enumerate(ref.slices):
        stored = _stored_pixels(s.path).astype(np.float64)
        values[:, :, k] = (s.slope * stored + s.intercept).T
    first = ref.slices[0]
    meta = {"source": "dicom", "series_instance_uid": ref.series_instance_uid}
    return ScalarVolume(geometry, values, (first.slope, first.intercept), meta)


def read_dicom_mask(source) -> BinaryMask:
    """Load a segmentation series; any non-zero stored value is foreground."""
    ref = _as_ref(source)
    bits = np.empty(ref.geometry.dims, dtype=bool)
    for k, s in enumerate(ref.slices):
        bits[:, :, k] = (_stored_pixels(s.path) != 0).T
    return BinaryMask(ref.geometry, bits)


def _uid(*parts) -> str:
    return generate_uid(entropy_srcs=[UID_SALT, *map(str, parts)])


def write_dicom_series(volume: ScalarVolume, template, out_dir, derivation=DERIVATION_NOTE):
    """Write ``volume`` as a DICOM series shaped and described like ``template``.

    Each slice is the matching template file with its pixel data replaced:
    HU values are quantised under that slice's rescale pair by rounding half
    away from zero and clamped to the stored bit range. All other attributes
    are copied, except that new instance UIDs (derived deterministically from
    the source UIDs and the new pixel data) and a derivation description are
    set. Returns the list of written paths.
    """
    ref = _as_ref(template)
    if ref.geometry.dims != volume.geometry.dims:
        raise GeometryError(
            f"volume dims {volume.geometry.dims} do not match template {ref.geometry.dims}"
        )
    volume.geometry.require_match(ref.geometry, "volume and template series")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    datasets = []
    for k, s in enumerate(ref.slices):
        ds = pydicom.dcmread(s.path)
        if ds.file_meta.TransferSyntaxUID.is_compressed:
            raise FormatError(f"{s.path.name}: compressed transfer syntaxes are not supported")
        bits_alloc = int(ds.BitsAllocated)
        bits_stored = int(ds.get("BitsStored", bits_alloc))
        signed = int(ds.get("PixelRepresentation", 0)) == 1
        lo, hi = stored_range(bits_stored, signed)
        dtype = np.dtype(("<i" if signed else "<u") + str(bits_alloc // 8))
        stored = round_half_away((volume.values[:, :, k].T - s.intercept) / s.slope)
        stored = np.clip(stored, lo, hi).astype(dtype)
        ds.PixelData = stored.tobytes()
        for tag in ("SmallestImagePixelValue", "LargestImagePixelValue"):
            if tag in ds:
                del ds[tag]
        datasets.append((s, ds))

    digest = hashlib.sha256(b"".join(ds.PixelData for _, ds in datasets)).hexdigest()
    series_uid = _uid(ref.series_instance_uid, digest)
    written = []
    for s, ds in datasets:
        sop_uid = _uid(s.sop_instance_uid, digest)
        ds.SOPInstanceUID = sop_uid
        ds.file_meta.MediaStorageSOPInstanceUID = sop_uid
        ds.SeriesInstanceUID = series_uid
        ds.DerivationDescription = derivation
        path = out_dir / s.path.name
        ds.save_as(path, enforce_file_format=True)
        written.append(path)
    return written
