import sys
from pathlib import Path

import numpy as np
import pydicom
import pytest
from pydicom.dataset import FileDataset, FileMetaDataset
from pydicom.uid import CTImageStorage, ExplicitVRLittleEndian, generate_uid

sys.path.insert(0, str(Path(__file__).parent))

from pvcorrect import BinaryMask, GridGeometry, ScalarVolume  # noqa: E402


def make_ct_series(
    directory,
    stored,
    pixel_spacing=(0.488, 0.488),
    slice_spacing=1.0,
    origin=(-125.0, -125.0, 40.0),
    slope=1.0,
    intercept=-1024.0,
    signed=True,
    positions=None,
    shuffle_names=True,
    drop_tag=None,
):
    """Write a synthetic single-frame CT series.

    ``stored`` is indexed ``[i, j, k]`` = (column, row, slice). File names are
    deliberately out of slice order when ``shuffle_names`` is set.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stored = np.asarray(stored)
    cols, rows, nslices = stored.shape
    series_uid = generate_uid()
    study_uid = generate_uid()
    dtype = np.int16 if signed else np.uint16
    paths = []
    for k in range(nslices):
        meta = FileMetaDataset()
        meta.MediaStorageSOPClassUID = CTImageStorage
        sop_uid = generate_uid()
        meta.MediaStorageSOPInstanceUID = sop_uid
        meta.TransferSyntaxUID = ExplicitVRLittleEndian
        name = f"IM{(nslices - k) if shuffle_names else k:04d}.dcm"
        ds = FileDataset(str(directory / name), {}, file_meta=meta, preamble=b"\0" * 128)
        ds.SOPClassUID = CTImageStorage
        ds.SOPInstanceUID = sop_uid
        ds.StudyInstanceUID = study_uid
        ds.SeriesInstanceUID = series_uid
        ds.Modality = "CT"
        ds.Manufacturer = "TOSHIBA"
        ds.ManufacturerModelName = "Aquilion"
        ds.ConvolutionKernel = "FC30"
        ds.KVP = 120
        ds.PatientName = "Phantom^Synthetic"
        ds.InstanceNumber = k + 1
        ds.Rows = rows
        ds.Columns = cols
        ds.PixelSpacing = [pixel_spacing[0], pixel_spacing[1]]
        ds.SliceThickness = slice_spacing
        z = positions[k] if positions is not None else origin[2] + k * slice_spacing
        ds.ImagePositionPatient = [origin[0], origin[1], z]
        ds.ImageOrientationPatient = [1, 0, 0, 0, 1, 0]
        ds.SamplesPerPixel = 1
        ds.PhotometricInterpretation = "MONOCHROME2"
        ds.BitsAllocated = 16
        ds.BitsStored = 16
        ds.HighBit = 15
        ds.PixelRepresentation = 1 if signed else 0
        ds.RescaleSlope = slope
        ds.RescaleIntercept = intercept
        ds.PixelData = np.ascontiguousarray(stored[:, :, k].T.astype(dtype)).tobytes()
        if drop_tag is not None and drop_tag in ds:
            del ds[drop_tag]
        ds.save_as(directory / name, enforce_file_format=True)
        paths.append(directory / name)
    return paths


def pixel_payloads(directory):
    """Map file name -> raw PixelData bytes."""
    return {
        p.name: pydicom.dcmread(p).PixelData for p in sorted(Path(directory).iterdir())
    }


@pytest.fixture
def cube_case():
    """Solid 3x3x3 mask, centre 1500 HU, shell 800 HU."""
    g = GridGeometry((3, 3, 3))
    values = np.full((3, 3, 3), 800.0)
    values[1, 1, 1] = 1500.0
    return ScalarVolume(g, values), BinaryMask(g, np.ones((3, 3, 3), dtype=bool))


@pytest.fixture
def sheet_case():
    """A 1-voxel-thick 6x6 sheet inside an 8x8x3 grid."""
    g = GridGeometry((8, 8, 3), (0.488, 0.488, 1.0))
    mask = np.zeros((8, 8, 3), dtype=bool)
    mask[1:7, 1:7, 1] = True
    rng = np.random.default_rng(7)
    values = rng.integers(-200, 1500, size=(8, 8, 3)).astype(np.float64)
    return ScalarVolume(g, values), BinaryMask(g, mask)
