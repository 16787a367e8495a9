"""Synthetic cortical-shell phantoms with a known ground truth.

A phantom is a straight tube along k: a cortical shell around a trabecular
core, surrounded by soft tissue. Blurring it with a Gaussian point spread
function produces the partial volume depression that correction should undo;
because the true surface values are known, the recovery can be scored.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import ContractError, GeometryError
from .morphology import partition
from .pvc import PvcParams, correct
from .volume import BinaryMask, GridGeometry, ScalarVolume

PSF_TRUNCATE = 4.0  # kernel radius in standard deviations

STANDARD_SUITE = Path(__file__).with_name("data") / "standard_suite.ini"


@dataclass(frozen=True)
class PhantomSpec:
    outer_radius: float
    cortical_thickness: float
    length: float
    geometry: GridGeometry
    cortical_hu: float = 1800.0
    trabecular_hu: float = 400.0
    background_hu: float = 40.0
    psf_sigma: float = 0.0
    name: str = "phantom"

    def __post_init__(self):
        if not self.outer_radius > self.cortical_thickness > 0:
            raise ContractError(
                f"{self.name}: need outer_radius > cortical_thickness > 0, got "
                f"{self.outer_radius} and {self.cortical_thickness}"
            )
        if not self.cortical_hu > self.trabecular_hu > self.background_hu:
            raise ContractError(f"{self.name}: need cortical > trabecular > background HU")
        if not self.psf_sigma >= 0:
            raise ContractError(f"{self.name}: psf_sigma must be >= 0")
        if not self.length > 0:
            raise ContractError(f"{self.name}: length must be positive")

    @property
    def inner_radius(self) -> float:
        return self.outer_radius - self.cortical_thickness


@dataclass(frozen=True)
class PhantomResult:
    """Surface-voxel errors (HU) of a blurred and a corrected phantom.

    ``undefined`` is set when the blurred volume had no surface error at all;
    ``improvement_fraction`` is then 1.0 by convention.
    """

    mae_uncorrected: float
    mae_corrected: float
    mean_signed_uncorrected: float
    mean_signed_corrected: float
    improvement_fraction: float
    surface_count: int = 0
    undefined: bool = False
    name: str = ""


def _centred_coords(geometry: GridGeometry, axis: int) -> np.ndarray:
    n = geometry.dims[axis]
    return (np.arange(n) - (n - 1) / 2.0) * geometry.spacing[axis]


def generate(spec: PhantomSpec):
    """Build the ground-truth volume and its perfect segmentation mask.

    The tube axis runs along k through the centre of the i-j plane; the tube
    spans ``length`` mm centred along k. Voxel centres with radial distance
    ``inner <= r <= outer`` are cortical, ``r < inner`` trabecular, and
    everything else background.
    """
    g = spec.geometry
    x = _centred_coords(g, 0)
    y = _centred_coords(g, 1)
    z = _centred_coords(g, 2)
    half_extent = min(-x[0], -y[0])
    if spec.outer_radius >= half_extent:
        raise GeometryError(
            f"{spec.name}: outer radius {spec.outer_radius} mm does not fit in the "
            f"grid (half width {half_extent} mm)"
        )
    if spec.length > g.dims[2] * g.spacing[2]:
        raise GeometryError(
            f"{spec.name}: length {spec.length} mm exceeds the grid extent "
            f"{g.dims[2] * g.spacing[2]} mm"
        )
    r = np.hypot(x[:, None], y[None, :])
    disc = r <= spec.outer_radius
    core = r < spec.inner_radius
    slab = np.abs(z) <= spec.length / 2.0

    plane = np.full(r.shape, spec.background_hu)
    plane[disc] = spec.cortical_hu
    plane[core] = spec.trabecular_hu
    values = np.where(slab[None, None, :], plane[:, :, None], spec.background_hu)
    mask = disc[:, :, None] & slab[None, None, :]
    meta = {"phantom": spec.name}
    return ScalarVolume(g, values, metadata=meta), BinaryMask(g, mask)


def blur(volume: ScalarVolume, sigma_mm: float) -> ScalarVolume:
    """Separable Gaussian blur with standard deviation ``sigma_mm`` in mm.

    The kernel is truncated at four standard deviations and normalised;
    edges replicate the nearest voxel.
    """
    if sigma_mm < 0:
        raise ContractError("blur sigma must be non-negative")
    if sigma_mm == 0:
        return volume.with_values(volume.values)
    out = np.array(volume.values, dtype=np.float64)
    for axis, spacing in enumerate(volume.geometry.spacing):
        out = gaussian_filter1d(
            out, sigma_mm / spacing, axis=axis, mode="nearest", truncate=PSF_TRUNCATE
        )
    return volume.with_values(out)


def evaluate(ground_truth, blurred, corrected, mask: BinaryMask, name="") -> PhantomResult:
    """Score blurred and corrected volumes against the truth on surface voxels."""
    for v, what in ((ground_truth, "ground truth"), (blurred, "blurred"), (corrected, "corrected")):
        mask.geometry.require_match(v.geometry, f"mask and {what} volume")
    surface = partition(mask).surface.bits
    n = int(np.count_nonzero(surface))
    if n == 0:
        return PhantomResult(0.0, 0.0, 0.0, 0.0, 1.0, 0, True, name)
    truth = ground_truth.values[surface]
    err_u = blurred.values[surface] - truth
    err_c = corrected.values[surface] - truth
    mae_u = float(np.abs(err_u).mean())
    mae_c = float(np.abs(err_c).mean())
    undefined = mae_u == 0.0
    improvement = 1.0 if undefined else 1.0 - mae_c / mae_u
    return PhantomResult(
        mae_u, mae_c, float(err_u.mean()), float(err_c.mean()), improvement, n, undefined, name
    )


def run_case(spec: PhantomSpec, params=PvcParams(), workers=None) -> PhantomResult:
    """generate -> blur -> correct -> evaluate for one phantom."""
    truth, mask = generate(spec)
    blurred = blur(truth, spec.psf_sigma)
    corrected, _ = correct(blurred, mask, params, workers=workers)
    return evaluate(truth, blurred, corrected, mask, spec.name)


def _triple(text: str, what: str, case: str):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise ContractError(f"case [{case}]: {what} needs 1 or 3 values, got {text!r}")
    return parts


def load_suite(path) -> List[PhantomSpec]:
    """Read a phantom suite from an INI file, one section per case.

    Recognised keys: ``dims`` and ``spacing`` (one or three numbers), and the
    scalar :class:`PhantomSpec` fields. The PSF width is ``psf_sigma`` in mm
    or, if that is absent, ``psf_sigma_voxels`` in multiples of the first
    in-plane spacing.
    A ``[DEFAULT]`` section supplies shared values.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ContractError(f"cannot parse phantom suite {path}: {exc}") from None
    specs = []
    for case in parser.sections():
        sec = parser[case]
        try:
            dims = tuple(int(v) for v in _triple(sec["dims"], "dims", case))
            spacing = tuple(float(v) for v in _triple(sec.get("spacing", "1"), "spacing", case))
            if "psf_sigma" in sec:
                sigma = float(sec["psf_sigma"])
            else:
                sigma = sec.getfloat("psf_sigma_voxels", 0.0) * spacing[0]
            spec = PhantomSpec(
                outer_radius=float(sec["outer_radius"]),
                cortical_thickness=float(sec["cortical_thickness"]),
                length=float(sec["length"]),
                geometry=GridGeometry(dims, spacing),
                cortical_hu=sec.getfloat("cortical_hu", 1800.0),
                trabecular_hu=sec.getfloat("trabecular_hu", 400.0),
                background_hu=sec.getfloat("background_hu", 40.0),
                psf_sigma=sigma,
                name=case,
            )
        except KeyError as exc:
            raise ContractError(f"case [{case}]: missing key {exc.args[0]}") from None
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ContractError):
                raise
            raise ContractError(f"case [{case}]: {exc}") from None
        specs.append(spec)
    return specs


RESULT_COLUMNS = (
    "name", "surface_count", "mae_uncorrected", "mae_corrected",
    "mean_signed_uncorrected", "mean_signed_corrected", "improvement_fraction", "undefined",
)


def results_csv(results) -> str:
    rows = [",".join(RESULT_COLUMNS)]
    for r in results:
        rows.append(
            f"{r.name},{r.surface_count},{r.mae_uncorrected:.6f},{r.mae_corrected:.6f},"
            f"{r.mean_signed_uncorrected:.6f},{r.mean_signed_corrected:.6f},"
            f"{r.improvement_fraction:.6f},{int(r.undefined)}"
        )
    return "\n".join(rows) + "\n"
