"""HU to density calibration, density to modulus law and modulus binning."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import ContractError, DomainError

DEFAULT_E_MAX = 20000.0  # MPa
POISSON_RATIO = 0.3
BINS_PER_CLASS = 100


@dataclass(frozen=True)
class CalibrationCurve:
    """Linear map from HU to equivalent density (g/cm^3)."""

    slope: float
    intercept: float = 0.0

    def __post_init__(self):
        if self.slope == 0:
            raise ContractError("calibration slope must be non-zero")


@dataclass(frozen=True)
class DensityModulusLaw:
    """Power law ``E = A * rho**B`` in MPa, capped at ``e_max``."""

    a: float
    b: float
    e_max: float = DEFAULT_E_MAX

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.e_max > 0):
            raise ContractError(
                f"law coefficients must be positive, got A={self.a}, B={self.b}, "
                f"E_max={self.e_max}"
            )


# Specimen-specific relationships derived for porcine fibulae
# (specimen number -> (A in MPa, B)).
SPECIMEN_LAWS = {
    3: (12277.42, 0.994193),
    4: (13684.27, 0.88775),
    5: (11114.34, 1.295186),
    6: (10306.96, 1.441808),
    8: (12756.7, 1.080887),
    9: (12761.89, 1.091541),
    10: (10975.18, 1.461723),
    11: (9010.101, 1.748485),
}


def specimen_law(specimen: int, e_max: float = DEFAULT_E_MAX) -> DensityModulusLaw:
    a, b = SPECIMEN_LAWS[specimen]
    return DensityModulusLaw(a, b, e_max)


def hu_to_density(hu, curve: CalibrationCurve):
    """Equivalent density ``slope * hu + intercept``; accepts scalars or arrays."""
    if np.ndim(hu) == 0:
        return curve.slope * float(hu) + curve.intercept
    return curve.slope * np.asarray(hu, dtype=np.float64) + curve.intercept


def density_to_modulus(rho, law: DensityModulusLaw):
    """Elastic modulus in MPa, ``min(A * rho**B, E_max)``.

    Raises:
        DomainError: if any density is negative.
    """
    r = np.asarray(rho, dtype=np.float64)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise DomainError("density must be non-negative")
    e = np.minimum(law.a * r ** law.b, law.e_max)
    if e.ndim == 0:
        return float(e)
    return e


@dataclass(frozen=True)
class ModulusBin:
    tissue: str
    index: int
    lower: float
    upper: float
    count: int
    modulus: float
    poisson: float = POISSON_RATIO


@dataclass(frozen=True)
class MaterialBins:
    """Material groups for FE assignment, trabecular classes first.

    ``assignment`` gives, for every input value, its position in ``bins``.
    """

    threshold_density: float
    bins: List[ModulusBin]
    assignment: np.ndarray = field(repr=False)
    poisson: float = POISSON_RATIO

    def of_class(self, tissue: str) -> List[ModulusBin]:
        return [b for b in self.bins if b.tissue == tissue]


def equal_width_bins(values: np.ndarray, n_bins: int = BINS_PER_CLASS):
    """Partition ``[min, max]`` of ``values`` into ``n_bins`` equal-width bins.

    Returns ``(edges, index)`` where ``edges`` has ``n_bins + 1`` entries and
    ``index[v]`` is the bin of each value. Bins are half-open except the last,
    which is closed on the right. If all values are equal every bin collapses
    onto that value and everything lands in bin 0.
    """
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    width = (hi - lo) / n_bins
    edges = lo + width * np.arange(n_bins + 1)
    edges[-1] = hi
    if width == 0.0:
        return edges, np.zeros(values.shape, dtype=np.int64)
    index = np.floor((values - lo) / width).astype(np.int64)
    np.clip(index, 0, n_bins - 1, out=index)
    # float rounding can put a value one bin off near an edge
    index -= values < edges[index]
    index += (values >= edges[index + 1]) & (index < n_bins - 1)
    return edges, index


def build_bins(
    moduli: Sequence[float],
    densities: Sequence[float],
    threshold_density: float,
    n_bins: int = BINS_PER_CLASS,
) -> MaterialBins:
    """Group moduli into trabecular and cortical bins.

    Values whose density is below ``threshold_density`` are trabecular, the
    rest cortical. Each non-empty class gets ``n_bins`` equal-width bins over
    its own modulus range, represented by the mean of their members (or the
    bin centre when empty). A class with no values gets no bins and a warning.
    """
    moduli = np.asarray(moduli, dtype=np.float64).ravel()
    densities = np.asarray(densities, dtype=np.float64).ravel()
    if moduli.size == 0:
        raise ContractError("cannot bin an empty set of moduli")
    if moduli.shape != densities.shape:
        raise ContractError("moduli and densities must have the same length")

    bins: List[ModulusBin] = []
    assignment = np.full(moduli.shape, -1, dtype=np.int64)
    cortical = densities >= threshold_density
    for tissue, members in (("trabecular", ~cortical), ("cortical", cortical)):
        if not members.any():
            warnings.warn(
                f"no {tissue} values for threshold density {threshold_density}",
                stacklevel=2,
            )
            continue
        vals = moduli[members]
        edges, index = equal_width_bins(vals, n_bins)
        counts = np.bincount(index, minlength=n_bins)
        sums = np.bincount(index, weights=vals, minlength=n_bins)
        offset = len(bins)
        for b in range(n_bins):
            lower, upper = float(edges[b]), float(edges[b + 1])
            if counts[b]:
                # keep the mean inside the closed bin despite rounding
                rep = min(max(sums[b] / counts[b], lower), upper)
            else:
                rep = 0.5 * (lower + upper)
            bins.append(ModulusBin(tissue, b, lower, upper, int(counts[b]), float(rep)))
        assignment[members] = offset + index
    return MaterialBins(float(threshold_density), bins, assignment)


def material_table(bins: MaterialBins) -> str:
    """Plain-text table, one row per bin, for FE preprocessors."""
    lines = ["# tissue bin e_min_mpa e_max_mpa count e_mpa poisson"]
    for b in bins.bins:
        lines.append(
            f"{b.tissue} {b.index} {b.lower:.6f} {b.upper:.6f} {b.count} "
            f"{b.modulus:.6f} {b.poisson:.2f}"
        )
    return "\n".join(lines) + "\n"


def map_volume(
    hu_values,
    curve: CalibrationCurve,
    law: DensityModulusLaw,
    threshold_density: float,
    clip_negative: bool = False,
    n_bins: int = BINS_PER_CLASS,
) -> MaterialBins:
    """HU values -> density -> modulus -> bins, in one call."""
    rho = hu_to_density(np.asarray(hu_values, dtype=np.float64).ravel(), curve)
    if clip_negative:
        rho = np.maximum(rho, 0.0)
    return build_bins(density_to_modulus(rho, law), rho, threshold_density, n_bins)

