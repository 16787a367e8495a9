"""HU <-> stored integer conversion shared by the file writers."""

import numpy as np


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to the nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def to_stored(hu, slope: float, intercept: float, dtype) -> np.ndarray:
    """Invert ``HU = slope * stored + intercept`` and clamp to ``dtype``'s range."""
    info = np.iinfo(dtype)
    stored = round_half_away((np.asarray(hu, dtype=np.float64) - intercept) / slope)
    return np.clip(stored, info.min, info.max).astype(dtype)


def stored_range(bits_stored: int, signed: bool):
    """Inclusive value range of a ``bits_stored``-bit integer."""
    if signed:
        return -(1 << (bits_stored - 1)), (1 << (bits_stored - 1)) - 1
    return 0, (1 << bits_stored) - 1
