"""Circular azimuth arithmetic, 1-degree classes, and 15-degree bins.

Angle convention:
- Azimuths are plain floats in degrees, canonically normalized to [0, 360).
- The circle is discretized into 360 one-degree classes; class ``k`` covers
  the half-open interval [k, k+1).
- Coarse evaluation uses 24 contiguous bins of 15 degrees each.  Two bin
  conventions are supported:

  * ``"centered"`` (default): bin 0 is centered on 0 degrees, i.e. it covers
    classes {353..359, 0..7}.
  * ``"edge"``: bin 0 starts at 0 degrees, i.e. it covers classes {0..14}.

- A horizontal image flip maps azimuth ``a`` to ``(360 - a) % 360``.  The
  same reindexing applies to any per-degree score vector.

Angles are kept as reals and discretized late, so sub-degree ground truth
stays representable.  ``flip_azimuth`` is an exact involution whenever
``360 - a`` is exactly representable (always true for dyadic fractions of a
degree, in particular for whole degrees).
"""

from __future__ import annotations

import math
from typing import Literal

import numpy as np

CLASS_COUNT = 360
BIN_COUNT = 24

BinConvention = Literal["centered", "edge"]

_FLIP_INDEX = (CLASS_COUNT - np.arange(CLASS_COUNT)) % CLASS_COUNT


def normalize_azimuth(angle_deg: float) -> float:
    """Normalize a degree angle to [0, 360).  Total on finite inputs."""
    if not math.isfinite(angle_deg):
        raise ValueError(f"azimuth must be finite, got {angle_deg!r}")
    x = float(angle_deg) % 360.0
    # Python's % can return 360.0 - eps rounding up to 360.0 for tiny
    # negative inputs; fold that back to 0.
    if x >= 360.0:
        x = 0.0
    return x


def angular_distance(a_deg: float, b_deg: float) -> float:
    """Shortest arc between two azimuths, in [0, 180]."""
    d = abs(normalize_azimuth(a_deg) - normalize_azimuth(b_deg))
    return min(d, 360.0 - d)


def flip_azimuth(a_deg: float) -> float:
    """Azimuth of the horizontally flipped view: (360 - a) mod 360.

    0 and 180 are fixed points; the map is its own inverse.
    """
    a = normalize_azimuth(a_deg)
    if a == 0.0:
        return 0.0
    return 360.0 - a


def flip_distribution(q: np.ndarray) -> np.ndarray:
    """Reindex a per-degree vector the way a horizontal flip moves angles.

    out[k] = q[(360 - k) % 360].  Pure permutation: exact involution,
    preserves the sum and nonnegativity bit for bit.
    """
    q = np.asarray(q)
    if q.shape[-1] != CLASS_COUNT:
        raise ValueError(
            f"per-degree vector must have length {CLASS_COUNT}, got {q.shape}"
        )
    return q[..., _FLIP_INDEX]


def azimuth_to_class(a_deg: float) -> int:
    """1-degree class index of an azimuth: floor of the normalized angle."""
    k = int(math.floor(normalize_azimuth(a_deg)))
    return k % CLASS_COUNT


def class_to_bin(
    k: int,
    convention: BinConvention = "centered",
    n_bins: int = BIN_COUNT,
) -> int:
    """Coarse bin index of a 1-degree class.

    Centered mode places bin boundaries half a bin width off the class
    grid so that bin 0 straddles 0 degrees; edge mode aligns bin 0's lower
    edge with class 0.  ``n_bins`` must divide 360.
    """
    if not 0 <= k < CLASS_COUNT:
        raise ValueError(f"class index must be in [0, {CLASS_COUNT}), got {k}")
    if CLASS_COUNT % n_bins != 0:
        raise ValueError(f"n_bins must divide {CLASS_COUNT}, got {n_bins}")
    width = CLASS_COUNT / n_bins
    if convention == "centered":
        return int(((k + width / 2.0) % CLASS_COUNT) // width)
    if convention == "edge":
        return int(k // width)
    raise ValueError(f"unknown bin convention {convention!r}")


def azimuth_to_bin(
    a_deg: float,
    convention: BinConvention = "centered",
    n_bins: int = BIN_COUNT,
) -> int:
    """Bin index of a real-valued azimuth (discretized to its class first)."""
    return class_to_bin(azimuth_to_class(a_deg), convention, n_bins)


def bin_members(
    b: int,
    convention: BinConvention = "centered",
    n_bins: int = BIN_COUNT,
) -> np.ndarray:
    """All class indices belonging to bin ``b``, in ascending class order."""
    if not 0 <= b < n_bins:
        raise ValueError(f"bin index must be in [0, {n_bins}), got {b}")
    classes = np.arange(CLASS_COUNT)
    bins = _class_bins_cached(convention, n_bins)
    return classes[bins == b]


_CLASS_BINS_CACHE: dict[tuple[str, int], np.ndarray] = {}


def _class_bins_cached(convention: BinConvention, n_bins: int) -> np.ndarray:
    key = (convention, n_bins)
    if key not in _CLASS_BINS_CACHE:
        bins = np.array(
            [class_to_bin(k, convention, n_bins) for k in range(CLASS_COUNT)]
        )
        bins.setflags(write=False)
        _CLASS_BINS_CACHE[key] = bins
    return _CLASS_BINS_CACHE[key]


def class_bins(
    convention: BinConvention = "centered",
    n_bins: int = BIN_COUNT,
) -> np.ndarray:
    """Vector mapping every class index to its bin index."""
    return _class_bins_cached(convention, n_bins).copy()


def validate_distribution(
    q: np.ndarray, normalized: bool = False, tol: float = 1e-9
) -> np.ndarray:
    """Check a per-degree score vector: shape 360, finite, nonnegative.

    With ``normalized=True`` additionally require the entries to sum to 1
    within ``tol``.  Returns the input as a float64 array.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (CLASS_COUNT,):
        raise ValueError(f"expected shape ({CLASS_COUNT},), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("distribution entries must be finite")
    if np.any(q < 0):
        raise ValueError("distribution entries must be nonnegative")
    if normalized and abs(float(q.sum()) - 1.0) > tol:
        raise ValueError(f"distribution sums to {q.sum()!r}, expected 1")
    return q
