"""Single-level discrete wavelet decomposition and band-limited companions.

Images are decomposed into subbands once per spatial axis (LL/HL/LH/HH in
2D, eight bands in 3D). The low-frequency and high-frequency companion
images are synthesized back at full resolution by inverse-transforming
complementary-zeroed subbands, so the three network inputs share one shape
and satisfy ``low + high == raw`` to float precision.

Filtering is periodized: odd axes are reflect-padded to even length first,
and the reconstruction is cropped back. For orthonormal families this makes
the transform an exact isometry (perfect reconstruction, energy preserved).
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import backend
from .errors import ConfigError, ShapeError

_SQRT2 = np.sqrt(2.0)
_SQRT3 = np.sqrt(3.0)

# Orthonormal analysis taps; synthesis is the adjoint of analysis.
FAMILIES = {
    "haar": (
        np.array([1.0, 1.0]) / _SQRT2,
        np.array([1.0, -1.0]) / _SQRT2,
    ),
    "db2": (
        np.array([1.0 + _SQRT3, 3.0 + _SQRT3, 3.0 - _SQRT3, 1.0 - _SQRT3]) / (4.0 * _SQRT2),
        np.array([1.0 - _SQRT3, -(3.0 - _SQRT3), 3.0 + _SQRT3, -(1.0 + _SQRT3)]) / (4.0 * _SQRT2),
    ),
}


@dataclass
class Subbands:
    """One-level subbands of a (C, *spatial) array.

    Keys are one letter per spatial axis, ``L`` (lowpass) or ``H``
    (highpass), first letter = first spatial axis. Every band has shape
    (C, *ceil(spatial/2)).
    """

    bands: dict
    family: str
    original_shape: tuple

    @property
    def rank(self):
        return len(self.original_shape)

    @property
    def lowpass_key(self):
        return "L" * self.rank

    def band_shape(self):
        return next(iter(self.bands.values())).shape


def _taps(family):
    try:
        return FAMILIES[family]
    except KeyError:
        raise ConfigError(
            f"unsupported wavelet family {family!r}; supported: {sorted(FAMILIES)}"
        ) from None


def _pad_to_even(data, taps_len):
    """Reflect-pad odd spatial axes to even length (channel axis untouched)."""
    pad = [(0, 0)]
    for n in data.shape[1:]:
        if n < 2:
            raise ShapeError(f"spatial dims must be >= 2, got shape {data.shape}")
        pad.append((0, n % 2))
    if any(p[1] for p in pad):
        data = np.pad(data, pad, mode="reflect")
    if min(data.shape[1:]) < taps_len:
        raise ShapeError(
            f"spatial dims {data.shape[1:]} too small for a {taps_len}-tap filter"
        )
    return data


def _rows(arr, axis):
    """View ``axis`` as the last one and flatten the rest into rows."""
    moved = np.moveaxis(arr, axis, -1)
    return np.ascontiguousarray(moved).reshape(-1, moved.shape[-1]), moved.shape[:-1]


def _unrows(rows, lead, axis):
    return np.moveaxis(rows.reshape(lead + (rows.shape[-1],)), -1, axis)


def _split_axis(arr, axis, lo, hi):
    rows, lead = _rows(arr, axis)
    a, d = backend.dwt_axis(rows, lo, hi)
    return _unrows(a, lead, axis), _unrows(d, lead, axis)


def _merge_axis(a, d, axis, lo, hi):
    rows_a, lead = _rows(a, axis)
    rows_d, _ = _rows(d, axis)
    x = backend.idwt_axis(rows_a, rows_d, lo, hi)
    return _unrows(x, lead, axis)


def dwt(data, family="haar"):
    """Single-level separable DWT of a (C, *spatial) array.

    Returns :class:`Subbands`; input dtype is preserved in the bands.
    """
    lo, hi = _taps(family)
    data = np.asarray(data)
    if data.ndim not in (3, 4):
        raise ShapeError(f"expected (C, H, W) or (C, D, H, W), got shape {data.shape}")
    spatial_shape = data.shape[1:]
    work = _pad_to_even(data.astype(np.float64, copy=False), len(lo))

    bands = {"": work}
    for axis in range(1, work.ndim):
        split = {}
        for key, arr in bands.items():
            a, d = _split_axis(arr, axis, lo, hi)
            split[key + "L"] = a
            split[key + "H"] = d
        bands = split
    bands = {k: v.astype(data.dtype, copy=False) for k, v in bands.items()}
    return Subbands(bands=bands, family=family, original_shape=spatial_shape)


def idwt(subbands):
    """Inverse of :func:`dwt`, cropped to the recorded original shape."""
    lo, hi = _taps(subbands.family)
    rank = subbands.rank
    expected = {"".join(k) for k in product("LH", repeat=rank)}
    if set(subbands.bands) != expected:
        raise ShapeError(f"expected bands {sorted(expected)}, got {sorted(subbands.bands)}")
    shapes = {v.shape for v in subbands.bands.values()}
    if len(shapes) != 1:
        raise ShapeError(f"inconsistent band shapes: {sorted(shapes)}")
    band_spatial = next(iter(shapes))[1:]
    want = tuple((n + 1) // 2 for n in subbands.original_shape)
    if band_spatial != want:
        raise ShapeError(
            f"band spatial shape {band_spatial} does not match "
            f"original_shape {subbands.original_shape} (expected {want})"
        )

    dtype = next(iter(subbands.bands.values())).dtype
    bands = {k: v.astype(np.float64, copy=False) for k, v in subbands.bands.items()}
    for axis in range(rank, 0, -1):
        merged = {}
        for key in {k[:-1] for k in bands}:
            merged[key] = _merge_axis(bands[key + "L"], bands[key + "H"], axis, lo, hi)
        bands = merged
    full = bands[""]
    crop = (slice(None),) + tuple(slice(0, n) for n in subbands.original_shape)
    return np.ascontiguousarray(full[crop]).astype(dtype, copy=False)


@dataclass
class FrequencyTriple:
    """Full-resolution companions fed to the three network branches."""

    low: np.ndarray
    raw: np.ndarray
    high: np.ndarray

    def stacked(self):
        return (self.low, self.raw, self.high)


def frequency_triple(data, family="haar"):
    """Split ``data`` into (low, raw, high) full-resolution images.

    ``low`` keeps only the all-lowpass subband, ``high`` the rest; ``raw``
    is the untouched input. By linearity ``low + high == raw``.
    """
    data = np.asarray(data)
    sub = dwt(data, family)
    zero = np.zeros_like(next(iter(sub.bands.values())))
    lp = sub.lowpass_key

    low_bands = {k: (v if k == lp else zero) for k, v in sub.bands.items()}
    high_bands = {k: (zero if k == lp else v) for k, v in sub.bands.items()}
    low = idwt(Subbands(low_bands, sub.family, sub.original_shape))
    high = idwt(Subbands(high_bands, sub.family, sub.original_shape))
    return FrequencyTriple(low=low, raw=data, high=high)
