"""NumPy implementations of the hot kernels.

Same contracts as the compiled twin in ``_native.pyx``: single-level
periodized filter-bank analysis/synthesis along the last axis of a 2D
row-stack, and directed nearest-neighbour distances between voxel
coordinate sets.
"""

import numpy as np
from scipy.spatial import cKDTree

NAME = "pure"


def dwt_axis(x, lo, hi):
    """Filter rows of ``x`` (shape (rows, n), n even) and downsample by 2.

    Periodic (circular) correlation: a[k] = sum_m lo[m] * x[(2k+m) mod n].
    Returns (approx, detail), each (rows, n//2).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[1]
    a = np.zeros((x.shape[0], n // 2))
    d = np.zeros((x.shape[0], n // 2))
    for m in range(len(lo)):
        shifted = np.roll(x, -m, axis=1)[:, ::2]
        a += lo[m] * shifted
        d += hi[m] * shifted
    return a, d


def idwt_axis(a, d, lo, hi):
    """Adjoint of :func:`dwt_axis`; exact inverse for orthonormal taps."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    d = np.ascontiguousarray(d, dtype=np.float64)
    n = 2 * a.shape[1]
    up_a = np.zeros((a.shape[0], n))
    up_d = np.zeros((d.shape[0], n))
    up_a[:, ::2] = a
    up_d[:, ::2] = d
    x = np.zeros((a.shape[0], n))
    for m in range(len(lo)):
        x += lo[m] * np.roll(up_a, m, axis=1)
        x += hi[m] * np.roll(up_d, m, axis=1)
    return x


def nn_distances(src, dst, spacing):
    """Euclidean distance from each point of ``src`` to its nearest ``dst``.

    Points are integer voxel coordinates (n, rank); ``spacing`` scales each
    axis before measuring. Exact (KD-tree query, not an approximation).
    """
    src = np.asarray(src, dtype=np.float64) * spacing
    dst = np.asarray(dst, dtype=np.float64) * spacing
    tree = cKDTree(dst)
    dists, _ = tree.query(src, k=1)
    return np.asarray(dists, dtype=np.float64)
