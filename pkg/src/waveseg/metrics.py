"""Overlap and surface-distance metrics for binary regions.

Boundary voxels are region voxels with at least one face-adjacent
background voxel (voxels outside the array count as background). Surface
distances pool the directed nearest-boundary distances in both directions;
95HD is the 95th percentile of that pooled multiset (linear interpolation)
and ASD its mean. Dice/Jaccard of two empty regions are 100 by convention;
distances for an empty region are undefined and raise.
"""

import numpy as np

from . import backend
from .errors import ShapeError, UndefinedMetricError, ValidationError


def _as_binary(arr, name):
    arr = np.asarray(arr)
    if arr.dtype != bool:
        vals = np.unique(arr)
        if not np.isin(vals, (0, 1)).all():
            raise ValidationError(f"{name} must be binary, found values {vals[:8]}")
        arr = arr.astype(bool)
    return arr


def _pair(pred, gt):
    pred = _as_binary(pred, "pred")
    gt = _as_binary(gt, "gt")
    if pred.shape != gt.shape:
        raise ShapeError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    return pred, gt


def dice(pred, gt):
    """Overlap percentage 100 * 2|A∩B| / (|A|+|B|); 100 when both empty."""
    pred, gt = _pair(pred, gt)
    a = int(np.count_nonzero(pred))
    b = int(np.count_nonzero(gt))
    if a == 0 and b == 0:
        return 100.0
    inter = int(np.count_nonzero(pred & gt))
    return 100.0 * 2.0 * inter / (a + b)


def jaccard(pred, gt):
    """Overlap percentage 100 * |A∩B| / |A∪B|; 100 when both empty."""
    pred, gt = _pair(pred, gt)
    union = int(np.count_nonzero(pred | gt))
    if union == 0:
        return 100.0
    inter = int(np.count_nonzero(pred & gt))
    return 100.0 * inter / union


def boundary_mask(region):
    """Region voxels with a face-adjacent background voxel (or array edge)."""
    region = np.asarray(region, dtype=bool)
    interior = region.copy()
    for ax in range(region.ndim):
        padded = np.pad(region, [(1, 1) if a == ax else (0, 0) for a in range(region.ndim)])
        lo = tuple(slice(0, -2) if a == ax else slice(None) for a in range(region.ndim))
        hi = tuple(slice(2, None) if a == ax else slice(None) for a in range(region.ndim))
        interior &= padded[lo] & padded[hi]
    return region & ~interior


def surface_distances(pred, gt, spacing=None):
    """Pooled symmetric nearest-boundary distances between two regions."""
    pred, gt = _pair(pred, gt)
    if not pred.any() or not gt.any():
        raise UndefinedMetricError("surface distances undefined for an empty region")
    if spacing is None:
        spacing = np.ones(pred.ndim)
    spacing = np.asarray(spacing, dtype=np.float64)
    if spacing.shape != (pred.ndim,):
        raise ShapeError(f"spacing must have {pred.ndim} entries, got {spacing.shape}")
    pts_pred = np.argwhere(boundary_mask(pred)).astype(np.float64)
    pts_gt = np.argwhere(boundary_mask(gt)).astype(np.float64)
    fwd = backend.nn_distances(pts_pred, pts_gt, spacing)
    bwd = backend.nn_distances(pts_gt, pts_pred, spacing)
    # sorted multiset: percentile/mean become exactly symmetric in (pred, gt)
    return np.sort(np.concatenate([fwd, bwd]))


def hd95(pred, gt, spacing=None):
    """95th percentile of the pooled symmetric surface distances."""
    return float(np.percentile(surface_distances(pred, gt, spacing), 95))


def asd(pred, gt, spacing=None):
    """Mean of the pooled symmetric surface distances."""
    return float(np.mean(surface_distances(pred, gt, spacing)))


def evaluate_pair(pred_labels, gt_labels, num_classes, spacing=None):
    """All four metrics for every foreground class of one sample.

    Distance metrics are ``None`` when either region is empty.
    """
    pred_labels = np.asarray(pred_labels)
    gt_labels = np.asarray(gt_labels)
    if pred_labels.shape != gt_labels.shape:
        raise ShapeError(
            f"prediction shape {pred_labels.shape} != label shape {gt_labels.shape}"
        )
    record = {}
    for cls in range(1, num_classes):
        p = pred_labels == cls
        g = gt_labels == cls
        entry = {"dice": dice(p, g), "jaccard": jaccard(p, g)}
        try:
            dists = surface_distances(p, g, spacing)
            entry["hd95"] = float(np.percentile(dists, 95))
            entry["asd"] = float(np.mean(dists))
        except UndefinedMetricError:
            entry["hd95"] = None
            entry["asd"] = None
        record[cls] = entry
    return record


METRIC_NAMES = ("dice", "jaccard", "hd95", "asd")


def aggregate(records, num_classes):
    """Combine per-sample records from :func:`evaluate_pair` into a report.

    Per class: mean of each metric over the samples where it is defined,
    plus an ``undefined`` count for the distance metrics. The ``mean`` block
    averages the per-class means (foreground classes only).
    """
    per_class = {}
    for cls in range(1, num_classes):
        stats = {}
        for name in METRIC_NAMES:
            vals = [r[cls][name] for r in records if r[cls][name] is not None]
            stats[name] = float(np.mean(vals)) if vals else None
            if name in ("hd95", "asd"):
                stats[f"{name}_undefined"] = sum(1 for r in records if r[cls][name] is None)
        per_class[cls] = stats
    mean = {}
    for name in METRIC_NAMES:
        vals = [per_class[c][name] for c in per_class if per_class[c][name] is not None]
        mean[name] = float(np.mean(vals)) if vals else None
    return {"per_class": per_class, "mean": mean, "num_samples": len(records)}
