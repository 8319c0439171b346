"""Segmentation, copy-paste-masked and cross-branch consistency losses.

All losses take batched softmax probabilities (B, K, *spatial), never
logits, so the same tensors that form the network's public predictions
feed the objective. Voxel weights are normalized by their mean, which
makes every loss invariant to rescaling the weight map and keeps gradient
magnitudes stable across mask placements.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import NumericError, ValidationError
from .mixing import MixMask

log = logging.getLogger(__name__)

DICE_EPS = 1e-5
_LOG_FLOOR = 1e-12


@dataclass
class LossWeights:
    """Unlabeled-pixel weight and consistency weight of the total objective."""

    alpha: float = 0.5
    consistency: float = 1.0
    breakdown: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha < 0 or self.consistency < 0:
            raise ValidationError("loss weights must be non-negative")


def _check_batched(pred, target, voxel_weights):
    pred = torch.as_tensor(pred)
    target = torch.as_tensor(target)
    if pred.dim() != target.dim() + 1 or pred.shape[0] != target.shape[0] \
            or pred.shape[2:] != target.shape[1:]:
        raise ValidationError(
            f"expected pred (B, K, *spatial) with target (B, *spatial); "
            f"got {tuple(pred.shape)} vs {tuple(target.shape)}"
        )
    if voxel_weights is None:
        weights = torch.ones_like(target, dtype=pred.dtype)
    else:
        weights = torch.as_tensor(voxel_weights, dtype=pred.dtype)
        if weights.dim() == target.dim() - 1:
            weights = weights.unsqueeze(0)
        weights = weights.expand_as(target)
        if (weights < 0).any():
            raise ValidationError("voxel weights must be non-negative")
        if not (weights > 0).any():
            raise ValidationError("voxel weights must not all be zero")
    return pred, target.long(), weights / weights.mean()


def seg_loss(pred, target, voxel_weights=None):
    """0.5 * class-averaged soft Dice loss + 0.5 * weighted cross-entropy.

    ``pred`` holds per-class probabilities (B, K, *spatial); ``target``
    integer labels (B, *spatial); ``voxel_weights`` an optional non-negative
    map broadcastable to the target shape.
    """
    pred, target, w = _check_batched(pred, target, voxel_weights)
    num_classes = pred.shape[1]

    p_true = pred.gather(1, target.unsqueeze(1)).squeeze(1)
    ce = -(w * p_true.clamp_min(_LOG_FLOOR).log()).sum() / w.sum()

    onehot = F.one_hot(target, num_classes).movedim(-1, 1).to(pred.dtype)
    wc = w.unsqueeze(1)
    reduce_dims = (0,) + tuple(range(2, pred.dim()))
    num = 2.0 * (wc * pred * onehot).sum(dim=reduce_dims)
    den = (wc * (pred * pred + onehot)).sum(dim=reduce_dims)
    dice = (num + DICE_EPS) / (den + DICE_EPS)
    dice_loss = 1.0 - dice.mean()

    return 0.5 * dice_loss + 0.5 * ce


def direction_weights(mask, alpha, direction):
    """Per-voxel weight map of the masked copy-paste losses.

    ``in``: full weight on the kept region (mask==1), ``alpha`` inside the
    pasted block; ``out``: the complement.
    """
    m = mask.mask if isinstance(mask, MixMask) else np.asarray(mask)
    m = torch.as_tensor(np.ascontiguousarray(m), dtype=torch.get_default_dtype())
    if direction == "in":
        return m + alpha * (1.0 - m)
    if direction == "out":
        return (1.0 - m) + alpha * m
    raise ValidationError(f"direction must be 'in' or 'out', got {direction!r}")


def bcp_loss(pred, mixed_label, mask, alpha, direction):
    """Segmentation loss against a mixed label, weighted by paste direction."""
    return seg_loss(pred, mixed_label, direction_weights(mask, alpha, direction))


def _soft_dice_discrepancy(p, q):
    reduce_dims = (0,) + tuple(range(2, p.dim()))
    num = 2.0 * (p * q).sum(dim=reduce_dims)
    den = (p * p + q * q).sum(dim=reduce_dims)
    dice = (num + DICE_EPS) / (den + DICE_EPS)
    return 1.0 - dice.mean()


def consistency_loss(preds):
    """Soft Dice discrepancy between the raw branch and each frequency branch.

    ``preds`` maps branch names (subset of {'L','M','H'}, 'M' required) to
    batched probability tensors. Absent branches contribute zero; with no
    auxiliary branch at all the loss is zero (with a logged warning).
    """
    if "M" not in preds or preds["M"] is None:
        raise ValidationError("consistency loss requires the raw ('M') branch")
    p_m = torch.as_tensor(preds["M"])
    total = None
    for key in ("L", "H"):
        q = preds.get(key)
        if q is None:
            continue
        q = torch.as_tensor(q)
        if q.shape != p_m.shape:
            raise ValidationError(
                f"branch {key} shape {tuple(q.shape)} != raw branch shape {tuple(p_m.shape)}"
            )
        term = _soft_dice_discrepancy(p_m, q)
        total = term if total is None else total + term
    if total is None:
        log.warning("consistency loss requested with no auxiliary branch; returning 0")
        return p_m.sum() * 0.0
    return total


def total_loss(in_terms, out_terms, con_terms, weights):
    """Sum the supervised direction terms plus weighted consistency terms.

    ``in_terms``/``out_terms`` map branch names to scalar losses;
    ``con_terms`` is one consistency value per input group. Returns the
    scalar plus a float breakdown for logging.
    """
    terms = list(in_terms.values()) + list(out_terms.values()) + list(con_terms)
    for t in terms:
        if not torch.isfinite(torch.as_tensor(t)):
            raise NumericError(
                f"non-finite loss term; in={_floats(in_terms)} out={_floats(out_terms)} "
                f"con={[_float(c) for c in con_terms]}"
            )
    total = sum(in_terms.values()) + sum(out_terms.values())
    for c in con_terms:
        total = total + weights.consistency * c
    breakdown = {
        "loss_in": _floats(in_terms),
        "loss_out": _floats(out_terms),
        "loss_con": [_float(c) for c in con_terms],
        "total": _float(total),
    }
    return total, breakdown


def _float(v):
    return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)


def _floats(d):
    return {k: _float(v) for k, v in d.items()}
