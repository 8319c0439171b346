"""Zero-block masks and bidirectional copy-paste of images and labels.

A mask is 1 on the kept background and 0 on a single axis-aligned block of
per-dim size floor(ratio * dim), placed uniformly at random. Mixing is
plain element-wise selection, so it applies unchanged to intensity images,
integer label maps and pseudo-labels.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, ValidationError


@dataclass
class MixMask:
    """Binary spatial mask (1 = keep foreground source, 0 = paste region)."""

    mask: np.ndarray
    ratio: float
    crop_offset: tuple
    crop_size: tuple

    @property
    def spatial_shape(self):
        return self.mask.shape

    def complement(self):
        return MixMask(
            mask=np.ascontiguousarray(1 - self.mask),
            ratio=self.ratio,
            crop_offset=self.crop_offset,
            crop_size=self.crop_size,
        )


def generate_mask(shape, ratio, rng):
    """Mask over ``shape`` with a zero block of floor(ratio * dim) per dim."""
    shape = tuple(int(n) for n in shape)
    if not 0.0 < ratio <= 1.0:
        raise ConfigError(f"mask ratio must be in (0, 1], got {ratio}")
    block = tuple(int(np.floor(ratio * n)) for n in shape)
    if any(b < 1 for b in block):
        raise ConfigError(f"ratio {ratio} yields an empty block for shape {shape}")
    offset = tuple(int(rng.integers(0, n - b + 1)) for n, b in zip(shape, block))
    mask = np.ones(shape, dtype=np.uint8)
    mask[tuple(slice(o, o + b) for o, b in zip(offset, block))] = 0
    return MixMask(mask=mask, ratio=float(ratio), crop_offset=offset, crop_size=block)


def _check_spatial(data, mask):
    if data.shape[-mask.mask.ndim:] != mask.spatial_shape:
        raise ShapeError(
            f"volume spatial shape {data.shape[-mask.mask.ndim:]} != mask shape {mask.spatial_shape}"
        )


def mix(foreground, background, mask):
    """``foreground`` where mask==1, ``background`` where mask==0.

    Dtypes are preserved exactly (selection, not arithmetic blending).
    """
    fg = np.asarray(foreground)
    bg = np.asarray(background)
    if fg.shape != bg.shape:
        raise ShapeError(f"foreground shape {fg.shape} != background shape {bg.shape}")
    _check_spatial(fg, mask)
    return np.where(mask.mask.astype(bool), fg, bg)


def mix_pair(labeled_pair, unlabeled_pair, mask):
    """Bidirectional mix of two labeled and two unlabeled images.

    Inward keeps the second labeled image outside the block and pastes the
    first unlabeled one inside; outward does the opposite. Returns
    ``(x_in, x_out)``.
    """
    x_l_i, x_l_j = labeled_pair
    x_u_p, x_u_q = unlabeled_pair
    x_in = mix(x_l_j, x_u_p, mask)
    x_out = mix(x_u_q, x_l_i, mask)
    return x_in, x_out


def mix_labels(labels, pseudo, mask, direction):
    """Mix ground-truth labels with hardened pseudo-labels.

    ``direction='in'``: labels outside the block, pseudo inside.
    ``direction='out'``: pseudo outside the block, labels inside the kept
    region's complement (mask roles swapped).
    """
    labels = np.asarray(labels)
    pseudo = np.asarray(pseudo)
    for name, arr in (("labels", labels), ("pseudo", pseudo)):
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValidationError(
                f"{name} must be an integer label map, got dtype {arr.dtype}; "
                "argmax-harden probabilities first"
            )
    if direction == "in":
        return mix(labels, pseudo, mask)
    if direction == "out":
        return mix(labels, pseudo, mask.complement())
    raise ConfigError(f"direction must be 'in' or 'out', got {direction!r}")
