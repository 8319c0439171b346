"""Data model, manifest on-disk format, synthetic data, splits and crops.

A dataset lives in a directory holding one ``index.json`` plus one raw
little-endian blob per volume (float32 for images/probabilities, uint8 for
labels). The format is deliberately trivial so round-trips are bit-exact;
converters from medical imaging containers are an extension point, not core.

Images are stored as-is. Min-max scaling to [0, 1] is available at load
time (``normalize=True``, what the training pipeline uses); it is off by
default so that write/load round-trips preserve bytes.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataLoadError, FormatError, ShapeError, ValidationError

MANIFEST_NAME = "index.json"
MANIFEST_FORMAT = "waveseg-manifest"

KIND_DTYPES = {"image": "<f4", "label": "|u1", "probability": "<f4"}


@dataclass
class Volume:
    """Dense (C, *spatial) array tagged with what its values mean."""

    data: np.ndarray
    kind: str = "image"

    def __post_init__(self):
        if self.kind not in KIND_DTYPES:
            raise ValidationError(f"unknown volume kind {self.kind!r}")
        self.data = np.asarray(self.data)
        if self.data.ndim not in (3, 4):
            raise ShapeError(
                f"volume must be (C, H, W) or (C, D, H, W), got {self.data.shape}"
            )

    @property
    def spatial_shape(self):
        return self.data.shape[1:]

    @property
    def rank(self):
        return self.data.ndim - 1


@dataclass
class Sample:
    id: str
    image: Volume
    label: Volume | None = None


@dataclass
class Dataset:
    samples: list
    num_classes: int
    labeled_indices: list = field(default_factory=list)
    unlabeled_indices: list = field(default_factory=list)

    def __post_init__(self):
        if not self.labeled_indices and not self.unlabeled_indices:
            self.labeled_indices = [i for i, s in enumerate(self.samples) if s.label is not None]
            self.unlabeled_indices = [i for i, s in enumerate(self.samples) if s.label is None]
        covered = sorted(self.labeled_indices) + sorted(self.unlabeled_indices)
        if sorted(covered) != list(range(len(self.samples))):
            raise ValidationError("labeled/unlabeled indices must partition the sample list")
        for i in self.labeled_indices:
            if self.samples[i].label is None:
                raise ValidationError(f"sample {self.samples[i].id!r} marked labeled but has no label")

    def __len__(self):
        return len(self.samples)

    @property
    def spatial_rank(self):
        return self.samples[0].image.rank if self.samples else 0


def validate_label_volume(vol, num_classes, sample_id=""):
    data = vol.data
    if not np.issubdtype(data.dtype, np.integer):
        raise ValidationError(f"label volume {sample_id!r} has non-integer dtype {data.dtype}")
    if data.size and (data.min() < 0 or data.max() >= num_classes):
        raise ValidationError(
            f"label volume {sample_id!r} contains values outside [0, {num_classes - 1}]"
        )


def minmax_scale(data):
    """Scale to [0, 1]; constant volumes map to zeros."""
    lo = float(data.min())
    hi = float(data.max())
    if hi <= lo:
        return np.zeros_like(data, dtype=np.float32)
    return ((data - lo) / (hi - lo)).astype(np.float32)


# ---------------------------------------------------------------------------
# Manifest IO
# ---------------------------------------------------------------------------


def _volume_record(rel_path, vol):
    return {
        "path": rel_path,
        "shape": list(vol.data.shape),
        "dtype": KIND_DTYPES[vol.kind],
        "kind": vol.kind,
    }


def write_manifest(directory, samples_volumes, num_classes, spatial_rank, extra=None):
    """Write ``{sample_id: {role: Volume}}`` entries as a manifest directory.

    Blob files are named ``<id>_<role>.raw``. Returns the index path.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = []
    for sample_id, volumes in samples_volumes:
        rec = {"id": sample_id, "labeled": "label" in volumes, "volumes": {}}
        for role, vol in volumes.items():
            rel = f"{sample_id}_{role}.raw"
            blob = np.ascontiguousarray(vol.data).astype(KIND_DTYPES[vol.kind])
            (directory / rel).write_bytes(blob.tobytes())
            rec["volumes"][role] = _volume_record(rel, vol)
        records.append(rec)
    index = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "num_classes": int(num_classes),
        "spatial_rank": int(spatial_rank),
        "samples": sorted(records, key=lambda r: r["id"]),
    }
    if extra:
        index.update(extra)
    index_path = directory / MANIFEST_NAME
    index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return index_path


def save_dataset(dataset, directory):
    entries = []
    for sample in dataset.samples:
        volumes = {"image": sample.image}
        if sample.label is not None:
            volumes["label"] = sample.label
        entries.append((sample.id, volumes))
    return write_manifest(directory, entries, dataset.num_classes, dataset.spatial_rank)


def read_index(manifest_path):
    path = Path(manifest_path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise DataLoadError(f"manifest index not found: {path}")
    try:
        index = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest index {path} is not valid JSON: {exc}") from exc
    if index.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{path}: unexpected manifest format {index.get('format')!r}")
    return index, path.parent


def _load_blob(directory, record, sample_id):
    blob_path = directory / record["path"]
    if not blob_path.exists():
        raise DataLoadError(f"sample {sample_id!r}: missing blob {record['path']}")
    dtype = np.dtype(record["dtype"])
    shape = tuple(record["shape"])
    raw = blob_path.read_bytes()
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise FormatError(
            f"sample {sample_id!r}: blob {record['path']} has {len(raw)} bytes, "
            f"expected {expected} for shape {shape} dtype {record['dtype']}"
        )
    data = np.frombuffer(raw, dtype=dtype).reshape(shape)
    return Volume(data=data.copy(), kind=record["kind"])


def load_volumes(manifest_path):
    """Load every sample's role->Volume mapping, sorted by id."""
    index, directory = read_index(manifest_path)
    out = []
    for rec in sorted(index["samples"], key=lambda r: r["id"]):
        volumes = {
            role: _load_blob(directory, vrec, rec["id"])
            for role, vrec in rec["volumes"].items()
        }
        out.append((rec["id"], volumes))
    return index, out


def load_dataset(manifest_path, normalize=False):
    """Load a manifest directory as a :class:`Dataset`.

    ``normalize=True`` applies per-volume min-max scaling to images (the
    package's only intensity normalization).
    """
    index, entries = load_volumes(manifest_path)
    num_classes = int(index["num_classes"])
    samples = []
    for sample_id, volumes in entries:
        if "image" not in volumes:
            raise FormatError(f"sample {sample_id!r} has no image volume")
        image = volumes["image"]
        if normalize:
            image = Volume(minmax_scale(image.data), kind="image")
        label = volumes.get("label")
        if label is not None:
            validate_label_volume(label, num_classes, sample_id)
            if label.spatial_shape != image.spatial_shape:
                raise ShapeError(
                    f"sample {sample_id!r}: label shape {label.spatial_shape} "
                    f"!= image shape {image.spatial_shape}"
                )
        samples.append(Sample(id=sample_id, image=image, label=label))
    return Dataset(samples=samples, num_classes=num_classes)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def _smooth_field(shape, rng):
    """Band-limited background: coarse noise upsampled to full resolution."""
    coarse = tuple(max(2, n // 8) for n in shape)
    field = rng.standard_normal(coarse)
    zoom = [n / c for n, c in zip(shape, coarse)]
    field = ndimage.zoom(field, zoom, order=3)[tuple(slice(0, n) for n in shape)]
    peak = np.abs(field).max()
    return field / peak if peak > 0 else field


def _ellipse_mask(shape, center, semiaxes):
    grids = np.ogrid[tuple(slice(0, n) for n in shape)]
    acc = np.zeros(shape)
    for g, c, a in zip(grids, center, semiaxes):
        acc = acc + ((g - c) / a) ** 2
    return acc <= 1.0


def generate_synthetic(count, shape, num_classes, seed):
    """Deterministic synthetic segmentation dataset.

    Each image is smooth background noise plus ``num_classes - 1`` ellipses
    (2D) or ellipsoids (3D), one per foreground class, each in its own
    intensity band with per-sample jitter; the label map is the exact
    rasterization. Gaussian noise (sigma = 5% of the intensity range) keeps
    the high-frequency wavelet bands non-degenerate.
    """
    shape = tuple(int(n) for n in shape)
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if len(shape) not in (2, 3):
        raise ConfigError(f"shape must be rank 2 or 3, got {shape}")
    if min(shape) < 16:
        raise ConfigError(f"shape {shape} too small to fit ellipses (min dim 16)")
    if count < 1:
        raise ConfigError("count must be positive")

    rng = np.random.default_rng(seed)
    # Evenly spaced band centers; foreground classes sit above the background.
    band = np.linspace(0.15, 0.85, num_classes)
    samples = []
    for i in range(count):
        image = 0.15 + 0.08 * _smooth_field(shape, rng)
        label = np.zeros(shape, dtype=np.uint8)
        for cls in range(1, num_classes):
            semiaxes = [rng.uniform(0.08, 0.18) * n for n in shape]
            semiaxes = [max(2.0, a) for a in semiaxes]
            placed = None
            for _ in range(200):
                center = [rng.uniform(a, n - 1 - a) for a, n in zip(semiaxes, shape)]
                mask = _ellipse_mask(shape, center, semiaxes)
                if not (mask & (label > 0)).any():
                    placed = mask
                    break
            if placed is None:
                placed = mask  # crowded: allow overlap, later class wins
            label[placed] = cls
            image[placed] = band[cls] + rng.uniform(-0.05, 0.05)
        image = image + rng.normal(0.0, 0.05, size=shape)
        image = np.clip(image, 0.0, 1.0).astype(np.float32)
        samples.append(
            Sample(
                id=f"{i:04d}",
                image=Volume(image[np.newaxis], kind="image"),
                label=Volume(label[np.newaxis], kind="label"),
            )
        )
    return Dataset(samples=samples, num_classes=num_classes)


def split_labeled(dataset, labeled_fraction, seed):
    """Keep a deterministic fraction of samples labeled, strip the rest.

    The labeled count is round-half-up with a floor of one sample.
    """
    if not 0.0 < labeled_fraction < 1.0:
        raise ConfigError(f"labeled_fraction must be in (0, 1), got {labeled_fraction}")
    for sample in dataset.samples:
        if sample.label is None:
            raise ValidationError("split_labeled expects a fully labeled dataset")
    n = len(dataset)
    n_labeled = max(1, int(np.floor(n * labeled_fraction + 0.5)))
    rng = np.random.default_rng(seed)
    chosen = set(rng.permutation(n)[:n_labeled].tolist())
    samples = [
        Sample(id=s.id, image=s.image, label=s.label if i in chosen else None)
        for i, s in enumerate(dataset.samples)
    ]
    return Dataset(samples=samples, num_classes=dataset.num_classes)


def random_crop(image, label, patch, rng):
    """Aligned random crop of an image (and optional label) volume."""
    patch = tuple(int(p) for p in patch)
    spatial = image.spatial_shape
    if len(patch) != len(spatial):
        raise ShapeError(f"patch rank {len(patch)} != volume rank {len(spatial)}")
    if any(p > n for p, n in zip(patch, spatial)):
        raise ShapeError(f"patch {patch} exceeds volume shape {spatial}")
    offsets = tuple(int(rng.integers(0, n - p + 1)) for p, n in zip(patch, spatial))
    sl = (slice(None),) + tuple(slice(o, o + p) for o, p in zip(offsets, patch))
    cropped_image = Volume(image.data[sl].copy(), kind=image.kind)
    cropped_label = None
    if label is not None:
        if label.spatial_shape != spatial:
            raise ShapeError("image and label spatial shapes differ")
        cropped_label = Volume(label.data[sl].copy(), kind=label.kind)
    return cropped_image, cropped_label
