"""Manifest round-trips, synthetic generation, splits and crops."""

import json

import numpy as np
import pytest

from waveseg.data import (
    Dataset,
    Sample,
    Volume,
    generate_synthetic,
    load_dataset,
    minmax_scale,
    random_crop,
    save_dataset,
    split_labeled,
)
from waveseg.errors import (
    ConfigError,
    DataLoadError,
    FormatError,
    ShapeError,
    ValidationError,
)
from waveseg.metrics import dice


def _tiny_dataset(n_labeled=2, n_unlabeled=3, shape=(12, 12), num_classes=3, seed=0):
    ds = generate_synthetic(n_labeled + n_unlabeled, (16, 16), num_classes, seed)
    samples = [
        Sample(id=s.id, image=s.image, label=s.label if i < n_labeled else None)
        for i, s in enumerate(ds.samples)
    ]
    return Dataset(samples=samples, num_classes=num_classes)


class TestManifestRoundTrip:
    def test_counts_preserved(self, tmp_path):
        ds = _tiny_dataset(2, 3)
        save_dataset(ds, tmp_path / "m")
        loaded = load_dataset(tmp_path / "m")
        assert len(loaded.labeled_indices) == 2
        assert len(loaded.unlabeled_indices) == 3

    def test_bit_identical_volumes(self, tmp_path):
        ds = _tiny_dataset()
        save_dataset(ds, tmp_path / "m")
        loaded = load_dataset(tmp_path / "m")
        for orig, back in zip(ds.samples, loaded.samples):
            np.testing.assert_array_equal(orig.image.data, back.image.data)
            if orig.label is not None:
                np.testing.assert_array_equal(orig.label.data, back.label.data)
            else:
                assert back.label is None

    def test_sample_order_sorted_by_id(self, tmp_path):
        ds = _tiny_dataset()
        ds.samples.reverse()
        save_dataset(ds, tmp_path / "m")
        loaded = load_dataset(tmp_path / "m")
        ids = [s.id for s in loaded.samples]
        assert ids == sorted(ids)

    def test_truncated_blob_is_format_error(self, tmp_path):
        ds = _tiny_dataset()
        save_dataset(ds, tmp_path / "m")
        blob = next((tmp_path / "m").glob("*_image.raw"))
        blob.write_bytes(blob.read_bytes()[:-1])
        with pytest.raises(FormatError):
            load_dataset(tmp_path / "m")

    def test_missing_blob_names_sample(self, tmp_path):
        ds = _tiny_dataset()
        save_dataset(ds, tmp_path / "m")
        (tmp_path / "m" / "0001_image.raw").unlink()
        with pytest.raises(DataLoadError, match="0001"):
            load_dataset(tmp_path / "m")

    def test_label_out_of_range_is_validation_error(self, tmp_path):
        ds = _tiny_dataset(num_classes=3)
        save_dataset(ds, tmp_path / "m")
        blob = next((tmp_path / "m").glob("*_label.raw"))
        raw = bytearray(blob.read_bytes())
        raw[0] = 3  # == num_classes
        blob.write_bytes(bytes(raw))
        with pytest.raises(ValidationError):
            load_dataset(tmp_path / "m")

    def test_bad_index_json(self, tmp_path):
        ds = _tiny_dataset()
        save_dataset(ds, tmp_path / "m")
        (tmp_path / "m" / "index.json").write_text("{not json")
        with pytest.raises(FormatError):
            load_dataset(tmp_path / "m")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataLoadError):
            load_dataset(tmp_path / "nowhere")

    def test_normalize_scales_to_unit_interval(self, tmp_path):
        img = np.linspace(-5, 5, 64, dtype=np.float32).reshape(1, 8, 8)
        ds = Dataset(
            samples=[Sample(id="a", image=Volume(img, kind="image"))], num_classes=2
        )
        save_dataset(ds, tmp_path / "m")
        loaded = load_dataset(tmp_path / "m", normalize=True)
        data = loaded.samples[0].image.data
        assert data.min() == 0.0 and data.max() == 1.0


class TestSynthetic:
    def test_deterministic(self):
        a = generate_synthetic(4, (32, 32), 4, seed=7)
        b = generate_synthetic(4, (32, 32), 4, seed=7)
        for sa, sb in zip(a.samples, b.samples):
            np.testing.assert_array_equal(sa.image.data, sb.image.data)
            np.testing.assert_array_equal(sa.label.data, sb.label.data)

    def test_all_classes_present(self):
        ds = generate_synthetic(10, (64, 64), 4, seed=7)
        for s in ds.samples:
            assert set(np.unique(s.label.data)) == {0, 1, 2, 3}

    def test_label_self_dice_is_100(self):
        ds = generate_synthetic(2, (32, 32), 4, seed=3)
        lab = ds.samples[0].label.data[0]
        for cls in range(1, 4):
            assert dice(lab == cls, lab == cls) == 100.0

    def test_3d_generation(self):
        ds = generate_synthetic(2, (16, 16, 16), 3, seed=1)
        assert ds.samples[0].image.data.shape == (1, 16, 16, 16)
        assert ds.samples[0].image.data.dtype == np.float32
        assert ds.samples[0].label.data.dtype == np.uint8

    def test_image_range(self):
        ds = generate_synthetic(3, (32, 32), 3, seed=9)
        for s in ds.samples:
            assert s.image.data.min() >= 0.0
            assert s.image.data.max() <= 1.0

    def test_too_small_shape(self):
        with pytest.raises(ConfigError):
            generate_synthetic(1, (8, 8), 3, seed=0)

    def test_bad_class_count(self):
        with pytest.raises(ConfigError):
            generate_synthetic(1, (32, 32), 1, seed=0)


class TestSplit:
    def test_paper_ratio_70_at_10_percent(self):
        ds = generate_synthetic(70, (16, 16), 2, seed=0)
        split = split_labeled(ds, 0.10, seed=1)
        assert len(split.labeled_indices) == 7
        assert len(split.unlabeled_indices) == 63

    def test_100_at_5_percent(self):
        ds = generate_synthetic(100, (16, 16), 2, seed=0)
        split = split_labeled(ds, 0.05, seed=1)
        assert len(split.labeled_indices) == 5

    def test_floor_of_one(self):
        ds = generate_synthetic(5, (16, 16), 2, seed=0)
        split = split_labeled(ds, 0.01, seed=1)
        assert len(split.labeled_indices) == 1

    def test_deterministic(self):
        ds = generate_synthetic(20, (16, 16), 2, seed=0)
        a = split_labeled(ds, 0.3, seed=5)
        b = split_labeled(ds, 0.3, seed=5)
        assert a.labeled_indices == b.labeled_indices

    def test_partition(self):
        ds = generate_synthetic(11, (16, 16), 2, seed=0)
        split = split_labeled(ds, 0.4, seed=2)
        lab, unlab = set(split.labeled_indices), set(split.unlabeled_indices)
        assert lab.isdisjoint(unlab)
        assert lab | unlab == set(range(11))

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2, 1.5])
    def test_bad_fraction(self, fraction):
        ds = generate_synthetic(4, (16, 16), 2, seed=0)
        with pytest.raises(ConfigError):
            split_labeled(ds, fraction, seed=0)


class TestRandomCrop:
    def test_full_patch_is_identity(self, rng):
        ds = generate_synthetic(1, (24, 24), 3, seed=0)
        s = ds.samples[0]
        img, lab = random_crop(s.image, s.label, (24, 24), rng)
        np.testing.assert_array_equal(img.data, s.image.data)
        np.testing.assert_array_equal(lab.data, s.label.data)

    def test_output_shape(self, rng):
        ds = generate_synthetic(1, (32, 32), 3, seed=0)
        s = ds.samples[0]
        img, lab = random_crop(s.image, s.label, (16, 20), rng)
        assert img.data.shape == (1, 16, 20)
        assert lab.data.shape == (1, 16, 20)

    def test_label_values_subset(self, rng):
        ds = generate_synthetic(1, (32, 32), 4, seed=0)
        s = ds.samples[0]
        for _ in range(10):
            _, lab = random_crop(s.image, s.label, (8, 8), rng)
            assert set(np.unique(lab.data)) <= set(np.unique(s.label.data))

    def test_oversized_patch(self, rng):
        ds = generate_synthetic(1, (16, 16), 2, seed=0)
        s = ds.samples[0]
        with pytest.raises(ShapeError):
            random_crop(s.image, s.label, (32, 16), rng)


def test_minmax_constant_volume():
    np.testing.assert_array_equal(minmax_scale(np.full((1, 4, 4), 9.0)), 0.0)


def test_manifest_index_content(tmp_path):
    ds = _tiny_dataset(1, 1)
    save_dataset(ds, tmp_path / "m")
    index = json.loads((tmp_path / "m" / "index.json").read_text())
    assert index["num_classes"] == 3
    assert index["spatial_rank"] == 2
    rec = index["samples"][0]
    assert rec["labeled"] is True
    assert rec["volumes"]["image"]["dtype"] == "<f4"
    assert rec["volumes"]["label"]["dtype"] == "|u1"
