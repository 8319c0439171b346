"""Mask geometry and copy-paste identities, checked by enumeration."""

import numpy as np
import pytest

from waveseg.errors import ConfigError, ShapeError, ValidationError
from waveseg.mixing import generate_mask, mix, mix_labels, mix_pair


def test_zero_block_counts_6x6(rng):
    # floor(2/3 * 6) = 4 per dim -> 16 zeros, 20 ones, counted directly.
    m = generate_mask((6, 6), 2 / 3, rng)
    assert int((m.mask == 0).sum()) == 16
    assert int((m.mask == 1).sum()) == 20
    assert m.crop_size == (4, 4)


def test_full_ratio_gives_all_zero_mask(rng):
    m = generate_mask((5, 7), 1.0, rng)
    assert m.crop_offset == (0, 0)
    assert not m.mask.any()


def test_volumetric_block_size(rng):
    # floor-arithmetic on the 3D crop used for volumetric training patches.
    m = generate_mask((112, 112, 80), 2 / 3, rng)
    assert m.crop_size == (74, 74, 53)
    assert int((m.mask == 0).sum()) == 74 * 74 * 53


def test_zero_block_counts_random_shapes(rng):
    # 20 random (shape, ratio) combinations, zero count enumerated exactly.
    for _ in range(20):
        rank = int(rng.integers(2, 4))
        shape = tuple(int(rng.integers(4, 30)) for _ in range(rank))
        ratio = float(rng.uniform(0.3, 1.0))
        m = generate_mask(shape, ratio, rng)
        expected = int(np.prod([int(np.floor(ratio * n)) for n in shape]))
        assert int((m.mask == 0).sum()) == expected
        assert set(np.unique(m.mask)) <= {0, 1}


def test_zero_block_is_single_slab(rng):
    m = generate_mask((9, 11), 0.5, rng)
    block = tuple(slice(o, o + s) for o, s in zip(m.crop_offset, m.crop_size))
    inside = np.zeros_like(m.mask, dtype=bool)
    inside[block] = True
    assert not m.mask[inside].any()
    assert m.mask[~inside].all()


@pytest.mark.parametrize("ratio", [0.0, -0.1, 1.5])
def test_bad_ratio_rejected(ratio, rng):
    with pytest.raises(ConfigError):
        generate_mask((8, 8), ratio, rng)


def test_tiny_block_rejected(rng):
    with pytest.raises(ConfigError):
        generate_mask((8, 8), 0.05, rng)  # floor(0.4) = 0


class TestMix:
    def test_all_ones_mask_returns_foreground(self, rng):
        fg = rng.normal(size=(1, 6, 6)).astype(np.float32)
        bg = rng.normal(size=(1, 6, 6)).astype(np.float32)
        m = generate_mask((6, 6), 0.5, rng)
        m.mask[:] = 1
        np.testing.assert_array_equal(mix(fg, bg, m), fg)

    def test_identical_sources(self, rng):
        fg = rng.normal(size=(1, 6, 6))
        m = generate_mask((6, 6), 0.5, rng)
        np.testing.assert_array_equal(mix(fg, fg, m), fg)

    def test_block_selection_by_enumeration(self, rng):
        fg = rng.normal(size=(6, 6))
        bg = rng.normal(size=(6, 6))
        m = generate_mask((6, 6), 0.5, rng)
        out = mix(fg, bg, m)
        for i in range(6):
            for j in range(6):
                expected = bg[i, j] if m.mask[i, j] == 0 else fg[i, j]
                assert out[i, j] == expected

    def test_swap_sum_identity(self, rng):
        a = rng.normal(size=(2, 8, 8))
        b = rng.normal(size=(2, 8, 8))
        m = generate_mask((8, 8), 2 / 3, rng)
        np.testing.assert_allclose(mix(a, b, m) + mix(b, a, m), a + b, atol=1e-12)

    def test_idempotent_in_mask(self, rng):
        fg = rng.normal(size=(1, 8, 8))
        bg = rng.normal(size=(1, 8, 8))
        m = generate_mask((8, 8), 0.5, rng)
        once = mix(fg, bg, m)
        np.testing.assert_array_equal(mix(fg, once, m), once)

    def test_shape_mismatch(self, rng):
        m = generate_mask((8, 8), 0.5, rng)
        with pytest.raises(ShapeError):
            mix(np.zeros((1, 8, 8)), np.zeros((1, 8, 9)), m)
        with pytest.raises(ShapeError):
            mix(np.zeros((1, 6, 6)), np.zeros((1, 6, 6)), m)


class TestMixPair:
    def _arrs(self, rng):
        return [rng.normal(size=(1, 8, 8)).astype(np.float32) for _ in range(4)]

    def test_all_ones_mask(self, rng):
        x_l_i, x_l_j, x_u_p, x_u_q = self._arrs(rng)
        m = generate_mask((8, 8), 0.5, rng)
        m.mask[:] = 1
        x_in, x_out = mix_pair((x_l_i, x_l_j), (x_u_p, x_u_q), m)
        np.testing.assert_array_equal(x_in, x_l_j)
        np.testing.assert_array_equal(x_out, x_u_q)

    def test_all_zeros_mask(self, rng):
        x_l_i, x_l_j, x_u_p, x_u_q = self._arrs(rng)
        m = generate_mask((8, 8), 1.0, rng)
        x_in, x_out = mix_pair((x_l_i, x_l_j), (x_u_p, x_u_q), m)
        np.testing.assert_array_equal(x_in, x_u_p)
        np.testing.assert_array_equal(x_out, x_l_i)

    def test_voxel_accounting(self, rng):
        # In x_in, exactly (# zeros of the mask) voxels come from x_u_p.
        x_l_i, x_l_j, x_u_p, x_u_q = self._arrs(rng)
        m = generate_mask((8, 8), 2 / 3, rng)
        x_in, _ = mix_pair((x_l_i, x_l_j), (x_u_p, x_u_q), m)
        from_unlabeled = int((x_in == x_u_p).sum())
        assert from_unlabeled == int((m.mask == 0).sum())


class TestMixLabels:
    def test_equal_inputs_any_mask(self, rng):
        y = rng.integers(0, 4, size=(8, 8)).astype(np.uint8)
        m = generate_mask((8, 8), 0.5, rng)
        np.testing.assert_array_equal(mix_labels(y, y, m, "in"), y)
        np.testing.assert_array_equal(mix_labels(y, y, m, "out"), y)

    def test_in_direction_all_ones(self, rng):
        y = rng.integers(0, 4, size=(8, 8)).astype(np.uint8)
        p = rng.integers(0, 4, size=(8, 8)).astype(np.uint8)
        m = generate_mask((8, 8), 0.5, rng)
        m.mask[:] = 1
        np.testing.assert_array_equal(mix_labels(y, p, m, "in"), y)

    def test_out_direction_swaps_roles(self, rng):
        y = rng.integers(0, 4, size=(8, 8)).astype(np.uint8)
        p = rng.integers(0, 4, size=(8, 8)).astype(np.uint8)
        m = generate_mask((8, 8), 0.5, rng)
        out = mix_labels(y, p, m, "out")
        np.testing.assert_array_equal(out[m.mask == 1], p[m.mask == 1])
        np.testing.assert_array_equal(out[m.mask == 0], y[m.mask == 0])

    def test_values_subset_of_inputs(self, rng):
        y = rng.integers(0, 3, size=(8, 8)).astype(np.uint8)
        p = rng.integers(2, 5, size=(8, 8)).astype(np.uint8)
        m = generate_mask((8, 8), 0.5, rng)
        out = mix_labels(y, p, m, "in")
        assert set(np.unique(out)) <= set(np.unique(y)) | set(np.unique(p))

    def test_probability_input_rejected(self, rng):
        y = np.zeros((8, 8), dtype=np.uint8)
        probs = np.random.default_rng(0).random((8, 8))
        m = generate_mask((8, 8), 0.5, rng)
        with pytest.raises(ValidationError):
            mix_labels(y, probs, m, "in")

    def test_bad_direction(self, rng):
        y = np.zeros((8, 8), dtype=np.uint8)
        m = generate_mask((8, 8), 0.5, rng)
        with pytest.raises(ConfigError):
            mix_labels(y, y, m, "sideways")
