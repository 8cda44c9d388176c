from __future__ import annotations

import math

import numpy as np
import pytest

from segrefine import (
    BinaryMask,
    DimensionMismatchError,
    SoftMask,
    bce_loss,
    dice,
    double_threshold,
    mask_subtract,
)
from segrefine.masks import BCE_EPS, FULL_BCE, ONE_SIDED


def _mask(rows) -> BinaryMask:
    return BinaryMask(np.array(rows, dtype=bool))


def _random_mask(rng, shape=(9, 11)) -> BinaryMask:
    return BinaryMask(rng.random(shape) < rng.uniform(0.05, 0.8))


class TestDice:
    def test_hand_example(self):
        # |A| = 4, |B| = 2, |A and B| = 2  ->  2*2 / (4+2) = 2/3
        a = _mask([[1, 1, 1, 1], [0, 0, 0, 0]])
        b = _mask([[1, 1, 0, 0], [0, 0, 0, 0]])
        assert dice(a, b) == 2.0 / 3.0

    def test_identical_masks_score_one(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m = _random_mask(rng)
            assert dice(m, m) == 1.0

    def test_disjoint_masks_score_zero(self):
        a = _mask([[1, 0], [0, 0]])
        b = _mask([[0, 1], [1, 1]])
        assert dice(a, b) == 0.0

    def test_both_empty_scores_one(self):
        e = BinaryMask.empty(4, 3)
        assert dice(e, e) == 1.0

    def test_empty_vs_nonempty_scores_zero(self):
        e = BinaryMask.empty(2, 2)
        assert dice(e, _mask([[1, 0], [0, 0]])) == 0.0

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a, b = _random_mask(rng), _random_mask(rng)
            d = dice(a, b)
            assert d == dice(b, a)
            assert 0.0 <= d <= 1.0

    def test_shape_mismatch_raises(self):
        with pytest.raises(DimensionMismatchError):
            dice(BinaryMask.empty(3, 3), BinaryMask.empty(4, 3))


class TestDoubleThreshold:
    def test_hand_example(self):
        coarse = SoftMask(np.array([[0.10, 0.50], [0.30, 0.05]]))
        out = double_threshold(coarse, t_min=0.15, alpha=0.4)
        # 0.10 and 0.05 die at the absolute cut; max of survivors is 0.50,
        # relative cut 0.20 keeps 0.50 and 0.30.
        assert out.bits.tolist() == [[False, True], [True, False]]

    def test_all_below_absolute_cut_gives_empty(self):
        coarse = SoftMask(np.full((4, 4), 0.1))
        assert double_threshold(coarse, 0.15, 0.4).is_empty

    def test_value_at_t_min_is_dropped(self):
        coarse = SoftMask(np.array([[0.15, 0.8]]))
        out = double_threshold(coarse, 0.15, 0.4)
        assert out.bits.tolist() == [[False, True]]

    def test_idempotent_on_own_indicator(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            coarse = SoftMask(rng.random((8, 8)))
            first = double_threshold(coarse)
            again = double_threshold(first.to_soft())
            assert np.array_equal(first.bits, again.bits)

    def test_larger_alpha_never_adds_pixels(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            coarse = SoftMask(rng.random((8, 8)))
            loose = double_threshold(coarse, 0.15, 0.3)
            tight = double_threshold(coarse, 0.15, 0.7)
            assert not np.any(tight.bits & ~loose.bits)

    def test_parameter_validation(self):
        coarse = SoftMask(np.full((2, 2), 0.5))
        with pytest.raises(ValueError):
            double_threshold(coarse, t_min=1.0)
        with pytest.raises(ValueError):
            double_threshold(coarse, alpha=0.0)
        with pytest.raises(ValueError):
            double_threshold(coarse, alpha=1.0)


class TestMaskSubtract:
    def test_basic(self):
        a = _mask([[1, 1], [1, 0]])
        b = _mask([[1, 0], [0, 0]])
        assert mask_subtract(a, b).bits.tolist() == [[False, True], [True, False]]

    def test_subtract_self_is_empty(self):
        rng = np.random.default_rng(9)
        m = _random_mask(rng)
        assert mask_subtract(m, m).is_empty

    def test_result_disjoint_from_subtrahend(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            a, b = _random_mask(rng), _random_mask(rng)
            out = mask_subtract(a, b)
            assert not np.any(out.bits & b.bits)
            assert not np.any(out.bits & ~a.bits)


class TestBceLoss:
    def test_uniform_half_gives_ln2(self):
        pred = SoftMask(np.full((5, 7), 0.5))
        rng = np.random.default_rng(1)
        target = _random_mask(rng, (5, 7))
        assert bce_loss(pred, target) == pytest.approx(math.log(2.0), rel=1e-12)

    def test_quarter_against_ones(self):
        pred = SoftMask(np.full((3, 3), 0.25))
        target = BinaryMask(np.ones((3, 3), dtype=bool))
        assert bce_loss(pred, target) == pytest.approx(-math.log(0.25), rel=1e-12)

    def test_exact_match_is_tiny_but_positive(self):
        target = _mask([[1, 0], [0, 1]])
        pred = target.to_soft()
        loss = bce_loss(pred, target)
        assert 0.0 < loss < 1e-6

    def test_one_sided_ignores_background(self):
        pred = SoftMask(np.full((2, 2), 0.9))
        target = BinaryMask.empty(2, 2)
        assert bce_loss(pred, target, ONE_SIDED) == 0.0
        assert bce_loss(pred, target, FULL_BCE) > 0.0

    def test_one_sided_never_exceeds_full(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            pred = SoftMask(rng.random((6, 6)))
            target = _random_mask(rng, (6, 6))
            assert bce_loss(pred, target, ONE_SIDED) <= bce_loss(pred, target, FULL_BCE)

    def test_clamp_keeps_hard_predictions_finite(self):
        pred = SoftMask(np.array([[0.0, 1.0]]))
        target = _mask([[1, 0]])
        loss = bce_loss(pred, target)
        assert np.isfinite(loss)
        assert loss == pytest.approx(-math.log(BCE_EPS), rel=1e-6)

    def test_unknown_kind_raises(self):
        with pytest.raises(ValueError):
            bce_loss(SoftMask(np.full((2, 2), 0.5)), BinaryMask.empty(2, 2), "huber")


class TestTypes:
    def test_soft_mask_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            SoftMask(np.array([[0.5, 1.5]]))
        with pytest.raises(ValueError):
            SoftMask(np.array([[-0.1, 0.5]]))

    def test_soft_mask_rejects_nan(self):
        with pytest.raises(ValueError):
            SoftMask(np.array([[np.nan, 0.5]]))

    def test_values_are_immutable(self):
        m = SoftMask(np.full((2, 2), 0.5))
        with pytest.raises(ValueError):
            m.values[0, 0] = 0.9

    def test_construction_copies_input(self):
        src = np.full((2, 2), 0.5)
        m = SoftMask(src)
        src[0, 0] = 1.0
        assert m.values[0, 0] == 0.5

    def test_binarize_is_strict(self):
        m = SoftMask(np.array([[0.5, 0.51]]))
        assert m.binarize(0.5).bits.tolist() == [[False, True]]

    def test_shapes(self):
        m = BinaryMask.empty(5, 3)
        assert (m.width, m.height) == (5, 3)
        assert m.bits.shape == (3, 5)
