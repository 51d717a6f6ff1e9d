import math

import numpy as np
import pytest

from geomshot.errors import DegenerateHand, InvalidKeypoints
from geomshot.geometry import (
    FINGERTIPS,
    SimilarityTransform,
    apply_transform,
    joint_angles,
    max_pairwise_distance,
    random_transform,
    raw_angle_features,
    raw_features,
    scale_normalize,
    triplet_table,
    wrist_center,
)
from conftest import random_hand


def scalar_raw_oracle(points):
    """Independent pure-Python re-implementation of the raw features."""
    centred = [[points[i][k] - points[0][k] for k in range(3)] for i in range(21)]
    best = 0.0
    for j in range(21):
        for k in range(21):
            d = math.sqrt(sum((centred[j][a] - centred[k][a]) ** 2 for a in range(3)))
            best = max(best, d)
    flat = []
    for i in range(21):
        for k in range(3):
            flat.append(centred[i][k] / best)
    return flat


class TestWristCenter:
    def test_constant_hand_maps_to_zero(self):
        h = np.full((21, 3), (3.0, 4.0, 5.0))
        assert np.array_equal(wrist_center(h), np.zeros((21, 3)))

    def test_direct_subtraction(self):
        h = np.zeros((21, 3))
        h[0] = (1, 1, 1)
        h[5] = (2, 3, 4)
        out = wrist_center(h)
        assert np.array_equal(out[5], (1, 2, 3))
        assert np.array_equal(out[0], (0, 0, 0))

    def test_idempotent(self):
        h = random_hand(np.random.default_rng(0))
        once = wrist_center(h)
        assert np.array_equal(wrist_center(once), once)

    def test_non_finite_rejected(self):
        h = np.zeros((21, 3))
        h[3, 1] = np.nan
        with pytest.raises(InvalidKeypoints):
            wrist_center(h)

    def test_wrong_shape_rejected(self):
        with pytest.raises(InvalidKeypoints):
            wrist_center(np.zeros((20, 3)))


class TestScaleNormalize:
    def test_divides_by_max_distance(self):
        h = np.zeros((21, 3))
        h[1] = (4.0, 0.0, 0.0)  # two clusters at distance 4
        h[2:] = (2.0, 0.0, 0.0)  # interior
        out = scale_normalize(h)
        assert np.allclose(out, h / 4.0)

    def test_output_extent_is_one(self):
        h = wrist_center(random_hand(np.random.default_rng(1)))
        assert abs(max_pairwise_distance(scale_normalize(h)) - 1.0) <= 1e-12

    def test_scale_cancels(self):
        h = wrist_center(random_hand(np.random.default_rng(2)))
        for s in (0.001, 3.0, 1e4):
            assert np.allclose(scale_normalize(s * h), scale_normalize(h), atol=1e-12)

    def test_coincident_points_degenerate(self):
        with pytest.raises(DegenerateHand):
            scale_normalize(np.zeros((21, 3)))


class TestRawFeatures:
    def test_wrist_block_is_zero(self):
        vec = raw_features(random_hand(np.random.default_rng(3))).values
        assert np.array_equal(vec[:3], (0, 0, 0))

    def test_matches_scalar_oracle_on_segment_hand(self):
        # keypoints spread along a unit segment
        h = np.zeros((21, 3))
        h[:, 0] = np.linspace(0.3, 1.3, 21)
        h[:, 1] = 0.25
        vec = raw_features(h).values
        assert np.allclose(vec, scalar_raw_oracle(h.tolist()), atol=1e-12)

    def test_matches_scalar_oracle_on_random_hand(self):
        h = random_hand(np.random.default_rng(4))
        assert np.allclose(raw_features(h).values, scalar_raw_oracle(h.tolist()), atol=1e-12)

    def test_not_rotation_invariant(self):
        h = random_hand(np.random.default_rng(5))
        t = random_transform(123)
        rotated = SimilarityTransform(t.rotation, 1.0, np.zeros(3))
        diff = np.abs(raw_features(apply_transform(h, rotated)).values - raw_features(h).values)
        assert diff.max() > 1e-6

    def test_translation_and_scale_invariant(self):
        h = random_hand(np.random.default_rng(6))
        shifted = h + np.array([4.0, -2.0, 9.0])
        assert np.allclose(raw_features(shifted).values, raw_features(h).values, atol=1e-12)
        assert np.allclose(raw_features(7.5 * h).values, raw_features(h).values, atol=1e-12)

    def test_unnormalized_variant(self):
        h = random_hand(np.random.default_rng(7))
        assert np.array_equal(raw_features(h, normalize=False).values, h.reshape(-1))


class TestTripletTable:
    def test_length_is_twenty(self):
        assert len(triplet_table()) == 20

    def test_pivot_six_entry(self):
        (entry,) = [t for t in triplet_table() if t.pivot == 6]
        assert (entry.parent, entry.pivot, entry.child) == (5, 6, 7)

    def test_no_fingertip_pivots(self):
        assert all(t.pivot not in FINGERTIPS for t in triplet_table())

    def test_indices_valid_and_distinct(self):
        for t in triplet_table():
            ids = (t.parent, t.pivot, t.child)
            assert all(0 <= i <= 20 for i in ids)
            assert len(set(ids)) == 3

    def test_flexion_then_abduction_order(self):
        table = triplet_table()
        assert all(t.pivot != 0 for t in table[:15])
        assert all(t.pivot == 0 for t in table[15:])


class TestJointAngles:
    def test_collinear_pivot_between(self):
        h = np.random.default_rng(8).normal(size=(21, 3))
        h[5] = (0.0, 0.0, 0.0)
        h[6] = (1.0, 0.0, 0.0)
        h[7] = (2.0, 0.0, 0.0)
        idx = [i for i, t in enumerate(triplet_table()) if t.pivot == 6][0]
        assert joint_angles(h).values[idx] == pytest.approx(np.pi, abs=1e-12)

    def test_orthogonal_is_half_pi(self):
        h = np.random.default_rng(9).normal(size=(21, 3))
        h[5] = (1.0, 0.0, 0.0)
        h[6] = (0.0, 0.0, 0.0)
        h[7] = (0.0, 1.0, 0.0)
        idx = [i for i, t in enumerate(triplet_table()) if t.pivot == 6][0]
        assert joint_angles(h).values[idx] == pytest.approx(np.pi / 2, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_similarity_invariance(self, seed):
        rng = np.random.default_rng(seed)
        h = random_hand(rng)
        for t_seed in range(10):
            t = random_transform(seed * 1000 + t_seed)
            dev = np.abs(joint_angles(apply_transform(h, t)).values - joint_angles(h).values)
            assert dev.max() <= 1e-9

    def test_range_is_zero_to_pi(self):
        for seed in range(20):
            vals = joint_angles(random_hand(np.random.default_rng(seed))).values
            assert vals.min() >= 0.0 and vals.max() <= np.pi

    def test_unaffected_by_normalization(self):
        h = random_hand(np.random.default_rng(10))
        normalized = scale_normalize(wrist_center(h))
        assert np.allclose(joint_angles(h).values, joint_angles(normalized).values, atol=1e-12)

    def test_degenerate_triplet_flagged_as_zero(self):
        h = random_hand(np.random.default_rng(11))
        h[7] = h[6]  # child collapses onto pivot
        fv = joint_angles(h)
        idx = [i for i, t in enumerate(triplet_table()) if t.pivot == 6][0]
        assert fv.degenerate
        assert fv.values[idx] == 0.0

    def test_near_parallel_clamped_no_nan(self):
        h = np.random.default_rng(12).normal(size=(21, 3))
        h[6] = (0.0, 0.0, 0.0)
        h[5] = (1.0, 0.0, 0.0)
        h[7] = (1.0, 1e-9, 0.0)  # nearly parallel displacements
        assert np.all(np.isfinite(joint_angles(h).values))


class TestRawAngle:
    def test_layout(self):
        h = random_hand(np.random.default_rng(13))
        fv = raw_angle_features(h)
        assert fv.values.shape == (83,)
        assert np.array_equal(fv.values[:63], raw_features(h).values)
        assert np.array_equal(fv.values[63:], joint_angles(h).values)


class TestApplyTransform:
    def test_identity(self):
        h = random_hand(np.random.default_rng(14))
        ident = SimilarityTransform(np.eye(3), 1.0, np.zeros(3))
        assert np.array_equal(apply_transform(h, ident), h)

    def test_pure_scaling(self):
        h = random_hand(np.random.default_rng(15))
        t = SimilarityTransform(np.eye(3), 2.0, np.zeros(3))
        assert np.allclose(apply_transform(h, t), 2.0 * h)

    def test_composition_matches_matrix_algebra(self):
        h = random_hand(np.random.default_rng(16))
        t1 = random_transform(21)
        t2 = random_transform(22)
        sequential = apply_transform(apply_transform(h, t1), t2)
        composed = apply_transform(h, t2.compose(t1))
        assert np.allclose(sequential, composed, atol=1e-9)
        # independent oracle: explicit matrix algebra per point
        expected = (t2.scale * (t1.scale * h @ t1.rotation.T + t1.translation) @ t2.rotation.T
                    + t2.translation)
        assert np.allclose(sequential, expected, atol=1e-12)


class TestRandomTransform:
    def test_deterministic(self):
        a, b = random_transform(77), random_transform(77)
        assert np.array_equal(a.rotation, b.rotation)
        assert a.scale == b.scale
        assert np.array_equal(a.translation, b.translation)

    def test_rotation_orthogonal(self):
        for seed in range(50):
            r = random_transform(seed).rotation
            assert np.abs(r.T @ r - np.eye(3)).max() <= 1e-10
            assert abs(np.linalg.det(r) - 1.0) <= 1e-10

    def test_scale_range_over_many_seeds(self):
        scales = [random_transform(s).scale for s in range(1000)]
        assert min(scales) >= 0.1 and max(scales) <= 10.0

    def test_translation_range(self):
        for seed in range(100):
            t = random_transform(seed).translation
            assert np.all(np.abs(t) <= 10.0)
