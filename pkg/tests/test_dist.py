"""Distribution math: exact examples plus fuzzed invariants.

Derived expected values were computed by direct formula evaluation (and
cross-checked against scipy) before the implementation existed; they are
frozen here as constants.
"""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from scipy.spatial.distance import jensenshannon

from ambinli.dist import (
    GoldLabel,
    InvalidDistribution,
    LabelCounts,
    LabelDistribution,
    NonpositivePrediction,
    ZeroCounts,
    entropy,
    jsd,
    kl,
    majority_label,
    normalize,
    soft_cross_entropy,
)
from conftest import entropy_nats, label_counts, positive_simplex_points, simplex_points

# frozen oracle values (direct 64-bit formula evaluation)
JSD_08_02_00_VS_06_03_01 = 0.06760265616235694
KL_05_05_00_VS_025_075_00 = 0.20751874963942185
SCE_TARGET_631_PRED_541 = 0.9210340371976182
LOG2_3 = 1.584962500721156


class TestNormalize:
    def test_simple_tally(self):
        assert normalize(LabelCounts(4, 1, 0)).as_tuple() == (0.8, 0.2, 0.0)

    def test_unanimous(self):
        assert normalize(LabelCounts(5, 0, 0)).as_tuple() == (1.0, 0.0, 0.0)

    def test_hundred_count_example(self):
        # 100-annotation tally with split (33, 51, 16)
        assert normalize(LabelCounts(33, 51, 16)).as_tuple() == (0.33, 0.51, 0.16)

    def test_zero_counts(self):
        with pytest.raises(ZeroCounts):
            normalize(LabelCounts(0, 0, 0))

    @given(label_counts)
    def test_simplex_invariant(self, counts):
        d = normalize(counts)
        assert abs(sum(d.as_tuple()) - 1.0) <= 1e-9
        assert min(d.as_tuple()) >= 0.0


class TestMajorityLabel:
    def test_tied_top(self):
        assert majority_label(LabelCounts(2, 2, 1)) is GoldLabel.NO_MAJORITY

    def test_strict_majority(self):
        assert majority_label(LabelCounts(3, 1, 1)) is GoldLabel.ENTAILMENT

    def test_hundred_count_majority(self):
        assert majority_label(LabelCounts(33, 51, 16)) is GoldLabel.NEUTRAL

    def test_zero_counts(self):
        with pytest.raises(ZeroCounts):
            majority_label(LabelCounts(0, 0, 0))

    @given(label_counts)
    def test_scale_invariance(self, counts):
        for scale in (2, 3, 7):
            scaled = LabelCounts(counts.n_e * scale, counts.n_n * scale, counts.n_c * scale)
            assert majority_label(scaled) is majority_label(counts)


class TestEntropy:
    def test_degenerate(self):
        assert entropy(LabelDistribution(1.0, 0.0, 0.0)) == 0.0

    def test_uniform_maximum(self):
        u = LabelDistribution(1 / 3, 1 / 3, 1 / 3)
        assert entropy(u) == pytest.approx(LOG2_3, abs=1e-12)

    def test_two_way_uniform(self):
        assert entropy(LabelDistribution(0.5, 0.5, 0.0)) == pytest.approx(1.0, abs=1e-12)

    @given(simplex_points())
    def test_bounds(self, d):
        h = entropy(d)
        assert 0.0 <= h <= LOG2_3 + 1e-12


class TestJsd:
    def test_identical(self):
        d = LabelDistribution(0.2, 0.5, 0.3)
        assert jsd(d, d) == 0.0

    def test_disjoint_support_hits_bound(self):
        a = LabelDistribution(1.0, 0.0, 0.0)
        b = LabelDistribution(0.0, 1.0, 0.0)
        assert jsd(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_frozen_derived_value(self):
        a = LabelDistribution(0.8, 0.2, 0.0)
        b = LabelDistribution(0.6, 0.3, 0.1)
        assert jsd(a, b) == pytest.approx(JSD_08_02_00_VS_06_03_01, abs=1e-15)

    @given(simplex_points(), simplex_points())
    def test_symmetry_and_bounds(self, a, b):
        left = jsd(a, b)
        right = jsd(b, a)
        assert left == pytest.approx(right, abs=1e-12)
        assert -1e-12 <= left <= 1.0 + 1e-12

    @given(simplex_points())
    def test_self_divergence_zero(self, d):
        assert jsd(d, d) == pytest.approx(0.0, abs=1e-12)

    @given(simplex_points(), simplex_points())
    def test_zero_implies_equal(self, a, b):
        if jsd(a, b) < 1e-12:
            gap = max(abs(x - y) for x, y in zip(a.as_tuple(), b.as_tuple()))
            assert gap < 1e-5

    @given(simplex_points(), simplex_points())
    @settings(max_examples=50)
    def test_matches_scipy(self, a, b):
        expected = float(jensenshannon(a.as_tuple(), b.as_tuple(), base=2) ** 2)
        assert jsd(a, b) == pytest.approx(expected, abs=1e-9)


class TestKl:
    def test_identical(self):
        d = LabelDistribution(0.3, 0.3, 0.4)
        assert kl(d, d) == 0.0

    def test_unsupported_mass_is_infinite(self):
        a = LabelDistribution(1.0, 0.0, 0.0)
        b = LabelDistribution(0.0, 1.0, 0.0)
        assert kl(a, b) == math.inf

    def test_frozen_derived_value(self):
        a = LabelDistribution(0.5, 0.5, 0.0)
        b = LabelDistribution(0.25, 0.75, 0.0)
        assert kl(a, b) == pytest.approx(KL_05_05_00_VS_025_075_00, abs=1e-15)

    @given(simplex_points(), positive_simplex_points())
    def test_nonnegative(self, a, b):
        assert kl(a, b) >= -1e-12


class TestSoftCrossEntropy:
    def test_one_hot_reduction(self):
        eps = 1e-4
        target = LabelDistribution(1.0, 0.0, 0.0)
        predicted = LabelDistribution(1.0 - 2 * eps, eps, eps)
        assert soft_cross_entropy(target, predicted) == pytest.approx(
            -math.log(1.0 - 2 * eps), abs=1e-15
        )

    def test_uniform_self_entropy(self):
        u = LabelDistribution(1 / 3, 1 / 3, 1 / 3)
        assert soft_cross_entropy(u, u) == pytest.approx(math.log(3.0), rel=1e-14)

    def test_frozen_derived_value(self):
        target = LabelDistribution(0.6, 0.3, 0.1)
        predicted = LabelDistribution(0.5, 0.4, 0.1)
        assert soft_cross_entropy(target, predicted) == pytest.approx(
            SCE_TARGET_631_PRED_541, abs=1e-15
        )

    def test_nonpositive_prediction_rejected(self):
        target = LabelDistribution(0.5, 0.5, 0.0)
        bad = LabelDistribution(0.5, 0.5, 0.0)
        with pytest.raises(NonpositivePrediction):
            soft_cross_entropy(target, bad)

    @given(simplex_points(), positive_simplex_points())
    def test_gibbs_inequality(self, t, q):
        # cross-entropy >= entropy of the target, equality iff t == q
        assert soft_cross_entropy(t, q) >= entropy_nats(t) - 1e-12


class TestSimplexValidation:
    def test_exact_point_untouched(self):
        d = LabelDistribution(0.2, 0.3, 0.5)
        assert d.as_tuple() == (0.2, 0.3, 0.5)

    def test_small_drift_reprojected(self):
        d = LabelDistribution(0.2 + 5e-8, 0.3, 0.5)
        assert sum(d.as_tuple()) == pytest.approx(1.0, abs=1e-12)
        assert min(d.as_tuple()) >= 0.0

    def test_tiny_negative_clamped(self):
        d = LabelDistribution(-1e-8, 0.5, 0.5 + 1e-8)
        assert d.p_e == 0.0
        assert sum(d.as_tuple()) == pytest.approx(1.0, abs=1e-12)

    def test_large_drift_rejected(self):
        with pytest.raises(InvalidDistribution):
            LabelDistribution(0.2, 0.3, 0.6)

    def test_nan_rejected(self):
        with pytest.raises(InvalidDistribution):
            LabelDistribution(float("nan"), 0.5, 0.5)

    def test_argmax_tie_order(self):
        assert LabelDistribution(0.4, 0.4, 0.2).argmax() is GoldLabel.ENTAILMENT
        assert LabelDistribution(0.2, 0.4, 0.4).argmax() is GoldLabel.NEUTRAL
        assert LabelDistribution(1 / 3, 1 / 3, 1 / 3).argmax() is GoldLabel.ENTAILMENT
