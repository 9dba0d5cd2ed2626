"""
Unit tests for core/domain.py
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rankguard.core.domain import (
    FiniteDomain,
    FiniteInstance,
    LabelMap,
    Pmf,
    SamplePredictions,
    disagreement_regions,
    empirical_risk,
    exact_risk,
    lemma1_check,
    risk_difference,
    sample_predictions,
)
from rankguard.pipeline.trace_sim import InstanceGenConfig, generate_instance
from rankguard.utils.errors import EmptyInputError, SchemaError


pytestmark = pytest.mark.unit

MU = Pmf([0.1, 0.2, 0.3, 0.4])


class TestPmf:
    """Tests for Pmf validation."""

    def test_rejects_mass_sum_off_by_more_than_tolerance(self):
        """A pmf summing to 0.8 is rejected."""
        with pytest.raises(SchemaError):
            Pmf([0.2, 0.2, 0.2, 0.2])

    def test_rejects_negative_mass(self):
        """Negative masses are rejected."""
        with pytest.raises(SchemaError):
            Pmf([1.2, -0.2])

    def test_renormalizes_within_tolerance(self):
        """A sum off by 1e-10 is accepted and rescaled."""
        pmf = Pmf([0.5 + 1e-10, 0.5])
        assert pmf.masses.sum() == pytest.approx(1.0, abs=1e-15)

    def test_normalizing_twice_is_a_no_op(self):
        """Re-wrapping a pmf's masses does not change a single bit."""
        pmf = Pmf(np.random.default_rng(3).dirichlet(np.ones(17)))
        assert Pmf(pmf.masses) == pmf

    def test_masses_are_read_only(self):
        """Pmfs are immutable once built."""
        with pytest.raises(ValueError):
            MU.masses[0] = 0.5

    def test_mass_of_a_point_set(self):
        """Indices and boolean masks give the same total."""
        pmf = Pmf([0.1, 0.2, 0.3, 0.4])
        assert pmf.mass([1, 3]) == pytest.approx(0.6)
        assert pmf.mass(np.array([False, True, False, True])) == pmf.mass([1, 3])
        assert pmf.mass([]) == 0.0


class TestFiniteInstance:
    """Tests for instance validation."""

    def test_label_out_of_range_names_the_index(self):
        """A hypothesis label >= c is rejected with its position."""
        with pytest.raises(SchemaError) as info:
            FiniteInstance(
                domain=FiniteDomain(n=2, c=2),
                mu_r=Pmf.uniform(2),
                mu_s=Pmf.uniform(2),
                f=LabelMap([0, 1]),
                hypotheses=(LabelMap([0, 1]), LabelMap([0, 2])),
            )
        assert info.value.location == "hypotheses[1][1]"

    def test_length_mismatch(self):
        """mu_s must cover every point of the domain."""
        with pytest.raises(SchemaError):
            FiniteInstance(
                domain=FiniteDomain(n=3, c=2),
                mu_r=Pmf.uniform(3),
                mu_s=Pmf.uniform(2),
                f=LabelMap([0, 1, 0]),
                hypotheses=(LabelMap([0, 1, 0]),),
            )

    def test_requires_a_hypothesis(self):
        """An instance without hypotheses is rejected."""
        with pytest.raises(SchemaError):
            FiniteInstance(FiniteDomain(2, 2), Pmf.uniform(2), Pmf.uniform(2), LabelMap([0, 1]), ())

    def test_domain_needs_two_classes(self):
        with pytest.raises(SchemaError):
            FiniteDomain(n=4, c=1)


class TestExactRisk:
    """Tests for exact_risk and risk_difference."""

    def test_identity_is_zero(self):
        """h = f has zero risk."""
        f = LabelMap([0, 1, 0, 1])
        assert exact_risk(MU, f, f) == 0.0

    def test_total_disagreement_is_one(self):
        """h wrong everywhere has risk 1."""
        assert exact_risk(MU, LabelMap([1, 1, 1, 1]), LabelMap([0, 0, 0, 0])) == pytest.approx(1.0)

    def test_partial_disagreement(self):
        """Wrong at points 0 and 2 costs 0.1 + 0.3."""
        h = LabelMap([1, 0, 1, 0])
        f = LabelMap([0, 0, 0, 0])
        assert exact_risk(MU, h, f) == pytest.approx(0.4)

    def test_risk_difference_example(self):
        """ε(h1) = 0.2, ε(h2) = 0.1, so Δε = −0.1."""
        f = LabelMap([0, 0, 1, 1])
        h1 = LabelMap([0, 1, 1, 1])
        h2 = LabelMap([1, 0, 1, 1])
        assert risk_difference(MU, h1, h2, f) == pytest.approx(-0.1)

    def test_risk_difference_extremes(self):
        f = LabelMap([0, 0, 1, 1])
        assert risk_difference(MU, f, f, f) == 0.0
        assert risk_difference(MU, f, LabelMap([1, 1, 0, 0]), f) == pytest.approx(1.0)

    def test_length_mismatch(self):
        """Label maps must match the pmf length."""
        with pytest.raises(SchemaError):
            exact_risk(MU, LabelMap([0, 1]), LabelMap([0, 1]))


class TestEmpiricalRisk:
    """Tests for empirical_risk and sampling."""

    def test_counts_mismatches(self):
        preds = SamplePredictions(predicted=[1, 1, 1] + [0] * 7, actual=[0] * 10)
        assert empirical_risk(preds) == pytest.approx(0.3)
        assert empirical_risk(SamplePredictions([0] * 10, [0] * 10)) == 0.0
        assert empirical_risk(SamplePredictions([1] * 10, [0] * 10)) == 1.0

    def test_empty_sample(self):
        """N = 0 is an empty-input error."""
        with pytest.raises(EmptyInputError):
            empirical_risk(SamplePredictions([], []))

    def test_converges_to_exact_risk(self):
        """With 10^6 samples the estimate is within 0.005 of the exact risk."""
        f = LabelMap([0, 0, 1, 1])
        h = LabelMap([1, 0, 1, 0])
        preds = sample_predictions(MU, h, f, size=1_000_000, seed=0)
        assert abs(empirical_risk(preds) - exact_risk(MU, h, f)) <= 0.005


class TestDisagreementRegions:
    """Tests for disagreement_regions and lemma1_check."""

    def test_identical_hypotheses(self):
        f = LabelMap([0, 0, 1, 1])
        assert disagreement_regions(f, f, f) == (frozenset(), frozenset())

    def test_h1_equals_f(self):
        """Only h2 is wrong where the two disagree."""
        f = LabelMap([0, 0, 1, 1])
        h2 = LabelMap([1, 0, 1, 0])
        assert disagreement_regions(f, h2, f) == (frozenset(), frozenset({0, 3}))

    def test_both_wrong_somewhere(self):
        f = LabelMap([0, 0, 1, 1])
        h1 = LabelMap([0, 1, 1, 1])
        h2 = LabelMap([1, 0, 1, 1])
        assert disagreement_regions(h1, h2, f) == (frozenset({1}), frozenset({0}))

    def test_regions_overlap_with_three_classes(self):
        """Both hypotheses wrong in different ways: the point is in both regions."""
        f = LabelMap([0])
        omega1, omega2 = disagreement_regions(LabelMap([1]), LabelMap([2]), f)
        assert omega1 == omega2 == frozenset({0})

    def test_lemma_identical_hypotheses(self):
        f = LabelMap([0, 0, 1, 1])
        assert tuple(lemma1_check(MU, f, f, f)) == (0.0, 0.0, 0.0, 0.0)

    def test_lemma_on_uniform_eight_points(self):
        rng = np.random.default_rng(11)
        f, h1, h2 = (LabelMap(rng.integers(0, 3, size=8)) for _ in range(3))
        assert lemma1_check(Pmf.uniform(8), h1, h2, f).residual <= 1e-12

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_lemma_residual_on_random_instances(self, seed):
        """μ(Ω2) − μ(Ω1) equals Δε on both domains for every pair."""
        instance = generate_instance(InstanceGenConfig(), seed)
        hyps = instance.hypotheses
        for pmf in (instance.mu_r, instance.mu_s):
            for i in range(len(hyps)):
                for j in range(len(hyps)):
                    assert lemma1_check(pmf, hyps[i], hyps[j], instance.f).residual <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_risk_bounds_and_antisymmetry(self, seed):
        instance = generate_instance(InstanceGenConfig(), seed)
        h1, h2 = instance.hypotheses[0], instance.hypotheses[1]
        for pmf in (instance.mu_r, instance.mu_s):
            assert 0.0 <= exact_risk(pmf, h1, instance.f) <= 1.0
            assert risk_difference(pmf, h1, h2, instance.f) == -risk_difference(pmf, h2, h1, instance.f)
