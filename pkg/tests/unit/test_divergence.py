"""
Unit tests for core/divergence.py
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rankguard.core.divergence import (
    DivergenceReport,
    EstimatorConfig,
    FeatureSampleSet,
    divergence_report,
    estimate_l1,
    estimate_report,
    exact_l1,
    _sklearn_tol,
    kmeans,
    restricted_l1,
)
from rankguard.core.domain import Pmf
from rankguard.utils.errors import EmptyInputError, InvalidConfigError, SchemaError
from tests.conftest import acceptance_scale


pytestmark = pytest.mark.unit


def _binned_samples(pmf, size, seed, spacing=10.0):
    """Draw `size` points from an 8-bin pmf placed at well-separated 1-D locations."""
    rng = np.random.default_rng(seed)
    bins = rng.choice(len(pmf), size=size, p=pmf)
    return (bins * spacing).astype(np.float64).reshape(-1, 1)


class TestExactL1:
    """Tests for exact and restricted divergences."""

    def test_identical_is_zero(self):
        mu = Pmf([0.1, 0.2, 0.7])
        assert exact_l1(mu, mu) == 0.0

    def test_disjoint_supports(self):
        """Disjoint supports reach the maximum of 2."""
        assert exact_l1(Pmf([0.5, 0.5, 0, 0]), Pmf([0, 0, 0.5, 0.5])) == pytest.approx(2.0)

    def test_two_points(self):
        assert exact_l1(Pmf([0.4, 0.6]), Pmf([0.6, 0.4])) == pytest.approx(0.4)

    def test_length_mismatch(self):
        with pytest.raises(SchemaError):
            exact_l1(Pmf([0.5, 0.5]), Pmf([1.0, 0.0, 0.0]))

    def test_restricted_examples(self):
        mu_r = Pmf([0.25] * 4)
        mu_s = Pmf([0.3, 0.2, 0.2, 0.3])
        assert restricted_l1(mu_r, mu_s, []) == 0.0
        assert restricted_l1(mu_r, mu_s, {0, 3}) == pytest.approx(0.1)
        assert restricted_l1(mu_r, mu_s, range(4)) == exact_l1(mu_r, mu_s)

    def test_region_out_of_range(self):
        with pytest.raises(SchemaError):
            restricted_l1(Pmf([0.5, 0.5]), Pmf([0.5, 0.5]), [2])

    def test_report_carries_both_conventions(self):
        """The report keeps the un-halved value and exposes TV = half of it."""
        report = divergence_report(Pmf([0.4, 0.6]), Pmf([0.6, 0.4]), region=[1])
        assert report.full_l1 == pytest.approx(0.4)
        assert report.total_variation == pytest.approx(0.2)
        assert report.restricted_l1 == pytest.approx(0.2)
        assert report.model_dump()["convention"] == "unhalved"

    def test_report_rejects_restricted_above_full(self):
        with pytest.raises(ValueError):
            DivergenceReport(full_l1=0.1, restricted_l1=0.2)

    @settings(max_examples=100, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2**32 - 1),
        n=st.integers(min_value=1, max_value=32),
        data=st.data(),
    )
    def test_symmetry_and_monotone_regions(self, seed, n, data):
        rng = np.random.default_rng(seed)
        mu_r = Pmf(rng.dirichlet(np.ones(n)))
        mu_s = Pmf(rng.dirichlet(np.ones(n)))
        small = data.draw(st.sets(st.integers(0, n - 1)))
        large = small | data.draw(st.sets(st.integers(0, n - 1)))
        assert exact_l1(mu_r, mu_s) == exact_l1(mu_s, mu_r)
        assert 0.0 <= exact_l1(mu_r, mu_s) <= 2.0
        assert restricted_l1(mu_r, mu_s, small) <= restricted_l1(mu_r, mu_s, large) <= exact_l1(mu_r, mu_s)


class TestKMeans:
    """Tests for the seeded k-means wrapper."""

    def test_single_cluster_is_the_mean(self):
        points = np.random.default_rng(0).normal(size=(50, 3))
        centroids, assign = kmeans(points, 1, seed=0)
        np.testing.assert_allclose(centroids[0], points.mean(axis=0), atol=1e-9)
        assert set(assign.tolist()) == {0}

    def test_two_separated_clusters(self):
        points = np.array([0.0, 1.0, 2.0, 100.0, 101.0, 102.0]).reshape(-1, 1)
        centroids, _ = kmeans(points, 2, seed=0)
        np.testing.assert_allclose(np.sort(centroids[:, 0]), [1.0, 101.0], atol=1e-9)

    def test_one_point_per_cluster(self):
        """k = N leaves no within-cluster distance."""
        points = np.arange(6, dtype=np.float64).reshape(-1, 1)
        centroids, assign = kmeans(points, 6, seed=1)
        np.testing.assert_allclose(centroids[assign], points, atol=1e-12)

    def test_deterministic_per_seed(self):
        points = np.random.default_rng(5).normal(size=(200, 2))
        first = kmeans(points, 4, seed=7)
        second = kmeans(points, 4, seed=7)
        np.testing.assert_array_equal(first[0], second[0])
        np.testing.assert_array_equal(first[1], second[1])

    def test_k_larger_than_points(self):
        with pytest.raises(InvalidConfigError):
            kmeans(np.zeros((3, 1)), 4)

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            kmeans(np.zeros((0, 1)), 1)

    def test_tolerance_is_absolute_centroid_movement(self):
        """sklearn scales its tolerance by the mean variance; the wrapper undoes that."""
        points = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 4.0], [2.0, 4.0]])
        variance = np.mean(np.var(points, axis=0))
        assert variance == pytest.approx(2.5)
        assert _sklearn_tol(points, 1e-3) == pytest.approx(1e-6 / 2.5)
        assert _sklearn_tol(points * 100.0, 1e-3) == pytest.approx(1e-6 / 25000.0)
        assert _sklearn_tol(np.ones((5, 2)), 1e-3) == 0.0

    def test_constant_points(self):
        centroids, assign = kmeans(np.ones((5, 2)), 1, seed=0)
        np.testing.assert_array_equal(centroids, [[1.0, 1.0]])
        assert assign.tolist() == [0] * 5


class TestEstimateL1:
    """Tests for the cluster-histogram estimator."""

    def test_empty_sample_set(self):
        with pytest.raises(EmptyInputError):
            FeatureSampleSet(np.zeros((0, 2)), "real")

    def test_dimension_mismatch(self):
        real = FeatureSampleSet(np.zeros((5, 2)), "real")
        synth = FeatureSampleSet(np.zeros((5, 3)), "synthetic")
        with pytest.raises(SchemaError):
            estimate_l1(real, synth, k=2)

    def test_identical_sets(self):
        points = np.random.default_rng(1).normal(size=(400, 2))
        estimate = estimate_l1(FeatureSampleSet(points, "real"), FeatureSampleSet(points, "synthetic"), k=20, restarts=5)
        assert estimate <= 0.05

    def test_disjoint_sets(self):
        rng = np.random.default_rng(2)
        real = FeatureSampleSet(rng.normal(size=(300, 2)), "real")
        synth = FeatureSampleSet(rng.normal(loc=1000.0, size=(300, 2)), "synthetic")
        assert estimate_l1(real, synth, k=20, restarts=5) >= 1.9

    def test_symmetric_in_its_arguments(self):
        rng = np.random.default_rng(3)
        a = FeatureSampleSet(rng.normal(size=(150, 2)), "real")
        b = FeatureSampleSet(rng.normal(loc=0.5, size=(120, 2)), "synthetic")
        assert estimate_l1(a, b, k=6, seed=4) == estimate_l1(b, a, k=6, seed=4)

    def test_threaded_restarts_match_sequential(self):
        rng = np.random.default_rng(4)
        a = FeatureSampleSet(rng.normal(size=(150, 2)), "real")
        b = FeatureSampleSet(rng.normal(loc=0.5, size=(150, 2)), "synthetic")
        assert estimate_l1(a, b, k=5, seed=9, workers=3) == estimate_l1(a, b, k=5, seed=9, workers=1)

    @pytest.mark.parametrize("q, exact", [
        ([0.125] * 8, 0.0),
        ([0.225, 0.225, 0.225, 0.025, 0.025, 0.025, 0.125, 0.125], 0.6),
        ([0.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25], 2.0),
    ])
    def test_recovers_binned_ground_truth(self, q, exact):
        """10^5 samples per side over 8 separated bins land within 0.02 of the exact L1."""
        p = [0.125] * 8 if exact != 2.0 else [0.25, 0.25, 0.25, 0.25, 0.0, 0.0, 0.0, 0.0]
        assert exact_l1(Pmf(p), Pmf(q)) == pytest.approx(exact)
        real = FeatureSampleSet(_binned_samples(p, 100_000, seed=10), "real")
        synth = FeatureSampleSet(_binned_samples(q, 100_000, seed=11), "synthetic")
        assert abs(estimate_l1(real, synth, k=8, seed=0, restarts=5) - exact) <= 0.02

    def test_report_wraps_config(self):
        rng = np.random.default_rng(6)
        real = FeatureSampleSet(rng.normal(size=(60, 1)), "real")
        synth = FeatureSampleSet(rng.normal(size=(40, 1)), "synthetic")
        report = estimate_report(real, synth, EstimatorConfig(clusters=4, restarts=2))
        assert report.real_samples == 60
        assert report.synthetic_samples == 40
        assert report.total_variation == pytest.approx(report.estimate_l1 / 2)

    @pytest.mark.slow
    def test_error_shrinks_with_more_samples(self):
        """Median |estimate - exact| over seeds is smaller at 10^5 samples than at 10^3."""
        p = [0.125] * 8
        q = [0.225, 0.225, 0.225, 0.025, 0.025, 0.025, 0.125, 0.125]
        exact = exact_l1(Pmf(p), Pmf(q))

        def median_error(size):
            errors = []
            for s in range(acceptance_scale(20, 5)):
                real = FeatureSampleSet(_binned_samples(p, size, seed=2 * s), "real")
                synth = FeatureSampleSet(_binned_samples(q, size, seed=2 * s + 1), "synthetic")
                errors.append(abs(estimate_l1(real, synth, k=8, seed=s, restarts=1) - exact))
            return float(np.median(errors))

        assert median_error(100_000) < median_error(1_000)
