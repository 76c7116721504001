"""
Tests for Gaussian random field sampling and admissible initial conditions.
"""
import numpy as np
import pytest
from scipy import stats

from src.models.specs import GrfSpec
from src.processors.grf import (
    STREAM_FORCING,
    STREAM_INITIAL,
    compute_cutoff_field,
    make_admissible_ic,
    realize,
    sample_field,
    wave_vector_std,
)
from src.utils.exceptions import ShapeMismatch, ValidationError


class TestGrfStatistics:
    """Sample moments of the randomization method."""

    N_SAMPLES = 10_000

    @pytest.fixture(scope="class")
    def pair_values(self):
        """Values at 5 point pairs separated by the correlation length."""
        spec = GrfSpec(variance=15.0, length_scale=0.3, n_modes=512, seed=7)
        anchors = np.array([[0.1, 0.1], [3.0, 0.5], [6.0, 6.0], [-4.0, 2.0], [9.0, -7.0]])
        partners = anchors + spec.length_scale * np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8],
                                                          [-0.8, 0.6], [np.sqrt(0.5), np.sqrt(0.5)]])
        points = np.vstack([anchors, partners])
        values = np.array([sample_field(spec, i, points) for i in range(self.N_SAMPLES)])
        return spec, values[:, :5], values[:, 5:]

    def test_pointwise_variance(self, pair_values):
        """Pooled sample variance is sigma^2 within three standard errors."""
        spec, a, _ = pair_values
        assert abs(np.mean(a * a) - spec.variance) <= 0.64

    def test_covariance_at_correlation_length(self, pair_values):
        """Cov(u(x), u(x + l e)) is sigma^2 exp(-pi / 4)."""
        spec, a, b = pair_values
        expected = spec.variance * np.exp(-np.pi / 4)
        bound = 3 * np.sqrt((spec.variance ** 2 + expected ** 2) / self.N_SAMPLES)
        assert abs(np.mean(a * b) - expected) <= bound

    def test_zero_mean(self, pair_values):
        spec, a, _ = pair_values
        assert abs(a.mean()) <= 3 * np.sqrt(spec.variance / self.N_SAMPLES)

    def test_consecutive_samples_uncorrelated(self, pair_values):
        """Neighbouring sample indices are independent draws at every point."""
        _, a, b = pair_values
        for values in (a, b):
            for column in values.T:
                assert abs(np.corrcoef(column[:-1], column[1:])[0, 1]) < 0.05


class TestGrfSampling:
    """Determinism and stream separation."""

    def test_wave_vector_std(self):
        assert wave_vector_std(0.3) == pytest.approx(np.sqrt(np.pi / 2) / 0.3)

    def test_wave_vector_distribution(self):
        """Wave-vector components are N(0, pi / (2 l^2)) across samples and axes."""
        spec = GrfSpec(length_scale=0.3, n_modes=512, seed=11)
        k = np.concatenate([realize(spec, i, dim=2).wave_vectors.ravel() for i in range(20)])
        std = wave_vector_std(spec.length_scale)
        assert stats.kstest(k / std, "norm").pvalue > 1e-3
        assert k.std() == pytest.approx(std, rel=0.02)

    def test_deterministic(self, small_square):
        """Same (seed, index, stream) gives bit-identical values."""
        spec = GrfSpec(seed=3)
        a = sample_field(spec, 5, small_square.nodes)
        b = sample_field(spec, 5, small_square.nodes)
        assert np.array_equal(a, b)

    def test_order_independent(self, small_square):
        """Sample i does not depend on which samples were drawn before."""
        spec = GrfSpec(seed=3)
        later = sample_field(spec, 9, small_square.nodes)
        for i in range(9):
            sample_field(spec, i, small_square.nodes)
        assert np.array_equal(later, sample_field(spec, 9, small_square.nodes))

    def test_streams_differ(self, small_square):
        """Initial-condition and forcing streams are independent draws."""
        spec = GrfSpec(seed=3)
        u0 = sample_field(spec, 0, small_square.nodes, STREAM_INITIAL)
        f = sample_field(spec, 0, small_square.nodes, STREAM_FORCING)
        assert not np.allclose(u0, f)

    def test_seeds_differ(self, small_square):
        a = sample_field(GrfSpec(seed=1), 0, small_square.nodes)
        b = sample_field(GrfSpec(seed=2), 0, small_square.nodes)
        assert not np.allclose(a, b)

    def test_realization_shapes(self):
        r = realize(GrfSpec(n_modes=64), 0, dim=3)
        assert r.wave_vectors.shape == (64, 3)
        assert r.n_modes == 64

    def test_no_points(self):
        with pytest.raises(ValidationError):
            sample_field(GrfSpec(), 0, np.zeros((0, 2)))

    def test_bad_point_shape(self):
        with pytest.raises(ShapeMismatch):
            sample_field(GrfSpec(), 0, np.zeros(4))


class TestAdmissibleIc:
    """Cutoff field and GRF x cutoff initial conditions."""

    def test_cutoff_normalized(self, small_square):
        d = compute_cutoff_field(small_square)
        assert d.max() == pytest.approx(1.0)
        assert np.all(d[small_square.boundary_nodes] == 0.0)
        assert np.all(d[small_square.interior_nodes] > 0.0)

    def test_cutoff_peak_at_center(self, small_square):
        """The torsion function of the square peaks near its center."""
        d = compute_cutoff_field(small_square)
        center = np.argmin(np.linalg.norm(small_square.nodes - 0.5, axis=1))
        assert d[center] >= 0.98

    def test_ic_vanishes_on_boundary(self, small_square):
        d = compute_cutoff_field(small_square)
        u0 = make_admissible_ic(sample_field(GrfSpec(), 0, small_square.nodes), d)
        assert np.all(u0[small_square.boundary_nodes] == 0.0)

    def test_ic_length_mismatch(self, small_square):
        d = compute_cutoff_field(small_square)
        with pytest.raises(ShapeMismatch):
            make_admissible_ic(np.ones(small_square.n_nodes - 1), d)
