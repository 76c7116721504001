"""
Tests for relative error metrics, evaluation reports and the study protocols.
Desk-scale training runs are marked slow.
"""
import numpy as np
import pytest

from src.geometry.locate import structured_query_grid
from src.geometry.mesh import generate_unit_square
from src.learning.trainer import train_from_scratch
from src.metrics.errors import ErrorReport, evaluate_model, relative_errors, relative_errors_batch
from src.metrics.studies import mode_count_study, quadrature_mesh, resolution_study
from src.models.specs import GrfSpec, ProblemSpec, TrainConfig
from src.processors.dataset_builder import build_dataset
from src.processors.grf import compute_cutoff_field
from src.spectral.eigen import eigenbasis_for_mesh
from src.utils.exceptions import HashMismatch, ShapeMismatch, ValidationError, ZeroReference

from conftest import sine_mode

GRF = GrfSpec(variance=15.0, length_scale=0.3, n_modes=512, seed=0)
HEAT = dict(diffusivity=0.02, t_final=1.0, dt=0.0025)
DESK_TRAIN = TrainConfig(learning_rate=4e-5, iterations=20_000, batch_size=256, seed=0, log_every=1000)


class TestRelativeErrors:
    """Mass- and energy-weighted relative norms."""

    def test_identical_fields(self, small_square):
        u = sine_mode(small_square)
        assert relative_errors(small_square, u, u) == (0.0, 0.0)

    def test_doubled_field(self, small_square):
        """u_pred = 2 u gives unit relative errors."""
        u = sine_mode(small_square, 2, 1)
        l2, h1 = relative_errors(small_square, u, 2 * u)
        assert l2 == pytest.approx(1.0)
        assert h1 == pytest.approx(1.0)

    def test_scale_invariant(self, small_square, rng):
        u = sine_mode(small_square)
        v = u + 0.1 * rng.standard_normal(small_square.n_nodes)
        assert relative_errors(small_square, u, v)[0] == pytest.approx(relative_errors(small_square, 3 * u, 3 * v)[0])

    def test_h1_sees_oscillation(self, small_square):
        """A high-frequency perturbation weighs more in H1 than in L2."""
        u = sine_mode(small_square)
        l2, h1 = relative_errors(small_square, u, u + 0.05 * sine_mode(small_square, 4, 4))
        assert h1 > l2

    def test_zero_reference(self, small_square):
        with pytest.raises(ZeroReference):
            relative_errors(small_square, np.zeros(small_square.n_nodes), np.ones(small_square.n_nodes))

    def test_batch(self, small_square):
        u = np.stack([sine_mode(small_square), sine_mode(small_square, 1, 2)])
        l2, h1 = relative_errors_batch(small_square, u, 1.5 * u)
        assert np.allclose(l2, 0.5) and np.allclose(h1, 0.5)

    def test_shape_mismatch(self, small_square):
        with pytest.raises(ShapeMismatch):
            relative_errors_batch(small_square, np.ones((2, small_square.n_nodes)), np.ones((3, small_square.n_nodes)))


class TestErrorReport:
    """Aggregation over samples and snapshots."""

    def test_poisson_mean(self):
        report = ErrorReport.from_arrays(np.array([0.1, 0.3]), np.array([0.2, 0.4]), heat=False)
        assert report.rel_l2 == pytest.approx(0.2)
        assert report.rel_h1 == pytest.approx(0.3)
        assert report.n_samples == 2

    def test_heat_snapshot_first(self):
        """Snapshots are averaged per sample, then samples are averaged."""
        l2 = np.array([[0.1, 0.3], [0.5, 0.5]])
        report = ErrorReport.from_arrays(l2, l2, heat=True, problem="heat_homogeneous")
        assert np.allclose(report.per_sample_l2, [0.2, 0.5])
        assert report.rel_l2 == pytest.approx(0.35)
        assert report.to_dict()['problem'] == "heat_homogeneous"
        assert "snapshots" in report.aggregation


class TestStudies:
    """Resolution and mode-count protocols at unit-test scale."""

    CONFIG = TrainConfig(learning_rate=1e-2, iterations=100, batch_size=8, seed=0, log_every=50)

    @pytest.fixture(scope="class")
    def trained(self, small_square, small_basis):
        dataset = build_dataset(small_square, None, ProblemSpec(), GrfSpec(n_modes=128, seed=2), 20)
        result = train_from_scratch(dataset, small_basis, self.CONFIG)
        return dataset, result

    def test_quadrature_mesh_area(self, small_square):
        points = structured_query_grid(small_square, 1.0 / 16)
        quad = quadrature_mesh(points, small_square)
        assert quad.volume == pytest.approx(1.0)
        assert quad.n_nodes == 17 * 17

    def test_same_grid_anchor(self, small_square, small_basis, trained):
        """On the training nodes the study reproduces evaluate_model."""
        dataset, result = trained
        frame = resolution_study(result.model, small_basis, small_square, dataset,
                                 [small_square.nodes.copy()], result.test_indices)
        report = evaluate_model(result.model, dataset, small_basis, small_square, result.test_indices)
        assert frame.loc[0, 'rel_l2'] == pytest.approx(report.rel_l2)
        assert frame.loc[0, 'n_points'] == small_square.n_nodes

    def test_denser_grids(self, small_square, small_basis, trained):
        dataset, result = trained
        grids = [structured_query_grid(small_square, 1.0 / (8 * f)) for f in (1, 2, 4)]
        frame = resolution_study(result.model, small_basis, small_square, dataset, grids, result.test_indices)
        assert list(frame['n_points']) == [81, 289, 1089]
        assert np.all(np.isfinite(frame['rel_l2']))
        assert list(frame.columns) == ['n_points', 'rel_l2', 'rel_h1']

    def test_evaluate_wrong_mesh(self, small_basis, trained):
        dataset, result = trained
        other = generate_unit_square(5)
        with pytest.raises(HashMismatch):
            evaluate_model(result.model, dataset, small_basis, other)

    def test_mode_count_frame(self, small_square, small_basis, trained):
        dataset, _ = trained
        frame = mode_count_study(small_square, dataset, [4, 8], self.CONFIG, small_basis)
        assert list(frame['M']) == [4, 8]
        assert list(frame['n_parameters']) == [4 * 82, 8 * 82]

    def test_mode_count_empty(self, small_square, small_basis, trained):
        with pytest.raises(ValidationError):
            mode_count_study(small_square, trained[0], [], self.CONFIG, small_basis)


@pytest.mark.slow
class TestDeskScale:
    """Scaled-down end-to-end accuracy on the 35 x 35 unit square with 100 modes."""

    @pytest.fixture(scope="class")
    def square(self):
        mesh = generate_unit_square(35)
        return mesh, eigenbasis_for_mesh(mesh, 100)

    @pytest.fixture(scope="class")
    def poisson_run(self, square):
        mesh, basis = square
        dataset = build_dataset(mesh, None, ProblemSpec(), GRF, 500)
        return dataset, train_from_scratch(dataset, basis, DESK_TRAIN)

    def test_poisson(self, square, poisson_run):
        mesh, basis = square
        dataset, result = poisson_run
        report = evaluate_model(result.model, dataset, basis, mesh, result.test_indices)
        assert report.rel_l2 <= 5e-2

    def test_heat_homogeneous(self, square):
        mesh, basis = square
        spec = ProblemSpec(problem="heat_homogeneous", **HEAT)
        dataset = build_dataset(mesh, compute_cutoff_field(mesh), spec, GRF, 300)
        result = train_from_scratch(dataset, basis, DESK_TRAIN, diffusivity=0.02)
        assert evaluate_model(result.model, dataset, basis, mesh, result.test_indices).rel_l2 <= 5e-2

    def test_heat_forced(self, square):
        mesh, basis = square
        spec = ProblemSpec(problem="heat_forced", **HEAT)
        dataset = build_dataset(mesh, compute_cutoff_field(mesh), spec, GRF, 300, basis=basis)
        result = train_from_scratch(dataset, basis, DESK_TRAIN, diffusivity=0.02)
        assert evaluate_model(result.model, dataset, basis, mesh, result.test_indices).rel_l2 <= 6e-2

    def test_resolution_independence(self, square, poisson_run):
        mesh, basis = square
        dataset, result = poisson_run
        grids = [mesh.nodes] + [structured_query_grid(mesh, 1.0 / (34 * f)) for f in (2, 4)]
        frame = resolution_study(result.model, basis, mesh, dataset, grids, result.test_indices)
        base = frame.loc[0, 'rel_l2']
        assert np.all(np.abs(frame['rel_l2'] - base) <= 0.25 * base)

    def test_mode_count_trend(self, square, poisson_run):
        """Error decreases by at least 10% per step in M."""
        mesh, basis = square
        dataset, _ = poisson_run
        frame = mode_count_study(mesh, dataset, [25, 50, 100], DESK_TRAIN, basis)
        errors = frame['rel_l2'].to_numpy()
        assert np.all(errors[1:] <= 0.9 * errors[:-1])
