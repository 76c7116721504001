"""
Tests for the ground-truth solvers and dataset generation.
"""
import numpy as np
import pytest

from src.fem.assembly import fem_operators
from src.geometry.mesh import generate_unit_square
from src.learning.branch import forward, init_model
from src.metrics.errors import relative_errors
from src.models.specs import GrfSpec, ProblemSpec
from src.processors.dataset_builder import Dataset, build_dataset, split_indices
from src.processors.grf import STREAM_FORCING, compute_cutoff_field, sample_field
from src.processors.simulation import HeatStepper, PoissonSolver, run_trajectory, solve_poisson, step_heat
from src.spectral.eigen import eigenbasis_for_mesh
from src.spectral.projection import ReconstructionRule, project
from src.utils.exceptions import ConfigurationError, ShapeMismatch, ValidationError

from conftest import sine_mode

HEAT = dict(diffusivity=0.02, t_final=1.0, dt=0.0025)


class TestPoisson:
    """-Laplace(u) = f with homogeneous Dirichlet data."""

    def test_discrete_residual(self, small_square, rng):
        """K_int u_int = (M f)_int to solver precision."""
        ops = fem_operators(small_square)
        f = rng.standard_normal(small_square.n_nodes)
        u = solve_poisson(small_square, f)
        residual = ops.stiffness_int @ ops.dofs.restrict(u) - ops.dofs.restrict(ops.mass @ f)
        assert np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(ops.dofs.restrict(ops.mass @ f))

    def test_boundary_zero(self, small_square, rng):
        u = solve_poisson(small_square, rng.standard_normal(small_square.n_nodes))
        assert np.all(u[small_square.boundary_nodes] == 0.0)

    def test_manufactured_solution(self):
        """f = 2 pi^2 sin(pi x) sin(pi y) recovers sin(pi x) sin(pi y)."""
        mesh = generate_unit_square(17)
        exact = sine_mode(mesh)
        u = solve_poisson(mesh, 2 * np.pi ** 2 * exact)
        l2, _ = relative_errors(mesh, exact, u)
        assert l2 <= 5e-2

    def test_solver_reuse(self, small_square, rng):
        """A shared factorization gives the same answer."""
        solver = PoissonSolver(small_square)
        f = rng.standard_normal(small_square.n_nodes)
        assert np.allclose(solve_poisson(small_square, f, solver), solve_poisson(small_square, f))

    def test_cg_method(self, small_square, rng):
        f = rng.standard_normal(small_square.n_nodes)
        direct = PoissonSolver(small_square).solve(f)
        iterative = PoissonSolver(small_square, method="cg").solve(f)
        assert np.allclose(direct, iterative, atol=1e-8 * np.abs(direct).max())

    def test_wrong_length(self, small_square):
        with pytest.raises(ShapeMismatch):
            solve_poisson(small_square, np.ones(small_square.n_nodes + 1))


class TestHeat:
    """Implicit Euler trajectories."""

    def test_first_mode_decay(self):
        """u0 = phi_1 decays like exp(-D lambda_1 T) within 1e-3."""
        mesh = generate_unit_square(17)
        basis = eigenbasis_for_mesh(mesh, 1)
        phi1 = basis.nodal_modes[:, 0]
        spec = ProblemSpec(problem="heat_homogeneous", snapshot_times=[1.0], **HEAT)
        final = run_trajectory(mesh, spec, phi1)[-1]
        expected = np.exp(-0.02 * basis.eigenvalues[0] * 1.0) * phi1
        l2, _ = relative_errors(mesh, expected, final)
        assert l2 <= 1e-3

    def test_geometric_decay(self):
        """Each step multiplies a discrete eigenvector by 1 / (1 + dt D lambda)."""
        mesh = generate_unit_square(9)
        basis = eigenbasis_for_mesh(mesh, 2)
        phi = basis.nodal_modes[:, 1]
        spec = ProblemSpec(problem="heat_homogeneous", snapshot_times=[0.0025], **HEAT)
        out = step_heat(mesh, spec, phi)
        factor = 1.0 / (1.0 + 0.0025 * 0.02 * basis.eigenvalues[1])
        assert np.allclose(out, factor * phi, atol=1e-10)

    def test_snapshots(self, small_square):
        """One row per snapshot time, decaying in norm."""
        spec = ProblemSpec(problem="heat_homogeneous", snapshot_times=[0.25, 0.5, 1.0], **HEAT)
        traj = run_trajectory(small_square, spec, sine_mode(small_square))
        assert traj.shape == (3, small_square.n_nodes)
        norms = np.linalg.norm(traj, axis=1)
        assert np.all(np.diff(norms) < 0)

    def test_zero_state_without_forcing(self, small_square):
        spec = ProblemSpec(problem="heat_homogeneous", snapshot_times=[0.5], **HEAT)
        assert np.all(run_trajectory(small_square, spec, np.zeros(small_square.n_nodes)) == 0.0)

    def test_boundary_violation(self, small_square):
        """A nonzero boundary value in the state is rejected."""
        spec = ProblemSpec(problem="heat_homogeneous", snapshot_times=[0.5], **HEAT)
        u0 = np.zeros(small_square.n_nodes)
        u0[small_square.boundary_nodes[0]] = 1.0
        with pytest.raises(ValidationError):
            run_trajectory(small_square, spec, u0)

    def test_forced_steady_limit(self, small_square):
        """Long forced runs approach the Poisson solution of f / D."""
        spec = ProblemSpec(problem="heat_forced", diffusivity=1.0, t_final=4.0, dt=0.01, snapshot_times=[4.0])
        f = np.ones(small_square.n_nodes)
        final = HeatStepper(small_square, spec).trajectory(np.zeros(small_square.n_nodes), f)[-1]
        l2, _ = relative_errors(small_square, solve_poisson(small_square, f), final)
        assert l2 <= 1e-3

    def test_mass_norm_never_grows(self, small_square, rng):
        """||u_{n+1}||_M <= ||u_n||_M at every unforced step."""
        spec = ProblemSpec(problem="heat_homogeneous", diffusivity=1.0, t_final=0.2, dt=0.01, snapshot_times=[0.2])
        stepper = HeatStepper(small_square, spec)
        mass = fem_operators(small_square).mass
        u = stepper.ops.dofs.extend(rng.standard_normal(stepper.ops.dofs.n_interior))
        norm = np.sqrt(u @ (mass @ u))
        for _ in range(20):
            u = stepper.step(u)
            next_norm = np.sqrt(u @ (mass @ u))
            assert next_norm <= norm * (1 + 1e-12)
            norm = next_norm

    def test_maximum_principle(self, small_square):
        """A non-negative initial state stays within [0, max u0]."""
        spec = ProblemSpec(problem="heat_homogeneous", diffusivity=1.0, t_final=1.0, dt=0.1, snapshot_times=[1.0])
        stepper = HeatStepper(small_square, spec)
        u = np.maximum(sine_mode(small_square) - 0.5, 0.0)
        peak = u.max()
        for _ in range(10):
            u = stepper.step(u)
            assert u.min() >= -1e-12 * peak
            assert u.max() <= peak * (1 + 1e-12)

    def test_first_order_in_dt(self, small_square):
        """Error against exp(-D lambda t) halves with dt."""
        basis = eigenbasis_for_mesh(small_square, 2)
        u0 = basis.nodal_modes @ np.array([1.0, 0.5])
        exact = basis.nodal_modes @ (np.array([1.0, 0.5]) * np.exp(-0.05 * basis.eigenvalues))
        errors = []
        for dt in (0.1, 0.05, 0.025):
            spec = ProblemSpec(problem="heat_homogeneous", diffusivity=0.05, t_final=1.0, dt=dt, snapshot_times=[1.0])
            errors.append(relative_errors(small_square, exact, run_trajectory(small_square, spec, u0)[-1])[0])
        ratios = [errors[0] / errors[1], errors[1] / errors[2]]
        assert all(1.7 <= r <= 2.3 for r in ratios)

    def test_poisson_spec_rejected(self, small_square):
        with pytest.raises(ConfigurationError):
            HeatStepper(small_square, ProblemSpec(problem="poisson"))

    @pytest.mark.slow
    def test_zero_network_forced_response(self):
        """With a zero branch output the model's forced term matches the u0 = 0 ground truth."""
        mesh = generate_unit_square(35)
        basis = eigenbasis_for_mesh(mesh, 100)
        spec = ProblemSpec(problem="heat_forced", snapshot_times=[1.0], **HEAT)
        f = sample_field(GrfSpec(), 0, mesh.nodes, STREAM_FORCING)
        truth = run_trajectory(mesh, spec, np.zeros(mesh.n_nodes), f)[-1]

        rule = ReconstructionRule.for_problem("heat_forced", basis, 0.02)
        model = init_model(mesh.n_nodes, 100, rule, seed=0)
        model = model.with_params(np.zeros_like(model.weights), np.zeros_like(model.bias))
        f_coeffs = project(basis, fem_operators(mesh).mass, f).coeffs
        pred = forward(model, np.zeros(mesh.n_nodes), t=1.0, query_eval=basis.nodal_modes, f_coeffs=f_coeffs)
        l2, _ = relative_errors(mesh, truth, pred)
        assert l2 <= 2e-2


class TestDatasetBuilder:
    """GRF inputs paired with ground truth."""

    GRF = GrfSpec(variance=15.0, length_scale=0.3, n_modes=128, seed=11)

    def test_poisson_dataset(self, small_square):
        ds = build_dataset(small_square, None, ProblemSpec(), self.GRF, 4)
        assert ds.outputs.shape == (4, small_square.n_nodes)
        assert ds.inputs_u0 is None
        assert ds.times.size == 0
        assert np.allclose(ds.outputs[2], solve_poisson(small_square, ds.inputs_f[2]))
        assert ds.grf_meta['grf']['seed'] == 11

    def test_heat_dataset(self, small_square):
        spec = ProblemSpec(problem="heat_homogeneous", snapshot_times=[0.1, 0.2], **HEAT)
        cutoff = compute_cutoff_field(small_square)
        ds = build_dataset(small_square, cutoff, spec, self.GRF, 3)
        assert ds.outputs.shape == (3, 2, small_square.n_nodes)
        assert ds.inputs_f is None
        assert np.array_equal(ds.times, [0.1, 0.2])
        assert np.all(ds.inputs_u0[:, small_square.boundary_nodes] == 0.0)
        assert np.array_equal(ds.sensor_inputs, ds.inputs_u0)

    def test_forced_dataset_coefficients(self, small_square, small_basis):
        spec = ProblemSpec(problem="heat_forced", snapshot_times=[0.1], **HEAT)
        ds = build_dataset(small_square, compute_cutoff_field(small_square), spec, self.GRF, 2, basis=small_basis)
        assert ds.forcing_coeffs.shape == (2, small_basis.n_modes)
        assert ds.basis_id == small_basis.basis_id
        expected = project(small_basis, fem_operators(small_square).mass, ds.inputs_f).coeffs
        assert np.allclose(ds.forcing_coeffs, expected)

    def test_deterministic(self, small_square):
        a = build_dataset(small_square, None, ProblemSpec(), self.GRF, 3)
        b = build_dataset(small_square, None, ProblemSpec(), self.GRF, 3)
        assert np.array_equal(a.outputs, b.outputs)

    def test_prefix_stable(self, small_square):
        """Sample i is the same whatever n_samples is."""
        a = build_dataset(small_square, None, ProblemSpec(), self.GRF, 2)
        b = build_dataset(small_square, None, ProblemSpec(), self.GRF, 5)
        assert np.array_equal(a.inputs_f, b.inputs_f[:2])

    def test_empty_dataset(self, small_square):
        ds = build_dataset(small_square, None, ProblemSpec(), self.GRF, 0)
        assert ds.n_samples == 0

    def test_heat_needs_cutoff(self, small_square):
        spec = ProblemSpec(problem="heat_homogeneous", snapshot_times=[0.1], **HEAT)
        with pytest.raises(ValidationError):
            build_dataset(small_square, None, spec, self.GRF, 1)

    def test_negative_count(self, small_square):
        with pytest.raises(ValidationError):
            build_dataset(small_square, None, ProblemSpec(), self.GRF, -1)

    def test_subset(self, small_square):
        ds = build_dataset(small_square, None, ProblemSpec(), self.GRF, 4)
        sub = ds.subset([3, 1])
        assert np.array_equal(sub.outputs, ds.outputs[[3, 1]])

    def test_inconsistent_arrays(self):
        with pytest.raises(ShapeMismatch):
            Dataset(problem="poisson", outputs=np.zeros((3, 5)), mesh_id="m", inputs_f=np.zeros((2, 5)))


class TestSplit:
    """Seeded train / held-out split."""

    def test_ninety_ten(self):
        train, test = split_indices(500, 0.9, 0)
        assert train.size == 450 and test.size == 50
        assert np.intersect1d(train, test).size == 0
        assert np.array_equal(np.sort(np.concatenate([train, test])), np.arange(500))

    def test_seeded(self):
        assert np.array_equal(split_indices(50, 0.9, 3)[1], split_indices(50, 0.9, 3)[1])
        assert not np.array_equal(split_indices(50, 0.9, 3)[1], split_indices(50, 0.9, 4)[1])

    def test_both_sides_non_empty(self):
        train, test = split_indices(2, 0.99, 0)
        assert train.size == 1 and test.size == 1

    @pytest.mark.parametrize("frac", [0.0, 1.0, 1.5])
    def test_bad_fraction(self, frac):
        with pytest.raises(ValidationError):
            split_indices(10, frac, 0)
