"""
Ground-truth solvers: steady Poisson and implicit-Euler heat trajectories with
homogeneous Dirichlet conditions, all on interior degrees of freedom.
"""
from typing import Optional

import numpy as np

from src.fem.assembly import fem_operators
from src.fem.solvers import SpdSolver
from src.models.specs import ProblemSpec
from src.utils.exceptions import ConfigurationError, ValidationError
from src.utils.logger import get_logger
from src.utils.validators import ArrayValidator

logger = get_logger('sim')

BOUNDARY_TOL = 1e-12


class PoissonSolver:
    """-Laplace(u) = f, u = 0 on the boundary; the stiffness factorization is reused."""

    def __init__(self, mesh, method: str = "direct"):
        self.mesh = mesh
        self.ops = fem_operators(mesh)
        self._solver = SpdSolver(self.ops.stiffness_int, method=method)

    def solve(self, f) -> np.ndarray:
        f = ArrayValidator.as_vector('f', f, length=self.mesh.n_nodes, operation='solve_poisson')
        rhs = self.ops.dofs.restrict(self.ops.mass @ f)
        return self.ops.dofs.extend(self._solver.solve(rhs))


def solve_poisson(mesh, f, solver: Optional[PoissonSolver] = None) -> np.ndarray:
    """Nodal P1 solution of the Dirichlet Poisson problem with load ``f``."""
    return (solver or PoissonSolver(mesh)).solve(f)


class HeatStepper:
    """
    Implicit Euler for u_t = D Laplace(u) + f:
    (M + dt D K) u_next = M u_prev + dt M f on interior DOFs.
    The system matrix is factorized once per (mesh, spec).
    """

    def __init__(self, mesh, spec: ProblemSpec, method: str = "direct"):
        if not spec.is_heat:
            raise ConfigurationError("HeatStepper needs a heat problem", details={'problem': spec.problem})
        self.mesh = mesh
        self.spec = spec
        self.ops = fem_operators(mesh)
        system = self.ops.mass_int + (spec.dt * spec.diffusivity) * self.ops.stiffness_int
        self._solver = SpdSolver(system, method=method)

    def forcing_rhs(self, f) -> np.ndarray:
        """Interior load dt (M f) added at every step."""
        if f is None:
            return np.zeros(self.ops.dofs.n_interior)
        f = ArrayValidator.as_vector('f', f, length=self.mesh.n_nodes, operation='step_heat')
        return self.spec.dt * self.ops.dofs.restrict(self.ops.mass @ f)

    def _check_boundary(self, u: np.ndarray) -> None:
        scale = max(1.0, float(np.max(np.abs(u))) if u.size else 1.0)
        if np.any(np.abs(u[self.mesh.boundary_nodes]) > BOUNDARY_TOL * scale):
            raise ValidationError("state must vanish on boundary nodes", field='u_prev', operation='step_heat')

    def step(self, u_prev, load: Optional[np.ndarray] = None) -> np.ndarray:
        u_prev = ArrayValidator.as_vector('u_prev', u_prev, length=self.mesh.n_nodes, operation='step_heat')
        self._check_boundary(u_prev)
        rhs = self.ops.dofs.restrict(self.ops.mass @ u_prev)
        if load is not None:
            rhs = rhs + load
        return self.ops.dofs.extend(self._solver.solve(rhs))

    def trajectory(self, u0, f=None) -> np.ndarray:
        """States at the snapshot times, shape (n_snapshots, N_nodes)."""
        load = self.forcing_rhs(f)
        targets = self.spec.snapshot_steps
        snapshots = np.empty((len(targets), self.mesh.n_nodes))
        u = ArrayValidator.as_vector('u0', u0, length=self.mesh.n_nodes, operation='run_trajectory')
        row = 0
        for step in range(1, targets[-1] + 1):
            u = self.step(u, load)
            while row < len(targets) and targets[row] == step:
                snapshots[row] = u
                row += 1
        return snapshots


def step_heat(mesh, spec: ProblemSpec, u_prev, f=None, stepper: Optional[HeatStepper] = None) -> np.ndarray:
    """One implicit-Euler step."""
    stepper = stepper or HeatStepper(mesh, spec)
    return stepper.step(u_prev, stepper.forcing_rhs(f))


def run_trajectory(mesh, spec: ProblemSpec, u0, f=None, stepper: Optional[HeatStepper] = None) -> np.ndarray:
    """Repeated implicit-Euler steps recorded at ``spec.snapshot_times``."""
    return (stepper or HeatStepper(mesh, spec)).trajectory(u0, f)
