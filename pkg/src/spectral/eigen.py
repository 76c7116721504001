"""
Dirichlet Laplacian eigenbasis on interior degrees of freedom.

The generalized problem K phi = lambda M phi is solved densely for small
systems and with shift-invert Lanczos (ARPACK, sigma = 0) otherwise. Sparse
results get a Rayleigh-Ritz pass that restores M-orthonormality, and every
basis is checked against its orthonormality and residual bounds.
"""
import hashlib
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from config.settings import settings
from src.fem.assembly import DofMap, fem_operators
from src.geometry.locate import interpolation_matrix
from src.utils.exceptions import HashMismatch, InsufficientDofs, NotConverged, ShapeMismatch, ValidationError
from src.utils.logger import get_logger
from src.utils.performance import performance_monitor

logger = get_logger('eig')

DENSE_LIMIT = 400
ARPACK_SEED = 0


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """M-orthonormal eigenpairs (ascending) of the interior-restricted pencil."""
    eigenvalues: np.ndarray
    modes: np.ndarray
    dofs: DofMap
    mesh_id: str = ""

    @property
    def n_modes(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def n_interior(self) -> int:
        return int(self.modes.shape[0])

    @cached_property
    def basis_id(self) -> str:
        digest = hashlib.sha256(self.mesh_id.encode('utf-8'))
        digest.update(self.eigenvalues.astype('<f8').tobytes())
        digest.update(np.ascontiguousarray(self.modes).astype('<f8').tobytes())
        return digest.hexdigest()

    @cached_property
    def nodal_modes(self) -> np.ndarray:
        """Modes extended by zero on boundary nodes, shape (N_nodes, M)."""
        return self.dofs.extend(self.modes.T).T

    def truncate(self, m_modes: int) -> "EigenBasis":
        """Basis made of the first ``m_modes`` eigenpairs."""
        if not 1 <= m_modes <= self.n_modes:
            raise InsufficientDofs(f"cannot truncate a {self.n_modes}-mode basis to {m_modes}",
                                   requested=m_modes, available=self.n_modes, operation='truncate')
        return EigenBasis(self.eigenvalues[:m_modes].copy(), self.modes[:, :m_modes].copy(), self.dofs, self.mesh_id)


def fix_signs(modes: np.ndarray) -> np.ndarray:
    """Flip columns so the first largest-magnitude entry is positive."""
    if modes.size == 0:
        return modes
    pivot = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[pivot, np.arange(modes.shape[1])])
    signs[signs == 0] = 1.0
    return modes * signs


def rayleigh_ritz(K: sp.spmatrix, M: sp.spmatrix, vectors: np.ndarray):
    """Eigenpairs of the pencil projected on span(vectors)."""
    Kr = vectors.T @ (K @ vectors)
    Mr = vectors.T @ (M @ vectors)
    Kr = 0.5 * (Kr + Kr.T)
    Mr = 0.5 * (Mr + Mr.T)
    values, coeffs = sla.eigh(Kr, Mr)
    return values, vectors @ coeffs


def eigen_residuals(K: sp.spmatrix, M: sp.spmatrix, eigenvalues: np.ndarray, modes: np.ndarray) -> np.ndarray:
    """||K phi_k - lambda_k M phi_k||_2 per mode."""
    return np.linalg.norm(K @ modes - (M @ modes) * eigenvalues[None, :], axis=0)


def orthonormality_error(M: sp.spmatrix, modes: np.ndarray) -> float:
    """max |Phi^T M Phi - I| entrywise."""
    gram = modes.T @ (M @ modes)
    return float(np.max(np.abs(gram - np.eye(modes.shape[1])))) if modes.size else 0.0


def _dense_eigs(K, M, m_modes: int):
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=np.float64)
    Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=np.float64)
    return sla.eigh(Kd, Md, subset_by_index=[0, m_modes - 1])


def _shift_invert_eigs(K, M, m_modes: int, tol_eig: float):
    n = K.shape[0]
    lu = splu(sp.csc_matrix(K))
    op_inv = LinearOperator(K.shape, matvec=lu.solve, dtype=np.float64)
    v0 = np.random.default_rng(ARPACK_SEED).standard_normal(n)
    ncv = min(n, max(2 * m_modes + 1, 20))
    try:
        values, vectors = eigsh(K, k=m_modes, M=M, sigma=0.0, which='LM', OPinv=op_inv, v0=v0,
                                ncv=ncv, tol=tol_eig * 1e-3)
    except ArpackNoConvergence as e:
        raise NotConverged(f"ARPACK returned {len(e.eigenvalues)} of {m_modes} eigenpairs",
                           operation='compute_eigenbasis')
    return rayleigh_ritz(K, M, vectors)


@performance_monitor(operation='compute_eigenbasis', component='eig',
                     work=lambda basis: {'dofs': basis.n_interior, 'modes': basis.n_modes})
def compute_eigenbasis(K, M, m_modes: int, tol_eig: Optional[float] = None, dofs: Optional[DofMap] = None,
                       mesh_id: str = "") -> EigenBasis:
    """Smallest ``m_modes`` eigenpairs of (K, M), M-orthonormal with a fixed sign convention."""
    tol_eig = settings.TOL_EIG if tol_eig is None else tol_eig
    n = K.shape[0]
    if K.shape != M.shape or K.shape[0] != K.shape[1]:
        raise ShapeMismatch("K and M must be square and of equal size", expected=K.shape, found=M.shape,
                            operation='compute_eigenbasis')
    if m_modes < 1:
        raise ValidationError("m_modes must be at least 1", field='m_modes', value=m_modes)
    if m_modes > n:
        raise InsufficientDofs(f"requested {m_modes} modes but only {n} interior DOFs exist",
                               requested=m_modes, available=n, operation='compute_eigenbasis')
    dofs = DofMap.identity(n) if dofs is None else dofs

    dense = n <= DENSE_LIMIT or m_modes >= n - 1
    if dense:
        values, vectors = _dense_eigs(K, M, m_modes)
    else:
        values, vectors = _shift_invert_eigs(sp.csr_matrix(K), sp.csr_matrix(M), m_modes, tol_eig)

    order = np.argsort(values, kind='stable')
    values, vectors = values[order], fix_signs(vectors[:, order])

    orth = orthonormality_error(M, vectors)
    if orth > settings.TOL_ORTH:
        raise NotConverged(f"basis is not M-orthonormal (max deviation {orth:.2e})", residual=orth,
                           operation='compute_eigenbasis')
    residuals = eigen_residuals(K, M, values, vectors)
    bound = tol_eig * np.maximum(np.abs(values), np.finfo(float).tiny)
    if np.any(residuals > bound):
        worst = int(np.argmax(residuals / bound))
        raise NotConverged(f"eigenpair {worst} residual {residuals[worst]:.2e} exceeds bound",
                           residual=float(residuals[worst]), operation='compute_eigenbasis')

    logger.info(
        f"Computed {m_modes} eigenpairs ({'dense' if dense else 'shift-invert'}), "
        f"lambda_1={values[0]:.6g}",
        operation='compute_eigenbasis',
        extra_data={'n_interior': n, 'max_orth_error': orth},
    )
    values.setflags(write=False)
    vectors.setflags(write=False)
    return EigenBasis(eigenvalues=values, modes=vectors, dofs=dofs, mesh_id=mesh_id)


def eigenbasis_for_mesh(mesh, m_modes: int, tol_eig: Optional[float] = None) -> EigenBasis:
    """Assemble, restrict and solve in one call."""
    ops = fem_operators(mesh)
    return compute_eigenbasis(ops.stiffness_int, ops.mass_int, m_modes, tol_eig, dofs=ops.dofs,
                              mesh_id=mesh.mesh_id)


def check_mesh(basis: EigenBasis, mesh) -> None:
    if basis.mesh_id and basis.mesh_id != mesh.mesh_id:
        raise HashMismatch("basis was computed on a different mesh", expected=basis.mesh_id,
                           found=mesh.mesh_id)


def evaluate_basis_at_points(basis: EigenBasis, mesh, points) -> np.ndarray:
    """P1 interpolation of every mode at ``points``, shape (n_points, M)."""
    check_mesh(basis, mesh)
    return np.asarray(interpolation_matrix(mesh, points) @ basis.nodal_modes)


def unit_square_eigenvalues(count: int) -> np.ndarray:
    """Smallest ``count`` analytic Dirichlet eigenvalues pi^2 (m^2 + n^2) of the unit square."""
    k = 2 * int(np.ceil(np.sqrt(count))) + 1
    m, n = np.meshgrid(np.arange(1, k + 1), np.arange(1, k + 1))
    return np.sort((np.pi ** 2) * (m ** 2 + n ** 2), axis=None)[:count]
