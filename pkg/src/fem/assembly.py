"""
P1 stiffness and mass assembly with closed-form element integrals, and
homogeneous Dirichlet conditions by restriction to interior degrees of freedom.
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from src.utils.exceptions import DegenerateElement
from src.utils.logger import get_logger

logger = get_logger('fem')

MIN_ELEMENT_VOLUME = 1e-14


def _element_geometry(mesh):
    """Unsigned volumes (E,) and barycentric gradients (E, d+1, d)."""
    dim = mesh.dim
    verts = mesh.nodes[mesh.elements]
    T = verts[:, 1:, :] - verts[:, :1, :]
    volumes = np.abs(np.linalg.det(T)) / math.factorial(dim)

    small = np.flatnonzero(volumes < MIN_ELEMENT_VOLUME)
    if small.size:
        e = int(small[0])
        raise DegenerateElement(f"{small.size} element(s) with volume below {MIN_ELEMENT_VOLUME}",
                                element=e, volume=float(volumes[e]), operation='assembly')

    grads = np.empty((len(T), dim + 1, dim))
    grads[:, 1:, :] = np.transpose(np.linalg.inv(T), (0, 2, 1))
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    return volumes, grads


def _to_csr(mesh, local: np.ndarray) -> sp.csr_matrix:
    """Sum element matrices into a symmetrized CSR matrix with sorted indices."""
    n = mesh.n_nodes
    k = mesh.dim + 1
    rows = np.broadcast_to(mesh.elements[:, :, None], (mesh.n_elements, k, k))
    cols = np.broadcast_to(mesh.elements[:, None, :], (mesh.n_elements, k, k))
    A = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A = (0.5 * (A + A.T)).tocsr()
    A.sort_indices()
    return A


def local_stiffness(volumes: np.ndarray, grads: np.ndarray) -> np.ndarray:
    return volumes[:, None, None] * np.einsum('eid,ejd->eij', grads, grads)


def local_mass(volumes: np.ndarray, dim: int) -> np.ndarray:
    """Consistent P1 mass: vol/((d+1)(d+2)) * (1 + delta_ij)."""
    k = dim + 1
    pattern = (np.ones((k, k)) + np.eye(k)) / ((dim + 1) * (dim + 2))
    return volumes[:, None, None] * pattern[None, :, :]


def assemble_stiffness(mesh) -> sp.csr_matrix:
    """Global stiffness matrix for the integral of grad u . grad v."""
    volumes, grads = _element_geometry(mesh)
    return _to_csr(mesh, local_stiffness(volumes, grads))


def assemble_mass(mesh) -> sp.csr_matrix:
    """Global consistent mass matrix for the integral of u v."""
    volumes, _ = _element_geometry(mesh)
    return _to_csr(mesh, local_mass(volumes, mesh.dim))


@dataclass(frozen=True)
class DofMap:
    """Interior degrees of freedom; boundary nodes map to -1."""
    interior_to_node: np.ndarray
    node_to_interior: np.ndarray

    @classmethod
    def from_mesh(cls, mesh) -> "DofMap":
        return cls.from_boundary(mesh.n_nodes, mesh.boundary_nodes)

    @classmethod
    def from_boundary(cls, n_nodes: int, boundary_nodes) -> "DofMap":
        mask = np.ones(n_nodes, dtype=bool)
        mask[np.asarray(boundary_nodes, dtype=np.int64)] = False
        interior = np.flatnonzero(mask).astype(np.int64)
        inverse = np.full(n_nodes, -1, dtype=np.int64)
        inverse[interior] = np.arange(interior.size)
        return cls(interior_to_node=interior, node_to_interior=inverse)

    @classmethod
    def identity(cls, n: int) -> "DofMap":
        idx = np.arange(n, dtype=np.int64)
        return cls(interior_to_node=idx, node_to_interior=idx.copy())

    @property
    def n_interior(self) -> int:
        return int(self.interior_to_node.size)

    @property
    def n_nodes(self) -> int:
        return int(self.node_to_interior.size)

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Interior entries along the last axis."""
        return np.asarray(values)[..., self.interior_to_node]

    def extend(self, values: np.ndarray) -> np.ndarray:
        """Nodal array (last axis) with zeros on boundary nodes."""
        values = np.asarray(values, dtype=np.float64)
        out = np.zeros(values.shape[:-1] + (self.n_nodes,))
        out[..., self.interior_to_node] = values
        return out


def restrict_interior(A: sp.spmatrix, dofs: DofMap) -> sp.csr_matrix:
    """Principal submatrix on interior degrees of freedom."""
    idx = dofs.interior_to_node
    sub = sp.csr_matrix(A)[idx][:, idx].tocsr()
    sub.sort_indices()
    return sub


@dataclass(frozen=True)
class FemOperators:
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    dofs: DofMap
    stiffness_int: sp.csr_matrix
    mass_int: sp.csr_matrix


@lru_cache(maxsize=8)
def fem_operators(mesh) -> FemOperators:
    """Assembled and restricted operators, cached per mesh instance."""
    K = assemble_stiffness(mesh)
    M = assemble_mass(mesh)
    dofs = DofMap.from_mesh(mesh)
    logger.debug(
        f"Assembled operators: {mesh.n_nodes} nodes, {dofs.n_interior} interior, nnz={K.nnz}",
        operation='fem_operators',
    )
    return FemOperators(K, M, dofs, restrict_interior(K, dofs), restrict_interior(M, dofs))
