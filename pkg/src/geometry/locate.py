"""
Point location and P1 interpolation on simplex meshes.
Candidates come from a KD-tree over element centroids; points not resolved by
the nearest candidates fall back to an exhaustive barycentric search.
"""
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from config.settings import settings
from src.utils.exceptions import NotInDomain
from src.utils.logger import get_logger
from src.utils.validators import ArrayValidator

logger = get_logger('locate')

N_CANDIDATES = 16
BRUTE_FORCE_BLOCK = 500_000  # point-element pairs per exhaustive block


class PointLocator:
    """Barycentric point location bound to one mesh."""

    def __init__(self, mesh, tol_bc: Optional[float] = None):
        self.mesh = mesh
        self.tol_bc = settings.TOL_BC if tol_bc is None else tol_bc
        verts = mesh.nodes[mesh.elements]
        self._origin = verts[:, 0, :]
        edges = np.transpose(verts[:, 1:, :] - verts[:, :1, :], (0, 2, 1))
        self._inverse = np.full_like(edges, np.nan)
        ok = np.abs(np.linalg.det(edges)) > 0.0
        if np.any(ok):
            self._inverse[ok] = np.linalg.inv(edges[ok])
        self._tree = cKDTree(verts.mean(axis=1)) if mesh.n_elements else None

    def barycentric(self, points: np.ndarray, elements: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of points[i] in elements[i] (broadcast over trailing axes)."""
        local = np.einsum('...ij,...j->...i', self._inverse[elements], points - self._origin[elements])
        return np.concatenate([1.0 - local.sum(axis=-1, keepdims=True), local], axis=-1)

    def _best_of(self, points: np.ndarray, candidates: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        bary = self.barycentric(points[:, None, :], candidates)
        score = np.nan_to_num(bary.min(axis=-1), nan=-np.inf)
        best = np.argmax(score, axis=1)
        rows = np.arange(points.shape[0])
        return candidates[rows, best], bary[rows, best], score[rows, best]

    def _brute_force(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n_elem = self.mesh.n_elements
        block = max(1, BRUTE_FORCE_BLOCK // max(n_elem, 1))
        found_e = np.zeros(points.shape[0], dtype=np.int64)
        found_b = np.zeros((points.shape[0], self.mesh.dim + 1))
        found_s = np.full(points.shape[0], -np.inf)
        all_elements = np.arange(n_elem)
        for start in range(0, points.shape[0], block):
            chunk = slice(start, start + block)
            candidates = np.broadcast_to(all_elements, (points[chunk].shape[0], n_elem))
            found_e[chunk], found_b[chunk], found_s[chunk] = self._best_of(points[chunk], candidates)
        return found_e, found_b, found_s

    def _search(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = points.shape[0]
        if self._tree is None or n == 0:
            return (np.zeros(n, dtype=np.int64), np.zeros((n, self.mesh.dim + 1)), np.full(n, -np.inf))
        k = min(N_CANDIDATES, self.mesh.n_elements)
        _, candidates = self._tree.query(points, k=k)
        candidates = np.asarray(candidates, dtype=np.int64).reshape(n, k)
        elements, bary, score = self._best_of(points, candidates)

        missed = np.flatnonzero(score < -self.tol_bc)
        if missed.size:
            e2, b2, s2 = self._brute_force(points[missed])
            elements[missed], bary[missed], score[missed] = e2, b2, s2
        return elements, bary, score

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points lying in the closed domain (within tol_bc)."""
        points = ArrayValidator.as_matrix('points', points, n_cols=self.mesh.dim, operation='contains')
        _, _, score = self._search(points)
        return score >= -self.tol_bc

    def locate(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Element index and barycentric coordinates per point; NotInDomain lists offenders."""
        points = ArrayValidator.as_matrix('points', points, n_cols=self.mesh.dim, operation='locate_points')
        elements, bary, score = self._search(points)
        outside = np.flatnonzero(score < -self.tol_bc)
        if outside.size:
            raise NotInDomain(f"{outside.size} point(s) outside the mesh", point_indices=outside.tolist(),
                              operation='locate_points')
        return elements, bary


def locate_points(mesh, points) -> Tuple[np.ndarray, np.ndarray]:
    return mesh.locator.locate(points)


def locate_point(mesh, x) -> Tuple[int, np.ndarray]:
    """Containing element and barycentric coordinates of a single point."""
    x = ArrayValidator.as_vector('x', x, length=mesh.dim, operation='locate_point')
    elements, bary = mesh.locator.locate(x[np.newaxis, :])
    return int(elements[0]), bary[0]


def interpolation_matrix(mesh, points) -> sp.csr_matrix:
    """Sparse (n_points x N_nodes) P1 interpolation operator."""
    elements, bary = locate_points(mesh, points)
    n_points = bary.shape[0]
    rows = np.repeat(np.arange(n_points), mesh.dim + 1)
    cols = mesh.elements[elements].ravel()
    return sp.csr_matrix((bary.ravel(), (rows, cols)), shape=(n_points, mesh.n_nodes))


def interpolate(mesh, values: np.ndarray, points) -> np.ndarray:
    """P1 interpolation of nodal ``values`` (vector or N_nodes x k) at ``points``."""
    return interpolation_matrix(mesh, points) @ values


def structured_query_grid(mesh, spacing: float) -> np.ndarray:
    """Equally spaced grid over the mesh bounding box, restricted to points in the domain."""
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    axes = [np.linspace(a, b, int(round((b - a) / spacing)) + 1) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing='xy'), axis=-1).reshape(-1, mesh.dim)
    inside = mesh.locator.contains(grid)
    logger.debug(f"Query grid: {int(inside.sum())} of {grid.shape[0]} points inside", operation='query_grid')
    return grid[inside]
