"""
Discretized domains: the structured unit square, the procedural fins geometry
and externally supplied meshes. Every constructor goes through ``Mesh.from_arrays``
which orients elements and detects the boundary.
"""
import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import List, Tuple

import numpy as np

from src.models.specs import GeometrySpec
from src.utils.exceptions import InvalidGeometry, ValidationError
from src.utils.logger import get_logger

try:
    import triangle as _triangle_lib
except ImportError:
    _triangle_lib = None

logger = get_logger('mesh')

# Minimum interior angle requested from the constrained Delaunay mesher (degrees)
MIN_ANGLE = 30


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable P1 simplex mesh (triangles in 2D, tetrahedra in 3D)."""
    nodes: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray

    @classmethod
    def from_arrays(cls, nodes, elements) -> "Mesh":
        """Build a mesh with canonical (positive) element orientation and detected boundary."""
        nodes = np.ascontiguousarray(nodes, dtype=np.float64)
        elements = np.ascontiguousarray(elements, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] not in (2, 3):
            raise ValidationError("nodes must be an (N, 2) or (N, 3) array", field='nodes', value=nodes.shape)
        dim = nodes.shape[1]
        if elements.ndim != 2 or elements.shape[1] != dim + 1:
            raise ValidationError(f"elements must have {dim + 1} vertices each", field='elements',
                                  value=elements.shape)
        if elements.size and (elements.min() < 0 or elements.max() >= nodes.shape[0]):
            raise ValidationError("element vertex index out of range", field='elements')

        elements = orient_elements(nodes, elements)
        boundary = detect_boundary(elements, dim)

        for arr in (nodes, elements, boundary):
            arr.setflags(write=False)
        return cls(nodes=nodes, elements=elements, boundary_nodes=boundary)

    @property
    def dim(self) -> int:
        return int(self.nodes.shape[1])

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def element_volumes(self) -> np.ndarray:
        """Signed element volumes (positive after orientation)."""
        return signed_volumes(self.nodes, self.elements)

    @property
    def volume(self) -> float:
        return float(self.element_volumes.sum())

    @cached_property
    def mesh_id(self) -> str:
        """Content hash of node coordinates and connectivity."""
        digest = hashlib.sha256()
        digest.update(np.int64(self.dim).tobytes())
        digest.update(self.nodes.astype('<f8').tobytes())
        digest.update(self.elements.astype('<i8').tobytes())
        return digest.hexdigest()

    @cached_property
    def locator(self):
        from src.geometry.locate import PointLocator
        return PointLocator(self)

    def summary(self) -> dict:
        return {
            'dim': self.dim,
            'nodes': self.n_nodes,
            'elements': self.n_elements,
            'boundary_nodes': int(self.boundary_nodes.size),
            'interior_nodes': int(self.interior_nodes.size),
            'volume': self.volume,
            'mesh_id': self.mesh_id,
        }


def signed_volumes(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """det[v1-v0, ..., vd-v0] / d! for every element."""
    if elements.shape[0] == 0:
        return np.zeros(0)
    dim = nodes.shape[1]
    verts = nodes[elements]
    edges = verts[:, 1:, :] - verts[:, :1, :]
    return np.linalg.det(edges) / math.factorial(dim)


def orient_elements(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Swap the last two vertices of negatively oriented elements."""
    elements = elements.copy()
    flip = signed_volumes(nodes, elements) < 0
    if np.any(flip):
        elements[np.ix_(flip, [-2, -1])] = elements[np.ix_(flip, [-1, -2])]
    return elements


def detect_boundary(elements: np.ndarray, dim: int) -> np.ndarray:
    """Sorted indices of nodes on facets that belong to exactly one element."""
    if elements.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    facets = np.concatenate(
        [elements[:, list(local)] for local in combinations(range(dim + 1), dim)], axis=0
    )
    facets = np.sort(facets, axis=1)
    unique_facets, counts = np.unique(facets, axis=0, return_counts=True)
    if np.any(counts > 2):
        logger.warning(f"{int(np.sum(counts > 2))} non-manifold facet(s) detected", operation='detect_boundary')
    return np.unique(unique_facets[counts == 1]).astype(np.int64)


def generate_unit_square(n_per_side: int) -> Mesh:
    """Structured triangulation of [0,1]^2, each cell split along its lower-left/upper-right diagonal."""
    if n_per_side < 2:
        raise ValidationError("n_per_side must be at least 2", field='n_per_side', value=n_per_side,
                              operation='generate_unit_square')
    coords = np.linspace(0.0, 1.0, n_per_side)
    nodes, elements = _grid_triangulation(coords, coords)
    mesh = Mesh.from_arrays(nodes, elements)
    logger.debug(f"Unit square mesh with {mesh.n_nodes} nodes", operation='generate_unit_square')
    return mesh


def _grid_triangulation(xs: np.ndarray, ys: np.ndarray,
                        keep_cell: np.ndarray = None) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor grid nodes (x fastest) and two CCW triangles per kept cell."""
    nx, ny = xs.size, ys.size
    X, Y = np.meshgrid(xs, ys, indexing='xy')
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing='xy')
    i, j = i.ravel(), j.ravel()
    if keep_cell is not None:
        keep = keep_cell.ravel()
        i, j = i[keep], j[keep]
    n00 = j * nx + i
    n10 = n00 + 1
    n01 = n00 + nx
    n11 = n01 + 1
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return nodes, elements


def fins_polygon(spec: GeometrySpec) -> np.ndarray:
    """CCW vertices of the base rectangle with fins along its top edge."""
    p = spec.fins_params
    W, H = p.base_width, p.base_height
    n = p.fin_count
    if n == 0:
        return np.array([[0.0, 0.0], [W, 0.0], [W, H], [0.0, H]])

    spacing = W / (n + 1)
    if spacing <= p.fin_width:
        raise InvalidGeometry("fins overlap or touch", details={'fin_count': n, 'fin_width': p.fin_width,
                                                                'spacing': spacing}, operation='generate_fins')
    centers = spacing * np.arange(1, n + 1)
    half = 0.5 * p.fin_width
    if centers[0] - half <= 0.0 or centers[-1] + half >= W:
        raise InvalidGeometry("fins extend outside the base", operation='generate_fins')

    vertices: List[Tuple[float, float]] = [(0.0, 0.0), (W, 0.0), (W, H)]
    for c in centers[::-1]:
        vertices += [(c + half, H), (c + half, H + p.fin_length), (c - half, H + p.fin_length), (c - half, H)]
    vertices.append((0.0, H))
    return np.array(vertices)


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd ray casting test, vectorized over points."""
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(points.shape[0], dtype=bool)
    x0, y0 = polygon[:, 0], polygon[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        crosses = (ay > y) != (by > y)
        with np.errstate(divide='ignore', invalid='ignore'):
            x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (x < x_cross)
    return inside


def _sample_boundary(polygon: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Polygon boundary subdivided at spacing <= h, with closing segment list."""
    points = []
    for a, b in zip(polygon, np.roll(polygon, -1, axis=0)):
        n_seg = max(1, int(math.ceil(np.linalg.norm(b - a) / h - 1e-9)))
        t = np.arange(n_seg)[:, None] / n_seg
        points.append(a + t * (b - a))
    points = np.concatenate(points, axis=0)
    idx = np.arange(points.shape[0])
    segments = np.column_stack([idx, np.roll(idx, -1)])
    return points, segments


def _mesh_polygon_triangle(polygon: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    vertices, segments = _sample_boundary(polygon, h)
    max_area = math.sqrt(3.0) / 4.0 * h * h
    result = _triangle_lib.triangulate(
        {'vertices': vertices, 'segments': segments},
        f"pq{MIN_ANGLE}a{max_area:.10g}YQ",
    )
    return np.asarray(result['vertices'], dtype=float), np.asarray(result['triangles'], dtype=np.int64)


def _mesh_polygon_grid(polygon: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Grid-aligned triangulation of a rectilinear polygon."""
    def breakpoints(values: np.ndarray) -> np.ndarray:
        knots = np.unique(values)
        pieces = [knots[:1]]
        for a, b in zip(knots[:-1], knots[1:]):
            n_seg = max(1, int(math.ceil((b - a) / h - 1e-9)))
            pieces.append(np.linspace(a, b, n_seg + 1)[1:])
        return np.concatenate(pieces)

    xs = breakpoints(polygon[:, 0])
    ys = breakpoints(polygon[:, 1])
    cx, cy = np.meshgrid(0.5 * (xs[:-1] + xs[1:]), 0.5 * (ys[:-1] + ys[1:]), indexing='xy')
    keep = points_in_polygon(np.column_stack([cx.ravel(), cy.ravel()]), polygon).reshape(cx.shape)
    nodes, elements = _grid_triangulation(xs, ys, keep)

    used = np.unique(elements)
    remap = np.full(nodes.shape[0], -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    return nodes[used], remap[elements]


def _is_rectilinear(polygon: np.ndarray) -> bool:
    d = np.roll(polygon, -1, axis=0) - polygon
    return bool(np.all((np.abs(d[:, 0]) < 1e-14) | (np.abs(d[:, 1]) < 1e-14)))


def generate_fins(spec: GeometrySpec) -> Mesh:
    """Conforming triangulation of the fins polygon at element size ``spec.resolution``."""
    if spec.kind != "fins":
        raise InvalidGeometry(f"generate_fins called with kind={spec.kind}", operation='generate_fins')
    polygon = fins_polygon(spec)
    h = spec.resolution

    mesher = spec.mesher
    if mesher == "auto":
        mesher = "triangle" if _triangle_lib is not None else "grid"
    if mesher == "triangle":
        if _triangle_lib is None:
            raise InvalidGeometry("the 'triangle' package is not installed", operation='generate_fins')
        nodes, elements = _mesh_polygon_triangle(polygon, h)
    else:
        if not _is_rectilinear(polygon):
            raise InvalidGeometry("grid mesher requires an axis-aligned polygon", operation='generate_fins')
        nodes, elements = _mesh_polygon_grid(polygon, h)

    mesh = Mesh.from_arrays(nodes, elements)
    logger.info(
        f"Fins mesh: {mesh.n_nodes} nodes, {mesh.n_elements} triangles ({mesher})",
        operation='generate_fins',
        extra_data={'fin_count': spec.fins_params.fin_count, 'h': h},
    )
    return mesh


def fins_area(spec: GeometrySpec) -> float:
    p = spec.fins_params
    return p.base_width * p.base_height + p.fin_count * p.fin_width * p.fin_length


def build_mesh(spec: GeometrySpec) -> Mesh:
    """Dispatch on ``spec.kind``."""
    if spec.kind == "unit_square":
        return generate_unit_square(spec.square_nodes_per_side())
    if spec.kind == "fins":
        return generate_fins(spec)
    from src.geometry.msh_reader import read_msh
    return read_msh(spec.path)
