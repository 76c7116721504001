"""
Tests for mesh generation, MSH ingestion and point location.
"""
import numpy as np
import pytest

from src.geometry.locate import (
    interpolate,
    interpolation_matrix,
    locate_point,
    locate_points,
    structured_query_grid,
)
from src.geometry.mesh import (
    Mesh,
    build_mesh,
    detect_boundary,
    fins_area,
    fins_polygon,
    generate_fins,
    generate_unit_square,
    points_in_polygon,
    signed_volumes,
)
from src.geometry.msh_reader import parse_msh, read_msh
from src.models.specs import FinsParams, GeometrySpec
from src.utils.exceptions import InvalidGeometry, NotInDomain, ParseError, UnsupportedElement, ValidationError


SQUARE_MSH = """$MeshFormat
4.1 0 8
$EndMeshFormat
$Nodes
1 5 1 5
2 1 0 5
1
2
3
4
5
0 0 0
1 0 0
1 1 0
0 1 0
0.5 0.5 0
$EndNodes
$Elements
2 8 1 8
1 1 1 4
1 1 2
2 2 3
3 3 4
4 4 1
2 1 2 4
5 1 2 5
6 2 3 5
7 3 4 5
8 4 1 5
$EndElements
"""

TET_MSH = """$MeshFormat
4.1 0 8
$EndMeshFormat
$Nodes
1 4 1 4
3 1 0 4
1
2
3
4
0 0 0
1 0 0
0 1 0
0 0 1
$EndNodes
$Elements
1 1 1 1
3 1 4 1
1 1 2 3 4
$EndElements
"""


class TestUnitSquare:
    """Structured unit square meshes."""

    def test_counts(self):
        """n x n nodes, 2 (n-1)^2 triangles, 4 (n-1) boundary nodes."""
        mesh = generate_unit_square(35)
        assert mesh.n_nodes == 1225
        assert mesh.n_elements == 2 * 34 ** 2
        assert mesh.boundary_nodes.size == 4 * 34
        assert mesh.interior_nodes.size == 33 ** 2

    def test_positive_orientation_and_area(self, small_square):
        """All elements are positively oriented and cover the unit area."""
        volumes = signed_volumes(small_square.nodes, small_square.elements)
        assert np.all(volumes > 0)
        assert small_square.volume == pytest.approx(1.0)

    def test_boundary_nodes_on_edges(self, small_square):
        """Detected boundary nodes are exactly those on the square's edges."""
        x, y = small_square.nodes.T
        on_edge = (np.isclose(x, 0) | np.isclose(x, 1) | np.isclose(y, 0) | np.isclose(y, 1))
        assert np.array_equal(np.flatnonzero(on_edge), small_square.boundary_nodes)

    def test_rejects_single_node(self):
        """n_per_side must be at least 2."""
        with pytest.raises(ValidationError):
            generate_unit_square(1)

    def test_mesh_id_is_content_hash(self):
        """Equal content gives equal ids; arrays are read-only."""
        a, b = generate_unit_square(5), generate_unit_square(5)
        assert a.mesh_id == b.mesh_id
        assert a.mesh_id != generate_unit_square(6).mesh_id
        with pytest.raises(ValueError):
            a.nodes[0, 0] = 1.0

    def test_reorients_clockwise_elements(self):
        """Clockwise input triangles are flipped."""
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        mesh = Mesh.from_arrays(nodes, [[0, 2, 1]])
        assert signed_volumes(mesh.nodes, mesh.elements)[0] > 0

    def test_boundary_detection_3d(self):
        """Every vertex of a single tetrahedron lies on its boundary."""
        assert detect_boundary(np.array([[0, 1, 2, 3]]), 3).tolist() == [0, 1, 2, 3]


class TestFins:
    """Procedural fins geometry."""

    def test_polygon_vertex_count(self):
        """Rectangle plus four vertices per fin."""
        polygon = fins_polygon(GeometrySpec(kind='fins'))
        assert polygon.shape == (4 + 4 * 4, 2)

    def test_zero_fins_is_rectangle(self):
        """fin_count = 0 meshes the base rectangle."""
        spec = GeometrySpec(kind='fins', fins_params=FinsParams(fin_count=0), resolution=0.25, mesher='grid')
        mesh = generate_fins(spec)
        assert mesh.volume == pytest.approx(2.0)

    def test_grid_mesher_area(self):
        """The grid mesher covers base plus fins exactly."""
        spec = GeometrySpec(kind='fins', resolution=0.1, mesher='grid')
        mesh = build_mesh(spec)
        assert mesh.volume == pytest.approx(fins_area(spec))
        assert np.all(signed_volumes(mesh.nodes, mesh.elements) > 0)

    def test_fin_tip_inside_domain(self):
        """Fin tips belong to the domain, the gap between fins does not."""
        spec = GeometrySpec(kind='fins')
        polygon = fins_polygon(spec)
        spacing = 2.0 / 5
        pts = np.array([[spacing, 1.4], [spacing * 1.5, 1.4]])
        assert points_in_polygon(pts, polygon).tolist() == [True, False]

    def test_overlapping_fins_rejected(self):
        """Fins wider than their spacing are invalid."""
        spec = GeometrySpec(kind='fins', fins_params=FinsParams(fin_count=10, fin_width=0.5))
        with pytest.raises(InvalidGeometry):
            fins_polygon(spec)


class TestMshReader:
    """MSH 4.1 ASCII ingestion."""

    def test_parse_triangles(self):
        """Line elements are skipped and triangles kept."""
        mesh = parse_msh(SQUARE_MSH)
        assert mesh.dim == 2
        assert mesh.n_nodes == 5
        assert mesh.n_elements == 4
        assert mesh.boundary_nodes.tolist() == [0, 1, 2, 3]
        assert mesh.volume == pytest.approx(1.0)

    def test_parse_tetrahedron(self):
        """Tetrahedra give a 3D mesh."""
        mesh = parse_msh(TET_MSH)
        assert mesh.dim == 3
        assert mesh.volume == pytest.approx(1.0 / 6.0)

    def test_read_from_file(self, tmp_path):
        """read_msh reads from disk."""
        path = tmp_path / "square.msh"
        path.write_text(SQUARE_MSH)
        assert read_msh(path).n_elements == 4

    def test_unsupported_element(self):
        """Quadrilaterals are rejected with their type."""
        text = SQUARE_MSH.replace("2 1 2 4\n", "2 1 3 1\n").replace(
            "5 1 2 5\n6 2 3 5\n7 3 4 5\n8 4 1 5\n", "5 1 2 3 4\n")
        with pytest.raises(UnsupportedElement) as info:
            parse_msh(text)
        assert info.value.element_type == 3

    def test_wrong_version(self):
        """Only version 4.1 is accepted."""
        with pytest.raises(ParseError) as info:
            parse_msh(SQUARE_MSH.replace("4.1 0 8", "2.2 0 8"))
        assert info.value.line == 2

    def test_binary_rejected(self):
        """Binary files are out of scope."""
        with pytest.raises(ParseError):
            parse_msh(SQUARE_MSH.replace("4.1 0 8", "4.1 1 8"))

    def test_truncated_file(self):
        """Missing end markers raise ParseError."""
        with pytest.raises(ParseError):
            parse_msh(SQUARE_MSH.split("$Elements")[0] + "$Elements\n2 8 1 8\n")


class TestLocate:
    """Barycentric point location and interpolation."""

    def test_barycentric_partition_of_unity(self, small_square, rng):
        """Coordinates are non-negative and sum to one."""
        pts = rng.random((200, 2))
        elements, bary = locate_points(small_square, pts)
        assert np.allclose(bary.sum(axis=1), 1.0)
        assert np.all(bary >= -1e-10)
        recon = np.einsum('pi,pid->pd', bary, small_square.nodes[small_square.elements[elements]])
        assert np.allclose(recon, pts)

    def test_vertex_and_boundary_points(self, small_square):
        """Vertices and boundary points are inside the closed domain."""
        element, bary = locate_point(small_square, [0.0, 0.0])
        assert np.isclose(bary.max(), 1.0)
        assert small_square.locator.contains([[1.0, 0.5], [0.5, 1.0]]).all()

    def test_outside_points_reported(self, small_square):
        """Points off the mesh raise NotInDomain with their indices."""
        with pytest.raises(NotInDomain) as info:
            locate_points(small_square, [[0.5, 0.5], [1.5, 0.5], [0.2, -0.1]])
        assert info.value.point_indices == [1, 2]

    def test_interpolation_reproduces_linear_fields(self, small_square, rng):
        """P1 interpolation is exact for affine functions."""
        values = 2.0 * small_square.nodes[:, 0] - 3.0 * small_square.nodes[:, 1] + 0.5
        pts = rng.random((50, 2))
        assert np.allclose(interpolate(small_square, values, pts), 2.0 * pts[:, 0] - 3.0 * pts[:, 1] + 0.5)

    def test_interpolation_matrix_rows_sum_to_one(self, small_square, rng):
        """Interpolation operator rows form a partition of unity."""
        matrix = interpolation_matrix(small_square, rng.random((30, 2)))
        assert matrix.shape == (30, small_square.n_nodes)
        assert np.allclose(np.asarray(matrix.sum(axis=1)).ravel(), 1.0)

    def test_non_convex_domain(self):
        """Points in the gap between fins are outside."""
        mesh = generate_fins(GeometrySpec(kind='fins', resolution=0.1, mesher='grid'))
        mask = mesh.locator.contains([[0.4, 1.3], [0.6, 1.3], [1.0, 0.5]])
        assert mask.tolist() == [True, False, True]

    def test_structured_grid_matches_mesh_nodes(self, small_square):
        """A grid at the mesh spacing reproduces the structured nodes."""
        grid = structured_query_grid(small_square, 1.0 / 8.0)
        assert np.array_equal(grid, small_square.nodes)
