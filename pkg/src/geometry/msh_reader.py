"""
Reader for the ASCII MSH 4.1 subset: $MeshFormat, $Nodes and $Elements.
Other sections are skipped. Only 3-node triangles and 4-node tetrahedra are
kept; points and lines are ignored.
"""
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from src.geometry.mesh import Mesh
from src.utils.exceptions import ParseError, UnsupportedElement
from src.utils.logger import get_logger

logger = get_logger('msh_reader')

TRIANGLE, TETRAHEDRON = 2, 4
IGNORED_TYPES = {1, 15}  # 2-node line, 1-node point
NODES_PER_TYPE = {1: 2, 2: 3, 4: 4, 15: 1}
PLANAR_TOL = 1e-12


class _LineCursor:
    """Sequential access to stripped lines with 1-based line numbers for errors."""

    def __init__(self, lines: List[str], path: str):
        self.lines = lines
        self.path = path
        self.pos = 0

    @property
    def line_no(self) -> int:
        return self.pos

    def at_end(self) -> bool:
        return self.pos >= len(self.lines)

    def next(self) -> str:
        if self.at_end():
            raise ParseError("unexpected end of file", line=len(self.lines), path=self.path)
        line = self.lines[self.pos].strip()
        self.pos += 1
        return line

    def numbers(self, kind=int, minimum: int = 1) -> list:
        line = self.next()
        try:
            values = [kind(tok) for tok in line.split()]
        except ValueError:
            raise ParseError(f"malformed numeric line: {line!r}", line=self.line_no, path=self.path)
        if len(values) < minimum:
            raise ParseError(f"expected at least {minimum} values", line=self.line_no, path=self.path)
        return values

    def expect(self, token: str) -> None:
        line = self.next()
        if line != token:
            raise ParseError(f"expected {token}, found {line!r}", line=self.line_no, path=self.path)


def _read_format(cur: _LineCursor) -> None:
    parts = cur.next().split()
    if len(parts) < 3:
        raise ParseError("malformed $MeshFormat line", line=cur.line_no, path=cur.path)
    if parts[0] != "4.1":
        raise ParseError(f"unsupported MSH version {parts[0]} (need 4.1)", line=cur.line_no, path=cur.path)
    if parts[1] != "0":
        raise ParseError("binary MSH files are not supported", line=cur.line_no, path=cur.path)
    cur.expect("$EndMeshFormat")


def _read_nodes(cur: _LineCursor) -> Dict[int, np.ndarray]:
    n_blocks, n_nodes = cur.numbers(int, 4)[:2]
    coords: Dict[int, np.ndarray] = {}
    for _ in range(n_blocks):
        _, _, parametric, n_in_block = cur.numbers(int, 4)[:4]
        tags = [cur.numbers(int, 1)[0] for _ in range(n_in_block)]
        for tag in tags:
            xyz = cur.numbers(float, 3)
            coords[tag] = np.asarray(xyz[:3], dtype=np.float64)
        if parametric not in (0, 1):
            raise ParseError("invalid parametric flag", line=cur.line_no, path=cur.path)
    if len(coords) != n_nodes:
        raise ParseError(f"declared {n_nodes} nodes, found {len(coords)}", line=cur.line_no, path=cur.path)
    cur.expect("$EndNodes")
    return coords


def _read_elements(cur: _LineCursor) -> Tuple[List[List[int]], List[List[int]]]:
    n_blocks = cur.numbers(int, 4)[0]
    triangles: List[List[int]] = []
    tets: List[List[int]] = []
    for _ in range(n_blocks):
        _, _, element_type, n_in_block = cur.numbers(int, 4)[:4]
        block_line = cur.line_no
        if element_type not in NODES_PER_TYPE:
            raise UnsupportedElement(f"element type {element_type} is not supported",
                                     element_type=element_type, line=block_line)
        width = NODES_PER_TYPE[element_type]
        for _ in range(n_in_block):
            values = cur.numbers(int, width + 1)
            if len(values) != width + 1:
                raise ParseError(f"element needs {width} nodes", line=cur.line_no, path=cur.path)
            if element_type == TRIANGLE:
                triangles.append(values[1:])
            elif element_type == TETRAHEDRON:
                tets.append(values[1:])
    cur.expect("$EndElements")
    return triangles, tets


def _skip_section(cur: _LineCursor, header: str) -> None:
    end = "$End" + header[1:]
    while cur.next() != end:
        pass


def parse_msh(text: str, path: str = "<string>") -> Mesh:
    """Parse MSH 4.1 ASCII content into a Mesh with 0-based, compacted node indices."""
    cur = _LineCursor(text.splitlines(), path)
    seen_format = False
    coords = None
    triangles: List[List[int]] = []
    tets: List[List[int]] = []

    while not cur.at_end():
        header = cur.next()
        if not header:
            continue
        if header == "$MeshFormat":
            _read_format(cur)
            seen_format = True
        elif header == "$Nodes":
            coords = _read_nodes(cur)
        elif header == "$Elements":
            triangles, tets = _read_elements(cur)
        elif header.startswith("$"):
            logger.debug(f"Skipping section {header}", operation='read_msh')
            _skip_section(cur, header)
        else:
            raise ParseError(f"unexpected content {header!r}", line=cur.line_no, path=path)

    if not seen_format:
        raise ParseError("missing $MeshFormat section", line=1, path=path)
    if coords is None:
        raise ParseError("missing $Nodes section", line=cur.line_no, path=path)

    if tets:
        dim, connectivity = 3, np.asarray(tets, dtype=np.int64)
    elif triangles:
        dim, connectivity = 2, np.asarray(triangles, dtype=np.int64)
    else:
        raise ParseError("no triangle or tetrahedron elements", line=cur.line_no, path=path)

    used_tags = np.unique(connectivity)
    missing = [int(t) for t in used_tags if int(t) not in coords]
    if missing:
        raise ParseError(f"elements reference undefined nodes {missing[:5]}", line=cur.line_no, path=path)
    points = np.stack([coords[int(t)] for t in used_tags])
    if dim == 2:
        if np.ptp(points[:, 2]) > PLANAR_TOL:
            raise ParseError("triangle mesh is not planar in z", line=cur.line_no, path=path)
        points = points[:, :2]

    elements = np.searchsorted(used_tags, connectivity)
    mesh = Mesh.from_arrays(points, elements)
    logger.info(
        f"Read {mesh.n_nodes} nodes, {mesh.n_elements} elements (dim={dim})",
        operation='read_msh',
        extra_data={'path': path},
    )
    return mesh


def read_msh(path: Union[str, Path]) -> Mesh:
    """Read an ASCII MSH 4.1 file."""
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise ParseError(f"cannot read mesh file: {e}", path=str(path))
    return parse_msh(text, str(path))
