"""
Plot-ready and tabular exports: legacy ASCII VTK fields via meshio and CSV
reports via pandas.
"""
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union

import meshio
import numpy as np
import pandas as pd

from src.utils.exceptions import ShapeMismatch, StorageError, ValidationError
from src.utils.logger import get_logger

logger = get_logger('storage')

PathLike = Union[str, Path]

REPORT_COLUMNS = ['problem', 'geometry', 'M', 'n_points', 'rel_l2', 'rel_h1', 'seed']
CELL_TYPES = {2: 'triangle', 3: 'tetra'}


def export_vtk(path: PathLike, mesh, point_data: Dict[str, np.ndarray]) -> Path:
    """Write nodal fields as a legacy ASCII VTK unstructured grid (2D points padded with z = 0)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    points = mesh.nodes if mesh.dim == 3 else np.column_stack([mesh.nodes, np.zeros(mesh.n_nodes)])
    data = {}
    for name, values in point_data.items():
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != mesh.n_nodes:
            raise ShapeMismatch(f"field {name} does not live on the mesh nodes", expected=mesh.n_nodes,
                                found=values.shape[0], operation='export_vtk')
        data[name] = values
    vtk_mesh = meshio.Mesh(points, [(CELL_TYPES[mesh.dim], mesh.elements)], point_data=data)
    try:
        meshio.write(str(path), vtk_mesh, file_format="vtk", binary=False)
    except OSError as e:
        raise StorageError(f"cannot write VTK file: {e}", file_path=str(path))
    logger.info(f"VTK written to {path} ({len(data)} field(s))", operation='export_vtk')
    return path


def fields_for_export(values: np.ndarray, prefix: str = 'u') -> Dict[str, np.ndarray]:
    """Name a single field, a stack of samples or a stack of snapshots for VTK export."""
    values = np.asarray(values)
    if values.ndim == 1:
        return {prefix: values}
    return {f"{prefix}_{i:03d}": row for i, row in enumerate(values.reshape(-1, values.shape[-1]))}


def write_report_csv(path: PathLike, rows: Iterable[dict]) -> Path:
    """Error report rows; columns missing from a row are left empty."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(rows))
    extra = [c for c in frame.columns if c not in REPORT_COLUMNS]
    frame = frame.reindex(columns=REPORT_COLUMNS + extra)
    frame.to_csv(path, index=False)
    logger.debug(f"Report with {len(frame)} row(s) written to {path}", operation='write_report')
    return path


def write_frame_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def read_points_csv(path: PathLike, dim: int) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Query points from a CSV with columns x[, y[, z]][, t]."""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise StorageError(f"cannot read query points: {e}", file_path=str(path))
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    axes = ['x', 'y', 'z'][:dim]
    missing = [a for a in axes if a not in frame.columns]
    if missing:
        raise ValidationError(f"query point CSV lacks column(s) {missing}", field='columns',
                              value=list(frame.columns))
    points = frame[axes].to_numpy(dtype=np.float64)
    times = frame['t'].to_numpy(dtype=np.float64) if 't' in frame.columns else None
    if not np.all(np.isfinite(points)) or (times is not None and not np.all(np.isfinite(times))):
        raise ValidationError("query points must be finite", field='points')
    return points, times


def write_predictions_csv(path: PathLike, points: np.ndarray, values: np.ndarray,
                          times: Optional[np.ndarray] = None) -> Path:
    """One row per query point: coordinates, optional t and the predicted value."""
    columns = {axis: points[:, i] for i, axis in enumerate(['x', 'y', 'z'][:points.shape[1]])}
    if times is not None:
        columns['t'] = times
    columns['u'] = np.asarray(values, dtype=np.float64)
    return write_frame_csv(path, pd.DataFrame(columns))
