"""
Evaluation protocols: resolution independence on query grids that differ from
the training mesh, and accuracy against the number of spectral modes.
"""
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.spatial import Delaunay

from src.fem.assembly import fem_operators
from src.geometry.locate import interpolation_matrix
from src.geometry.mesh import Mesh, signed_volumes
from src.learning.branch import BranchModel
from src.learning.trainer import train_from_scratch
from src.metrics.errors import ErrorReport, errors_on_mesh, evaluate_model, predict_dataset
from src.models.specs import TrainConfig
from src.processors.dataset_builder import Dataset, split_indices
from src.spectral.eigen import EigenBasis, check_mesh
from src.utils.exceptions import ValidationError
from src.utils.logger import get_logger
from src.utils.performance import track_performance

logger = get_logger('study')

SLIVER_FRACTION = 1e-10


def quadrature_mesh(points: np.ndarray, domain_mesh: Mesh) -> Mesh:
    """Delaunay triangulation of query points, keeping simplices whose centroid lies in the domain."""
    tri = Delaunay(points)
    simplices = tri.simplices.astype(np.int64)
    volumes = np.abs(signed_volumes(points, simplices))
    keep = volumes > SLIVER_FRACTION * volumes.max()
    simplices = simplices[keep]
    inside = domain_mesh.locator.contains(points[simplices].mean(axis=1))
    return Mesh.from_arrays(points, simplices[inside])


def _same_points(points: np.ndarray, mesh: Mesh) -> bool:
    return points.shape == mesh.nodes.shape and np.array_equal(points, mesh.nodes)


def resolution_study(model: BranchModel, basis: EigenBasis, mesh: Mesh, dataset: Dataset,
                     query_grids: Sequence[np.ndarray], indices: Optional[np.ndarray] = None) -> pd.DataFrame:
    """Errors on each query grid without retraining; references are P1 interpolants of the ground truth."""
    check_mesh(basis, mesh)
    idx = np.arange(dataset.n_samples) if indices is None else np.asarray(indices, dtype=np.int64)
    rows: List[dict] = []
    with track_performance('resolution_study', 'study', grids=len(query_grids)) as timing:
        for points in query_grids:
            points = np.asarray(points, dtype=np.float64)
            if _same_points(points, mesh):
                quad_mesh, eval_matrix, out_norm = mesh, basis.nodal_modes, None
                truth = dataset.outputs[idx]
            else:
                interp = interpolation_matrix(mesh, points)
                quad_mesh = quadrature_mesh(points, mesh)
                eval_matrix = np.asarray(interp @ basis.nodal_modes)
                out_norm = model.output_normalizer.at_points(interp)
                flat = dataset.outputs[idx].reshape(-1, mesh.n_nodes)
                truth = np.asarray(interp @ flat.T).T.reshape(dataset.outputs[idx].shape[:-1] + (points.shape[0],))
            preds = predict_dataset(model, dataset, eval_matrix, idx, output_normalizer=out_norm)
            l2, h1 = errors_on_mesh(quad_mesh, truth, preds, dataset.is_heat)
            report = ErrorReport.from_arrays(l2, h1, dataset.is_heat)
            timing.add(query_points=points.shape[0])
            rows.append({'n_points': int(points.shape[0]), 'rel_l2': report.rel_l2, 'rel_h1': report.rel_h1})
            logger.info(f"{points.shape[0]} points: rel_l2={report.rel_l2:.4e}", operation='resolution_study')
    return pd.DataFrame(rows, columns=['n_points', 'rel_l2', 'rel_h1'])


def mode_count_study(mesh: Mesh, dataset: Dataset, m_values: Sequence[int], config: TrainConfig,
                     basis: EigenBasis, diffusivity: Optional[float] = None) -> pd.DataFrame:
    """One independently trained model per mode count, scored on the held-out split."""
    if not m_values:
        raise ValidationError("m_values must not be empty", field='m_values')
    check_mesh(basis, mesh)
    _, test_idx = split_indices(dataset.n_samples, config.train_fraction, config.seed)
    mass = fem_operators(mesh).mass
    rows: List[dict] = []
    with track_performance('mode_count_study', 'study', models=len(set(m_values))):
        for m in sorted(set(int(v) for v in m_values)):
            sub_basis = basis.truncate(m)
            data = dataset.with_forcing_coeffs(sub_basis, mass) if dataset.problem == "heat_forced" else dataset
            result = train_from_scratch(data, sub_basis, config, diffusivity)
            report = evaluate_model(result.model, data, sub_basis, mesh, test_idx)
            rows.append({'M': m, 'rel_l2': report.rel_l2, 'rel_h1': report.rel_h1,
                         'n_parameters': result.model.n_parameters})
    return pd.DataFrame(rows, columns=['M', 'rel_l2', 'rel_h1', 'n_parameters'])
