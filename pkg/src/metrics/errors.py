"""
Relative L2 and H1 errors by exact P1 quadrature: ||e||_L2^2 = e^T M e and
||e||_H1^2 = e^T (M + K) e.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.fem.assembly import fem_operators
from src.learning.branch import BranchModel, forward
from src.processors.dataset_builder import Dataset
from src.spectral.eigen import EigenBasis, check_mesh
from src.utils.exceptions import HashMismatch, ShapeMismatch, ZeroReference
from src.utils.logger import get_logger

logger = get_logger('metrics')

ZERO_NORM = 1e-14


def _quadratic_forms(A, X: np.ndarray) -> np.ndarray:
    """Row-wise x^T A x for a stack X (B, N)."""
    return np.einsum('bn,bn->b', X, np.asarray(A @ X.T).T)


def relative_errors_batch(mesh, u_true, u_pred) -> Tuple[np.ndarray, np.ndarray]:
    """Per-row relative (L2, H1) errors for stacks of nodal fields."""
    u_true = np.atleast_2d(np.asarray(u_true, dtype=np.float64))
    u_pred = np.atleast_2d(np.asarray(u_pred, dtype=np.float64))
    if u_true.shape != u_pred.shape or u_true.shape[-1] != mesh.n_nodes:
        raise ShapeMismatch("true and predicted fields must match the mesh", expected=(u_true.shape, mesh.n_nodes),
                            found=u_pred.shape, operation='relative_errors')
    ops = fem_operators(mesh)
    energy = ops.mass + ops.stiffness
    err = u_pred - u_true
    ref_l2 = _quadratic_forms(ops.mass, u_true)
    ref_h1 = _quadratic_forms(energy, u_true)
    if np.any(ref_l2 < ZERO_NORM) or np.any(ref_h1 < ZERO_NORM):
        raise ZeroReference("reference field has (near) zero norm", operation='relative_errors')
    err_l2 = np.maximum(_quadratic_forms(ops.mass, err), 0.0)
    err_h1 = np.maximum(_quadratic_forms(energy, err), 0.0)
    return np.sqrt(err_l2 / ref_l2), np.sqrt(err_h1 / ref_h1)


def relative_errors(mesh, u_true, u_pred) -> Tuple[float, float]:
    """(rel_l2, rel_h1) of one nodal prediction."""
    l2, h1 = relative_errors_batch(mesh, np.asarray(u_true)[None, :], np.asarray(u_pred)[None, :])
    return float(l2[0]), float(h1[0])


@dataclass
class ErrorReport:
    rel_l2: float
    rel_h1: float
    per_sample_l2: np.ndarray
    per_sample_h1: np.ndarray
    aggregation: str = "mean over samples"
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, l2: np.ndarray, h1: np.ndarray, heat: bool, **metadata) -> "ErrorReport":
        """l2/h1 are (samples,) or (samples, snapshots); snapshots are averaged first."""
        per_l2 = l2.mean(axis=1) if heat else l2
        per_h1 = h1.mean(axis=1) if heat else h1
        aggregation = "uniform mean over snapshots, then over samples" if heat else "mean over samples"
        return cls(float(per_l2.mean()), float(per_h1.mean()), per_l2, per_h1, aggregation, dict(metadata))

    @property
    def n_samples(self) -> int:
        return int(self.per_sample_l2.size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'rel_l2': self.rel_l2,
            'rel_h1': self.rel_h1,
            'n_samples': self.n_samples,
            'aggregation': self.aggregation,
            **self.metadata,
        }


def predict_dataset(model: BranchModel, dataset: Dataset, eval_matrix: np.ndarray, indices,
                    output_normalizer=None) -> np.ndarray:
    """Predictions for the given samples: (B, n_points) or (B, S, n_points) for heat."""
    idx = np.asarray(indices, dtype=np.int64)
    inputs = dataset.sensor_inputs[idx]
    if not dataset.is_heat:
        return forward(model, inputs, query_eval=eval_matrix, output_normalizer=output_normalizer)
    f_coeffs = None if dataset.forcing_coeffs is None else dataset.forcing_coeffs[idx]
    preds = np.empty((idx.size, dataset.n_snapshots, eval_matrix.shape[0]))
    for j, t in enumerate(dataset.times):
        preds[:, j] = forward(model, inputs, t=np.full(idx.size, t), query_eval=eval_matrix, f_coeffs=f_coeffs,
                              output_normalizer=output_normalizer)
    return preds


def errors_on_mesh(mesh, truth: np.ndarray, preds: np.ndarray, heat: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Relative errors shaped like the leading axes of ``truth``."""
    lead = truth.shape[:-1]
    l2, h1 = relative_errors_batch(mesh, truth.reshape(-1, truth.shape[-1]), preds.reshape(-1, preds.shape[-1]))
    return l2.reshape(lead), h1.reshape(lead)


def evaluate_model(model: BranchModel, dataset: Dataset, basis: EigenBasis, mesh,
                   indices: Optional[np.ndarray] = None) -> ErrorReport:
    """Errors of model predictions against ground truth on the training mesh."""
    check_mesh(basis, mesh)
    if dataset.mesh_id != mesh.mesh_id:
        raise HashMismatch("dataset belongs to another mesh", expected=mesh.mesh_id, found=dataset.mesh_id)
    idx = np.arange(dataset.n_samples) if indices is None else np.asarray(indices, dtype=np.int64)
    preds = predict_dataset(model, dataset, basis.nodal_modes, idx)
    l2, h1 = errors_on_mesh(mesh, dataset.outputs[idx], preds, dataset.is_heat)
    report = ErrorReport.from_arrays(l2, h1, dataset.is_heat, problem=dataset.problem, n_modes=model.n_modes,
                                     n_points=mesh.n_nodes)
    logger.info(f"rel_l2={report.rel_l2:.4e} rel_h1={report.rel_h1:.4e} over {report.n_samples} samples",
                operation='evaluate_model')
    return report
