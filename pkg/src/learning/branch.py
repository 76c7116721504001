"""
Affine branch network: sensor values -> spectral coordinates, composed with
the problem's reconstruction rule. Loss and gradients are analytic.
"""
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from src.learning.normalizer import Normalizer
from src.spectral.projection import ReconstructionRule
from src.utils.exceptions import ShapeMismatch, ValidationError
from src.utils.validators import ArrayValidator


@dataclass(frozen=True, eq=False)
class BranchModel:
    weights: np.ndarray
    bias: np.ndarray
    input_normalizer: Normalizer
    output_normalizer: Normalizer
    rule: ReconstructionRule
    mesh_id: str = ""
    basis_id: str = ""

    def __post_init__(self):
        if self.weights.shape[0] != self.bias.shape[0] or self.weights.shape[0] != self.rule.n_modes:
            raise ShapeMismatch("weights, bias and rule disagree on the mode count",
                                expected=self.rule.n_modes, found=(self.weights.shape, self.bias.shape))
        if self.input_normalizer.width != self.weights.shape[1]:
            raise ShapeMismatch("input normalizer width differs from sensor count",
                                expected=self.weights.shape[1], found=self.input_normalizer.width)

    @property
    def n_sensors(self) -> int:
        return int(self.weights.shape[1])

    @property
    def n_modes(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_parameters(self) -> int:
        return int(self.weights.size + self.bias.size)

    def with_params(self, weights: np.ndarray, bias: np.ndarray) -> "BranchModel":
        return replace(self, weights=weights, bias=bias)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias)))


def init_model(n_sensors: int, n_modes: int, rule: ReconstructionRule, seed: int,
               input_normalizer: Optional[Normalizer] = None, output_normalizer: Optional[Normalizer] = None,
               mesh_id: str = "", basis_id: str = "") -> BranchModel:
    """Glorot-normal weights with variance 2 / (P + M) and zero bias."""
    if n_sensors < 1 or n_modes < 1:
        raise ValidationError("sensor and mode counts must be positive", field='n_sensors/n_modes',
                              value=(n_sensors, n_modes))
    std = np.sqrt(2.0 / (n_sensors + n_modes))
    weights = np.random.default_rng(seed).normal(0.0, std, size=(n_modes, n_sensors))
    return BranchModel(
        weights=weights,
        bias=np.zeros(n_modes),
        input_normalizer=input_normalizer or Normalizer.identity(n_sensors),
        output_normalizer=output_normalizer or Normalizer.identity(n_sensors),
        rule=rule,
        mesh_id=mesh_id,
        basis_id=basis_id,
    )


def branch_coordinates(model: BranchModel, sensor_values) -> np.ndarray:
    """W . normalize(x) + b for a vector or a stack of sensor vectors."""
    x, was_vector = ArrayValidator.as_batch('sensor_values', sensor_values, model.n_sensors, operation='forward')
    coords = model.input_normalizer.normalize(x) @ model.weights.T + model.bias
    return coords[0] if was_vector else coords


def forward(model: BranchModel, sensor_values, t=None, query_eval=None, f_coeffs=None,
            output_normalizer: Optional[Normalizer] = None) -> np.ndarray:
    """
    Predicted field at the query points whose basis values are ``query_eval``.

    ``output_normalizer`` must describe the query points; it defaults to the
    model's (sensor-node) normalizer.
    """
    x, was_vector = ArrayValidator.as_batch('sensor_values', sensor_values, model.n_sensors, operation='forward')
    if query_eval is None:
        raise ValidationError("forward needs basis values at the query points", field='query_eval')
    query_eval = np.asarray(query_eval, dtype=np.float64)
    coords = model.input_normalizer.normalize(x) @ model.weights.T + model.bias
    amplitudes = model.rule.amplitudes(coords, t, f_coeffs)
    normalized = amplitudes @ query_eval.T
    out_norm = output_normalizer or model.output_normalizer
    if out_norm.mode != "identity" and out_norm.width != query_eval.shape[0]:
        raise ShapeMismatch("output normalizer does not match the query points", expected=query_eval.shape[0],
                            found=out_norm.width, operation='forward')
    field = out_norm.denormalize(normalized)
    return field[0] if was_vector else field


@dataclass(frozen=True)
class TrainingBatch:
    """Rows of (sensor values, physical target[, time][, forcing coefficients])."""
    inputs: np.ndarray
    targets: np.ndarray
    times: Optional[np.ndarray] = None
    f_coeffs: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return int(self.inputs.shape[0])


def loss_and_grad(model: BranchModel, batch: TrainingBatch, basis_values: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    MSE in normalized target space and its exact gradients.

    ``basis_values`` are the nodal modes (N_nodes x M). With coords C = X W^T + b,
    amplitudes E = C * S + offset and prediction E Phi^T, the residual R gives
    dE = (2 / (B N)) R Phi, dC = dE * S, dW = dC^T X, db = sum(dC).
    """
    if batch.inputs.ndim != 2 or batch.inputs.shape[1] != model.n_sensors:
        raise ShapeMismatch("batch inputs do not match the sensor count", expected=model.n_sensors,
                            found=batch.inputs.shape, operation='loss_and_grad')
    if basis_values.shape[1] != model.n_modes:
        raise ShapeMismatch("basis size differs from the model", expected=model.n_modes,
                            found=basis_values.shape[1], operation='loss_and_grad')
    if batch.targets.shape != (batch.size, basis_values.shape[0]):
        raise ShapeMismatch("targets must be (batch, N_nodes)", expected=(batch.size, basis_values.shape[0]),
                            found=batch.targets.shape, operation='loss_and_grad')

    x = model.input_normalizer.normalize(batch.inputs)
    coords = x @ model.weights.T + model.bias
    scale, weight = model.rule.factors(batch.times, batch.size)
    amplitudes = coords * scale
    if weight is not None:
        if batch.f_coeffs is None:
            raise ValidationError("heat_forced batches need forcing coefficients", field='f_coeffs')
        amplitudes = amplitudes + batch.f_coeffs * weight

    residual = amplitudes @ basis_values.T - model.output_normalizer.normalize(batch.targets)
    n_terms = residual.size
    mse = float(np.mean(residual * residual)) if n_terms else 0.0

    d_amp = (2.0 / max(n_terms, 1)) * (residual @ basis_values)
    d_coords = d_amp * scale
    return mse, d_coords.T @ x, d_coords.sum(axis=0)
