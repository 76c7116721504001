"""
Training loop for the branch network.

Examples are samples (Poisson) or (sample, snapshot) pairs (heat). Mini-batches
are drawn uniformly without replacement from the training split; updates are
sequential Adam steps so runs with equal seeds are bit-identical.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.learning.branch import BranchModel, TrainingBatch, init_model, loss_and_grad
from src.learning.normalizer import Normalizer
from src.learning.optimizer import AdamOptimizer
from src.models.specs import TrainConfig
from src.processors.dataset_builder import Dataset, split_indices
from src.spectral.eigen import EigenBasis
from src.spectral.projection import ReconstructionRule
from src.utils.exceptions import HashMismatch, NonFiniteLoss, ShapeMismatch, ValidationError
from src.utils.logger import get_logger
from src.utils.performance import performance_monitor

logger = get_logger('learn')

EVAL_CHUNK = 1024
BATCH_STREAM = 1


@dataclass(frozen=True)
class TrainingExamples:
    """Index view of a dataset's training examples."""
    dataset: Dataset
    sample_idx: np.ndarray
    snapshot_idx: Optional[np.ndarray] = None

    @classmethod
    def from_samples(cls, dataset: Dataset, samples) -> "TrainingExamples":
        samples = np.asarray(samples, dtype=np.int64)
        if not dataset.is_heat:
            return cls(dataset, samples)
        n_snap = dataset.n_snapshots
        return cls(dataset, np.repeat(samples, n_snap), np.tile(np.arange(n_snap), samples.size))

    @property
    def size(self) -> int:
        return int(self.sample_idx.size)

    def batch(self, rows) -> TrainingBatch:
        ds = self.dataset
        s = self.sample_idx[rows]
        if not ds.is_heat:
            return TrainingBatch(inputs=ds.sensor_inputs[s], targets=ds.outputs[s])
        j = self.snapshot_idx[rows]
        return TrainingBatch(
            inputs=ds.sensor_inputs[s],
            targets=ds.outputs[s, j],
            times=ds.times[j],
            f_coeffs=None if ds.forcing_coeffs is None else ds.forcing_coeffs[s],
        )


@dataclass
class TrainingResult:
    model: BranchModel
    history: List[Dict[str, float]] = field(default_factory=list)
    train_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def initial_loss(self) -> float:
        return self.history[0]['train_mse'] if self.history else float('nan')

    @property
    def final_loss(self) -> float:
        return self.history[-1]['train_mse'] if self.history else float('nan')

    @property
    def iterations_run(self) -> int:
        return int(self.history[-1]['iteration']) if self.history else 0

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=['iteration', 'train_mse', 'test_mse'])


def examples_loss(model: BranchModel, examples: TrainingExamples, basis_values: np.ndarray) -> float:
    """Mean loss over all examples, evaluated in chunks and weighted by chunk size."""
    if examples.size == 0:
        return float('nan')
    total = 0.0
    for start in range(0, examples.size, EVAL_CHUNK):
        rows = np.arange(start, min(start + EVAL_CHUNK, examples.size))
        mse, _, _ = loss_and_grad(model, examples.batch(rows), basis_values)
        total += mse * rows.size
    return total / examples.size


def _check_bindings(model: BranchModel, dataset: Dataset, basis: EigenBasis) -> None:
    if model.mesh_id and dataset.mesh_id != model.mesh_id:
        raise HashMismatch("dataset was generated on a different mesh than the model",
                           expected=model.mesh_id, found=dataset.mesh_id)
    if basis.mesh_id and dataset.mesh_id != basis.mesh_id:
        raise HashMismatch("dataset mesh differs from the basis mesh", expected=basis.mesh_id,
                           found=dataset.mesh_id)
    if dataset.problem == "heat_forced":
        if dataset.forcing_coeffs is None:
            raise ValidationError("heat_forced training needs precomputed forcing coefficients",
                                  field='forcing_coeffs')
        if dataset.basis_id and dataset.basis_id != basis.basis_id:
            raise HashMismatch("forcing coefficients were computed in a different basis",
                               expected=basis.basis_id, found=dataset.basis_id)
    if basis.nodal_modes.shape[0] != dataset.n_nodes or basis.n_modes != model.n_modes:
        raise ShapeMismatch("basis does not match dataset/model", expected=(dataset.n_nodes, model.n_modes),
                            found=basis.nodal_modes.shape)


def prepare_model(dataset: Dataset, basis: EigenBasis, config: TrainConfig,
                  diffusivity: Optional[float] = None) -> BranchModel:
    """Initialize a model with normalizers fitted on the training split."""
    train_idx, _ = split_indices(dataset.n_samples, config.train_fraction, config.seed)
    input_mode, output_mode = config.resolve_normalization(dataset.problem)
    train_part = dataset.subset(train_idx)
    rule = ReconstructionRule.for_problem(dataset.problem, basis, diffusivity)
    return init_model(
        dataset.n_nodes, basis.n_modes, rule, config.seed,
        input_normalizer=Normalizer.fit(train_part.sensor_inputs, input_mode),
        output_normalizer=Normalizer.fit(train_part.outputs, output_mode),
        mesh_id=dataset.mesh_id,
        basis_id=basis.basis_id,
    )


@performance_monitor(operation='train', component='learn',
                     work=lambda result: {'iterations': result.iterations_run})
def train(model: BranchModel, dataset: Dataset, config: TrainConfig, basis: EigenBasis,
          progress: bool = False) -> TrainingResult:
    """Adam on the seeded training split; history holds train and held-out MSE every ``log_every`` steps."""
    if dataset.n_samples == 0:
        raise ValidationError("cannot train on an empty dataset", field='dataset')
    _check_bindings(model, dataset, basis)

    train_idx, test_idx = split_indices(dataset.n_samples, config.train_fraction, config.seed)
    train_ex = TrainingExamples.from_samples(dataset, train_idx)
    test_ex = TrainingExamples.from_samples(dataset, test_idx)
    basis_values = basis.nodal_modes

    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(BATCH_STREAM,)))
    optimizer = AdamOptimizer(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    params = {'weights': model.weights.copy(), 'bias': model.bias.copy()}
    batch_size = min(config.batch_size, train_ex.size)
    history: List[Dict[str, float]] = []

    def record(iteration: int) -> None:
        entry = {
            'iteration': iteration,
            'train_mse': examples_loss(model, train_ex, basis_values),
            'test_mse': examples_loss(model, test_ex, basis_values),
        }
        history.append(entry)
        logger.debug(f"iter {iteration}: train {entry['train_mse']:.4e} test {entry['test_mse']:.4e}",
                     operation='train')

    record(0)
    for iteration in tqdm(range(1, config.iterations + 1), desc="training", disable=not progress):
        rows = rng.choice(train_ex.size, size=batch_size, replace=False)
        loss, grad_w, grad_b = loss_and_grad(model, train_ex.batch(rows), basis_values)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss became {loss} at iteration {iteration}", iteration=iteration,
                                operation='train')
        params = optimizer.step(params, {'weights': grad_w, 'bias': grad_b})
        model = model.with_params(params['weights'], params['bias'])
        if not model.is_finite():
            raise NonFiniteLoss("parameters became non-finite", iteration=iteration, operation='train')
        if iteration % config.log_every == 0 or iteration == config.iterations:
            record(iteration)
            if not np.isfinite(history[-1]['train_mse']):
                raise NonFiniteLoss("training loss is not finite", iteration=iteration, operation='train')

    logger.info(
        f"Trained {model.n_parameters} parameters for {config.iterations} iterations: "
        f"train mse {history[0]['train_mse']:.3e} -> {history[-1]['train_mse']:.3e}",
        operation='train',
        extra_data={'test_mse': history[-1]['test_mse']},
    )
    return TrainingResult(model, history, train_idx, test_idx)


def train_from_scratch(dataset: Dataset, basis: EigenBasis, config: TrainConfig,
                       diffusivity: Optional[float] = None, progress: bool = False) -> TrainingResult:
    return train(prepare_model(dataset, basis, config, diffusivity), dataset, config, basis, progress)
