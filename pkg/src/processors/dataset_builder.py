"""
Dataset generation: GRF inputs, ground-truth outputs and the seeded
train/held-out split used by training and evaluation.
"""
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np
from tqdm import tqdm

from src.fem.assembly import fem_operators
from src.models.specs import GrfSpec, ProblemSpec
from src.processors.grf import STREAM_FORCING, STREAM_INITIAL, make_admissible_ic, sample_field
from src.processors.simulation import HeatStepper, PoissonSolver
from src.spectral.projection import project
from src.utils.exceptions import ShapeMismatch, ValidationError
from src.utils.logger import get_logger
from src.utils.performance import track_performance

logger = get_logger('dataset')


@dataclass(frozen=True, eq=False)
class Dataset:
    """Per-sample input fields and ground truth on the nodes of one mesh."""
    problem: str
    outputs: np.ndarray
    mesh_id: str
    inputs_u0: Optional[np.ndarray] = None
    inputs_f: Optional[np.ndarray] = None
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    forcing_coeffs: Optional[np.ndarray] = None
    basis_id: str = ""
    grf_meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        n = self.outputs.shape[0]
        expected_ndim = 3 if self.is_heat else 2
        if self.outputs.ndim != expected_ndim:
            raise ShapeMismatch(f"{self.problem} outputs must be {expected_ndim}-D", expected=expected_ndim,
                                found=self.outputs.ndim)
        for name in ('inputs_u0', 'inputs_f', 'forcing_coeffs'):
            arr = getattr(self, name)
            if arr is not None and arr.shape[0] != n:
                raise ShapeMismatch(f"{name} sample count differs from outputs", expected=n, found=arr.shape[0])
        if self.is_heat and self.inputs_u0 is None:
            raise ValidationError("heat datasets need initial conditions", field='inputs_u0')
        if self.problem in ("poisson", "heat_forced") and self.inputs_f is None:
            raise ValidationError(f"{self.problem} datasets need forcing terms", field='inputs_f')

    @property
    def is_heat(self) -> bool:
        return self.problem != "poisson"

    @property
    def n_samples(self) -> int:
        return int(self.outputs.shape[0])

    @property
    def n_nodes(self) -> int:
        return int(self.outputs.shape[-1])

    @property
    def n_snapshots(self) -> int:
        return int(self.outputs.shape[1]) if self.is_heat else 0

    @property
    def sensor_inputs(self) -> np.ndarray:
        """Branch inputs: the forcing term for Poisson, the initial condition for heat."""
        return self.inputs_u0 if self.is_heat else self.inputs_f

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)

        def take(arr):
            return None if arr is None else arr[idx]

        return replace(self, outputs=self.outputs[idx], inputs_u0=take(self.inputs_u0),
                       inputs_f=take(self.inputs_f), forcing_coeffs=take(self.forcing_coeffs))

    def with_forcing_coeffs(self, basis, mass) -> "Dataset":
        """Attach f_k = phi_k^T M f computed in ``basis``."""
        if self.inputs_f is None:
            raise ValidationError("dataset has no forcing terms", field='inputs_f')
        if self.inputs_f.shape[0] == 0:
            coeffs = np.zeros((0, basis.n_modes))
        else:
            coeffs = project(basis, mass, self.inputs_f).coeffs
        return replace(self, forcing_coeffs=coeffs, basis_id=basis.basis_id)


def build_dataset(mesh, cutoff: np.ndarray, spec: ProblemSpec, grf_spec: GrfSpec, n_samples: int,
                  basis=None, progress: bool = False) -> Dataset:
    """
    Draw ``n_samples`` GRF inputs and solve for ground truth.

    Heat initial conditions are GRF x cutoff (stream 0); forcing terms are raw
    GRF samples (stream 1). For heat_forced, f_k is attached when ``basis`` is given.
    """
    if n_samples < 0:
        raise ValidationError("n_samples must be non-negative", field='n_samples', value=n_samples)
    n = mesh.n_nodes
    if cutoff is not None and np.shape(cutoff) != (n,):
        raise ShapeMismatch("cutoff field length differs from node count", expected=n, found=np.shape(cutoff))

    needs_u0 = spec.is_heat
    needs_f = spec.problem in ("poisson", "heat_forced")
    if needs_u0 and cutoff is None:
        raise ValidationError("heat datasets need the cutoff field", field='cutoff')

    u0 = np.zeros((n_samples, n)) if needs_u0 else None
    f = np.zeros((n_samples, n)) if needs_f else None
    if spec.is_heat:
        outputs = np.zeros((n_samples, len(spec.snapshot_times), n))
        stepper = HeatStepper(mesh, spec)
    else:
        outputs = np.zeros((n_samples, n))
        poisson = PoissonSolver(mesh)

    with track_performance('build_dataset', 'dataset', samples=n_samples, dofs=n):
        for i in tqdm(range(n_samples), desc=f"{spec.problem} samples", disable=not progress):
            if needs_u0:
                u0[i] = make_admissible_ic(sample_field(grf_spec, i, mesh.nodes, STREAM_INITIAL), cutoff)
            if needs_f:
                f[i] = sample_field(grf_spec, i, mesh.nodes, STREAM_FORCING)
            if spec.is_heat:
                outputs[i] = stepper.trajectory(u0[i], f[i] if needs_f else None)
            else:
                outputs[i] = poisson.solve(f[i])

    dataset = Dataset(
        problem=spec.problem,
        outputs=outputs,
        mesh_id=mesh.mesh_id,
        inputs_u0=u0,
        inputs_f=f,
        times=np.asarray(spec.snapshot_times if spec.is_heat else [], dtype=np.float64),
        grf_meta={'grf': grf_spec.model_dump(), 'problem': spec.model_dump()},
    )
    if spec.problem == "heat_forced" and basis is not None:
        dataset = dataset.with_forcing_coeffs(basis, fem_operators(mesh).mass)

    logger.info(f"Built {spec.problem} dataset with {n_samples} samples", operation='build_dataset',
                extra_data={'nodes': n, 'seed': grf_spec.seed})
    return dataset


def split_indices(n_samples: int, train_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle into (train, held-out) index arrays; both non-empty when n >= 2."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must lie in (0, 1)", field='train_fraction', value=train_fraction)
    order = np.random.default_rng(seed).permutation(n_samples)
    n_train = int(round(train_fraction * n_samples))
    if n_samples >= 2:
        n_train = min(max(n_train, 1), n_samples - 1)
    return np.sort(order[:n_train]), np.sort(order[n_train:])
