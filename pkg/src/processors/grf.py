"""
Gaussian random fields by the randomization method.

Covariance: C(r) = sigma^2 exp(-pi r^2 / (4 l^2)). Rewritten as
sigma^2 exp(-r^2 / (2 s^2)) with s^2 = 2 l^2 / pi, its normalized spectral
density is the Gaussian N(0, I / s^2), so each wave-vector component is drawn
with standard deviation sqrt(pi / 2) / l. A realization is

    u(x) = sqrt(sigma^2 / M) * sum_m [Z1_m cos(k_m . x) + Z2_m sin(k_m . x)]

with Z1, Z2 standard normal. Randomness is keyed by (seed, sample_index, stream)
so samples are independent of generation order.
"""
from dataclasses import dataclass

import numpy as np

from config.settings import settings
from src.fem.assembly import fem_operators
from src.fem.solvers import solve_spd
from src.models.specs import GrfSpec
from src.utils.exceptions import ShapeMismatch, ValidationError
from src.utils.logger import get_logger
from src.utils.validators import ArrayValidator

logger = get_logger('grf')

STREAM_INITIAL = 0
STREAM_FORCING = 1
POINT_CHUNK = 4096


def wave_vector_std(length_scale: float) -> float:
    return float(np.sqrt(np.pi / 2.0) / length_scale)


def sample_rng(seed: int, sample_index: int, stream: int = STREAM_INITIAL) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(sample_index, stream)))


@dataclass(frozen=True)
class GrfRealization:
    """Random amplitudes and wave vectors of one field."""
    amplitudes_cos: np.ndarray
    amplitudes_sin: np.ndarray
    wave_vectors: np.ndarray
    variance: float

    @property
    def n_modes(self) -> int:
        return int(self.wave_vectors.shape[0])

    def evaluate(self, points) -> np.ndarray:
        points = ArrayValidator.as_matrix('points', points, n_cols=self.wave_vectors.shape[1],
                                          operation='sample_field')
        if points.shape[0] == 0:
            raise ValidationError("no evaluation points", field='points')
        amplitude = np.sqrt(self.variance / self.n_modes)
        values = np.empty(points.shape[0])
        for start in range(0, points.shape[0], POINT_CHUNK):
            phase = points[start:start + POINT_CHUNK] @ self.wave_vectors.T
            values[start:start + POINT_CHUNK] = np.cos(phase) @ self.amplitudes_cos + np.sin(phase) @ self.amplitudes_sin
        return amplitude * values


def realize(spec: GrfSpec, sample_index: int, dim: int, stream: int = STREAM_INITIAL) -> GrfRealization:
    """Deterministic realization for (spec.seed, sample_index, stream)."""
    rng = sample_rng(spec.seed, sample_index, stream)
    k = rng.normal(0.0, wave_vector_std(spec.length_scale), size=(spec.n_modes, dim))
    z1 = rng.standard_normal(spec.n_modes)
    z2 = rng.standard_normal(spec.n_modes)
    return GrfRealization(z1, z2, k, spec.variance)


def sample_field(spec: GrfSpec, sample_index: int, points, stream: int = STREAM_INITIAL) -> np.ndarray:
    """Field values of realization ``sample_index`` at ``points``."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ShapeMismatch("points must be (n, dim)", expected="2-D", found=points.shape, operation='sample_field')
    return realize(spec, sample_index, points.shape[1], stream).evaluate(points)


def compute_cutoff_field(mesh, normalize: bool = True) -> np.ndarray:
    """Nodal solution of -Laplace(d) = 1 with d = 0 on the boundary, scaled to max 1."""
    ops = fem_operators(mesh)
    if ops.dofs.n_interior == 0:
        raise ValidationError("cutoff field needs at least one interior node", field='mesh')
    rhs = ops.dofs.restrict(ops.mass @ np.ones(mesh.n_nodes))
    d = ops.dofs.extend(solve_spd(ops.stiffness_int, rhs, settings.TOL_SOLVE))
    peak = float(d.max())
    logger.debug(f"Cutoff field peak before scaling: {peak:.6g}", operation='cutoff_field')
    return d / peak if normalize else d


def make_admissible_ic(u_grf, d) -> np.ndarray:
    """Entrywise product GRF * cutoff, vanishing on the boundary."""
    u_grf = np.asarray(u_grf, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if u_grf.shape[-1] != d.shape[-1]:
        raise ShapeMismatch("field and cutoff lengths differ", expected=d.shape[-1], found=u_grf.shape[-1],
                            operation='make_admissible_ic')
    return u_grf * d
