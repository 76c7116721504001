"""
Spectral coordinates: M-weighted projection, per-problem reconstruction rules
and functions of the discrete Laplacian applied through its eigenbasis.
"""
import re
from dataclasses import dataclass
from typing import Callable, Literal, Optional, Tuple

import numpy as np

from src.spectral.eigen import EigenBasis
from src.utils.exceptions import ConfigurationError, DomainError, MissingTime, ShapeMismatch, ValidationError
from src.utils.logger import get_logger

logger = get_logger('spectral')

RuleVariant = Literal["poisson_scaled", "heat_decay", "heat_forced_ode"]

PROBLEM_RULES = {
    "poisson": "poisson_scaled",
    "heat_homogeneous": "heat_decay",
    "heat_forced": "heat_forced_ode",
}


@dataclass(frozen=True)
class SpectralCoords:
    """Coefficients in the eigenbasis, one row per field."""
    coeffs: np.ndarray
    problem: str = ""

    def __post_init__(self):
        if not np.all(np.isfinite(self.coeffs)):
            raise ValidationError("spectral coordinates must be finite", field='coeffs')


@dataclass(frozen=True, eq=False)
class ReconstructionRule:
    """Maps predicted coordinates to eigenbasis amplitudes for one problem class."""
    variant: RuleVariant
    eigenvalues: np.ndarray
    diffusivity: Optional[float] = None

    def __post_init__(self):
        if self.variant not in PROBLEM_RULES.values():
            raise ConfigurationError(f"unknown reconstruction variant {self.variant!r}")
        if np.any(self.eigenvalues <= 0):
            raise DomainError("reconstruction needs positive eigenvalues", operation='reconstruction_rule')
        if self.is_heat and not (self.diffusivity is not None and self.diffusivity > 0):
            raise ConfigurationError(f"{self.variant} requires a positive diffusivity")

    @classmethod
    def for_problem(cls, problem: str, basis: EigenBasis, diffusivity: Optional[float] = None) -> "ReconstructionRule":
        return cls(PROBLEM_RULES[problem], np.asarray(basis.eigenvalues), diffusivity)

    @property
    def is_heat(self) -> bool:
        return self.variant != "poisson_scaled"

    @property
    def n_modes(self) -> int:
        return int(self.eigenvalues.size)

    def factors(self, t=None, batch: int = 1) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """
        Per-row multiplicative scale and forcing weight, each (batch, M).

        Effective amplitudes are ``coords * scale + f_coeffs * weight``; the weight
        is None except for heat_forced_ode.
        """
        lam = self.eigenvalues[None, :]
        if self.variant == "poisson_scaled":
            return np.broadcast_to(lam ** -0.5, (batch, self.n_modes)), None
        if t is None:
            raise MissingTime(f"{self.variant} reconstruction needs a time", operation='reconstruct')
        t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
        if t.shape[0] not in (1, batch):
            raise ShapeMismatch("one time per row expected", expected=batch, found=t.shape[0])
        rate = self.diffusivity * lam
        decay = np.broadcast_to(np.exp(-rate * t), (batch, self.n_modes))
        if self.variant == "heat_decay":
            return decay, None
        return decay, (1.0 - decay) / rate

    def amplitudes(self, coeffs, t=None, f_coeffs=None) -> np.ndarray:
        """Eigenbasis amplitudes for coordinate rows ``coeffs`` (B, M) or (M,)."""
        coeffs = np.asarray(coeffs, dtype=np.float64)
        single = coeffs.ndim == 1
        coeffs = np.atleast_2d(coeffs)
        if coeffs.shape[1] != self.n_modes:
            raise ShapeMismatch("coordinate count differs from basis size", expected=self.n_modes,
                                found=coeffs.shape[1], operation='reconstruct')
        scale, weight = self.factors(t, coeffs.shape[0])
        out = coeffs * scale
        if weight is not None:
            if f_coeffs is None:
                raise ValidationError("heat_forced_ode needs forcing coefficients", field='f_coeffs')
            out = out + np.atleast_2d(np.asarray(f_coeffs, dtype=np.float64)) * weight
        return out[0] if single else out


def projection_matrix(basis: EigenBasis, mass) -> np.ndarray:
    """Dense (M, N_nodes) operator u -> Phi^T M u."""
    return np.asarray((mass @ basis.nodal_modes).T)


def project(basis: EigenBasis, mass, u, problem: str = "") -> SpectralCoords:
    """c_k = phi_k^T M u for a nodal field (N,) or stack (B, N)."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != basis.dofs.n_nodes:
        raise ShapeMismatch("field length differs from node count", expected=basis.dofs.n_nodes,
                            found=u.shape[-1], operation='project')
    Mu = np.asarray(mass @ u.T).T
    return SpectralCoords(Mu @ basis.nodal_modes, problem)


def scaled_basis_poisson(basis: EigenBasis) -> EigenBasis:
    """Basis with column k scaled by lambda_k^(-1/2)."""
    if np.any(basis.eigenvalues <= 0):
        raise DomainError("lambda^(-1/2) scaling needs positive eigenvalues", operation='scaled_basis_poisson')
    scale = basis.eigenvalues ** -0.5
    return EigenBasis(basis.eigenvalues, basis.modes * scale[None, :], basis.dofs, basis.mesh_id)


def reconstruct(rule: ReconstructionRule, coeffs, t=None, eval_matrix=None, f_coeffs=None) -> np.ndarray:
    """Field values at the points whose basis values are the rows of ``eval_matrix``."""
    if isinstance(coeffs, SpectralCoords):
        coeffs = coeffs.coeffs
    if eval_matrix is None:
        raise ValidationError("reconstruction needs basis values at the query points", field='eval_matrix')
    eval_matrix = np.asarray(eval_matrix, dtype=np.float64)
    if eval_matrix.shape[1] != rule.n_modes:
        raise ShapeMismatch("evaluation matrix width differs from basis size", expected=rule.n_modes,
                            found=eval_matrix.shape[1], operation='reconstruct')
    return rule.amplitudes(coeffs, t, f_coeffs) @ eval_matrix.T


_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_DESCRIPTOR = re.compile(rf"^(identity|pow|exp-scale|sin)(?::({_NUMBER}))?$")


@dataclass(frozen=True)
class SpectralFunction:
    """Scalar function of the eigenvalue parsed from a descriptor."""
    kind: str
    parameter: Optional[float] = None

    @classmethod
    def parse(cls, descriptor: str) -> "SpectralFunction":
        """
        Accepted forms:
            identity        g(l) = 1
            pow:<a>         g(l) = l**a
            exp-scale:<a>   g(l) = exp(-a l)
            sin:<a>         g(l) = sin(a l)
        """
        match = _DESCRIPTOR.match(descriptor.strip())
        if not match:
            raise ValidationError(f"invalid spectral function {descriptor!r}", field='function', value=descriptor)
        kind, param = match.group(1), match.group(2)
        if kind == "identity":
            if param is not None:
                raise ValidationError("identity takes no parameter", field='function', value=descriptor)
            return cls(kind)
        if param is None:
            raise ValidationError(f"{kind} needs a parameter, e.g. {kind}:1", field='function', value=descriptor)
        return cls(kind, float(param))

    @property
    def descriptor(self) -> str:
        return self.kind if self.parameter is None else f"{self.kind}:{self.parameter:g}"

    def _fn(self) -> Callable[[np.ndarray], np.ndarray]:
        a = self.parameter
        return {
            "identity": np.ones_like,
            "pow": lambda lam: np.power(lam, a),
            "exp-scale": lambda lam: np.exp(-a * lam),
            "sin": lambda lam: np.sin(a * lam),
        }[self.kind]

    def __call__(self, eigenvalues) -> np.ndarray:
        lam = np.asarray(eigenvalues, dtype=np.float64)
        with np.errstate(all='ignore'):
            values = self._fn()(lam)
        bad = ~np.isfinite(values)
        if np.any(bad):
            raise DomainError(f"{self.descriptor} is undefined at {int(bad.sum())} eigenvalue(s)",
                              details={'first_eigenvalue': float(lam[bad][0])}, operation='apply_spectral_function')
        return values


def apply_spectral_function(basis: EigenBasis, g, u, mass) -> np.ndarray:
    """sum_k g(lambda_k) (phi_k^T M u) phi_k as a nodal field."""
    if isinstance(g, str):
        g = SpectralFunction.parse(g)
    weights = g(basis.eigenvalues)
    coeffs = project(basis, mass, u).coeffs
    return (coeffs * weights) @ basis.nodal_modes.T
