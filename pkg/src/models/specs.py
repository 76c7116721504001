"""
Typed run specifications for geometry, random fields, PDE problems and training.
All models reject unknown keys so that JSON run configurations are schema-checked.
"""
import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, model_validator

from config.settings import settings
from src.utils.exceptions import ConfigurationError

GeometryKind = Literal["unit_square", "fins", "external_file"]
ProblemKind = Literal["poisson", "heat_homogeneous", "heat_forced"]
NormalizationMode = Literal["auto", "zscore", "identity"]

SNAPSHOT_TOL = 1e-12

# Correlation lengths used for each benchmark geometry
DEFAULT_LENGTH_SCALES = {
    "unit_square": 0.3,
    "fins": 0.15,
    "external_file": 0.4,
}


def _default_snapshots() -> List[float]:
    return [round(0.1 * k, 12) for k in range(1, 11)]


def is_multiple_of(t: float, dt: float) -> bool:
    return math.isclose(t, round(t / dt) * dt, rel_tol=0.0, abs_tol=SNAPSHOT_TOL)


class FinsParams(BaseModel):
    """Base rectangle with evenly spaced rectangular fins on its top edge."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    base_width: float = Field(2.0, gt=0)
    base_height: float = Field(1.0, gt=0)
    fin_count: int = Field(4, ge=0)
    fin_width: float = Field(0.1, gt=0)
    fin_length: float = Field(0.5, gt=0)


class GeometrySpec(BaseModel):
    """Which domain to mesh and at what resolution."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: GeometryKind = "unit_square"
    resolution: float = Field(1.0 / 34.0, gt=0, description="target element size h")
    n_per_side: Optional[int] = Field(None, ge=2, description="structured square nodes per side")
    fins_params: FinsParams = Field(default_factory=FinsParams)
    path: Optional[str] = None
    mesher: Literal["auto", "triangle", "grid"] = "auto"

    @model_validator(mode="after")
    def _check_kind(self) -> "GeometrySpec":
        if self.kind == "external_file" and not self.path:
            raise ValueError("external_file geometry requires a path")
        return self

    def square_nodes_per_side(self) -> int:
        """Nodes per side for the structured square (explicit or derived from h)."""
        if self.n_per_side is not None:
            return self.n_per_side
        return max(2, int(round(1.0 / self.resolution)) + 1)


class GrfSpec(BaseModel):
    """Gaussian random field with squared-exponential covariance."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    variance: float = Field(15.0, gt=0)
    length_scale: float = Field(0.3, gt=0)
    n_modes: int = Field(default_factory=lambda: settings.GRF_MODES, ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)

    @classmethod
    def for_geometry(cls, kind: GeometryKind, **overrides) -> "GrfSpec":
        """Spec with the per-geometry default correlation length."""
        values = {'length_scale': DEFAULT_LENGTH_SCALES[kind]}
        values.update(overrides)
        return cls(**values)


class ProblemSpec(BaseModel):
    """PDE class and time integration parameters."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    problem: ProblemKind = "poisson"
    diffusivity: float = Field(0.02, gt=0)
    t_final: float = Field(1.0, gt=0)
    dt: float = Field(0.0025, gt=0)
    snapshot_times: List[float] = Field(default_factory=_default_snapshots)

    @model_validator(mode="after")
    def _check_schedule(self) -> "ProblemSpec":
        if not self.is_heat:
            return self
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        if not self.snapshot_times:
            raise ValueError("heat problems need at least one snapshot time")
        previous = 0.0
        for t in self.snapshot_times:
            if not (0.0 < t <= self.t_final + SNAPSHOT_TOL):
                raise ValueError(f"snapshot time {t} outside (0, {self.t_final}]")
            if not is_multiple_of(t, self.dt):
                raise ValueError(f"snapshot time {t} is not a multiple of dt={self.dt}")
            if t <= previous:
                raise ValueError("snapshot times must be strictly increasing")
            previous = t
        return self

    @property
    def is_heat(self) -> bool:
        return self.problem != "poisson"

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def snapshot_steps(self) -> List[int]:
        return [int(round(t / self.dt)) for t in self.snapshot_times]


class TrainConfig(BaseModel):
    """Adam training hyperparameters for the branch network."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(4e-5, ge=0, description="0 freezes the model")
    iterations: int = Field(100_000, ge=0)
    batch_size: int = Field(256, ge=1)
    seed: int = Field(0, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    train_fraction: float = Field(0.9, gt=0, lt=1)
    log_every: int = Field(100, ge=1)
    input_normalization: NormalizationMode = "auto"
    output_normalization: NormalizationMode = "auto"

    def resolve_normalization(self, problem: ProblemKind) -> Tuple[str, str]:
        """Concrete (input, output) normalization modes for a problem class."""
        defaults = {
            "poisson": ("zscore", "zscore"),
            "heat_homogeneous": ("zscore", "identity"),
            "heat_forced": ("zscore", "identity"),
        }[problem]
        input_mode = defaults[0] if self.input_normalization == "auto" else self.input_normalization
        output_mode = defaults[1] if self.output_normalization == "auto" else self.output_normalization
        if problem == "heat_forced" and output_mode != "identity":
            raise ConfigurationError(
                "heat_forced outputs must stay in physical units",
                details={'output_normalization': output_mode},
            )
        return input_mode, output_mode


class RunPaths(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    output_dir: str = "artifacts"
    mesh_file: str = "mesh.feen"
    basis_file: str = "basis.feen"
    dataset_file: str = "dataset.feen"
    model_file: str = "model.feen"
    report_file: str = "report.csv"


class RunConfig(BaseModel):
    """Complete pipeline configuration loaded from JSON."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    geometry: GeometrySpec = Field(default_factory=GeometrySpec)
    problem: ProblemSpec = Field(default_factory=ProblemSpec)
    grf: Optional[GrfSpec] = None
    modes: int = Field(400, ge=1)
    n_samples: int = Field(2000, ge=0)
    train: TrainConfig = Field(default_factory=TrainConfig)
    paths: RunPaths = Field(default_factory=RunPaths)

    def resolved_grf(self) -> GrfSpec:
        return self.grf if self.grf is not None else GrfSpec.for_geometry(self.geometry.kind)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "RunConfig":
        """Load and validate a run configuration document."""
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"Cannot read run configuration: {e}", details={'path': str(path)})
        return parse_spec(cls, data)


def parse_spec(model_cls, data):
    """Validate ``data`` against ``model_cls``, mapping pydantic errors to ConfigurationError."""
    try:
        return model_cls.model_validate(data)
    except PydanticValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"Invalid {model_cls.__name__}: {problems}")
