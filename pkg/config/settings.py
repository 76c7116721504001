"""
Centralized configuration management for the FEENet project.
Provides validated, type-safe process-wide settings with environment variable support.
Per-run hyperparameters live in src/models/specs.py.
"""
import os
from pathlib import Path
from typing import List, Dict, Any, Callable
from dataclasses import dataclass
from dotenv import load_dotenv

from src.utils.exceptions import raise_configuration_error

# Load environment variables from .env file
load_dotenv()


@dataclass
class ValidationRule:
    """Represents a configuration validation rule."""
    name: str
    validator: Callable[[Any], bool]
    error_message: str


class Settings:
    """Centralized settings management with validation."""

    # Project paths
    PROJECT_ROOT = Path(__file__).parent.parent

    # Application settings
    LOG_LEVEL: str = os.getenv('FEEN_LOG_LEVEL', 'INFO')
    LOG_PATH: Path = Path(os.getenv('FEEN_LOG_PATH', 'logs'))
    ARTIFACT_PATH: Path = Path(os.getenv('FEEN_ARTIFACT_PATH', 'artifacts'))

    # Numerical tolerances
    TOL_BC: float = float(os.getenv('FEEN_TOL_BC', '1e-10'))
    TOL_SOLVE: float = float(os.getenv('FEEN_TOL_SOLVE', '1e-10'))
    TOL_EIG: float = float(os.getenv('FEEN_TOL_EIG', '1e-8'))
    TOL_ORTH: float = 1e-8

    # Sampling and training defaults
    DEFAULT_SEED: int = int(os.getenv('FEEN_DEFAULT_SEED', '0'))
    GRF_MODES: int = int(os.getenv('FEEN_GRF_MODES', '512'))
    LOG_EVERY: int = int(os.getenv('FEEN_LOG_EVERY', '100'))

    @classmethod
    def validate_configuration(cls) -> List[str]:
        """Validate all configuration settings and return list of errors."""
        errors = []

        validation_rules = [
            ValidationRule(
                name="LOG_LEVEL",
                validator=lambda x: x.upper() in ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'],
                error_message="FEEN_LOG_LEVEL must be one of: DEBUG, INFO, WARNING, ERROR, CRITICAL"
            ),
            ValidationRule(
                name="TOL_BC",
                validator=lambda x: 0 < x < 1e-3,
                error_message="FEEN_TOL_BC must be in (0, 1e-3)"
            ),
            ValidationRule(
                name="TOL_SOLVE",
                validator=lambda x: 0 < x < 1e-2,
                error_message="FEEN_TOL_SOLVE must be in (0, 1e-2)"
            ),
            ValidationRule(
                name="TOL_EIG",
                validator=lambda x: 0 < x < 1e-2,
                error_message="FEEN_TOL_EIG must be in (0, 1e-2)"
            ),
            ValidationRule(
                name="DEFAULT_SEED",
                validator=lambda x: 0 <= x < 2 ** 63,
                error_message="FEEN_DEFAULT_SEED must be a non-negative 64-bit integer"
            ),
            ValidationRule(
                name="GRF_MODES",
                validator=lambda x: x >= 1,
                error_message="FEEN_GRF_MODES must be at least 1"
            ),
            ValidationRule(
                name="LOG_EVERY",
                validator=lambda x: x >= 1,
                error_message="FEEN_LOG_EVERY must be at least 1"
            ),
        ]

        for rule in validation_rules:
            try:
                value = getattr(cls, rule.name)
                if not rule.validator(value):
                    errors.append(f"{rule.error_message} (current: {value})")
            except Exception as e:
                errors.append(f"Error validating {rule.name}: {str(e)}")

        return errors

    @classmethod
    def validate_and_raise(cls) -> None:
        """Validate configuration and raise error if invalid."""
        errors = cls.validate_configuration()
        if errors:
            error_message = "Configuration validation failed:\n" + "\n".join(f"- {error}" for error in errors)
            raise_configuration_error(error_message)

    @classmethod
    def get_configuration_summary(cls) -> Dict[str, Any]:
        """Get a summary of current configuration."""
        return {
            'log_level': cls.LOG_LEVEL,
            'paths': {
                'project_root': str(cls.PROJECT_ROOT),
                'logs': str(cls.LOG_PATH),
                'artifacts': str(cls.ARTIFACT_PATH),
            },
            'tolerances': {
                'point_location': cls.TOL_BC,
                'linear_solve': cls.TOL_SOLVE,
                'eigen_residual': cls.TOL_EIG,
                'orthonormality': cls.TOL_ORTH,
            },
            'defaults': {
                'seed': cls.DEFAULT_SEED,
                'grf_modes': cls.GRF_MODES,
                'log_every': cls.LOG_EVERY,
            },
        }


# Create global settings instance
settings = Settings()
