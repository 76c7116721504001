"""
Custom exceptions for the FEENet system.
Provides a hierarchy of exceptions for better error handling and debugging,
each carrying the process exit code the CLI reports for it.
"""

from typing import Optional, Dict, Any, Sequence


class FeenetError(Exception):
    """Base exception for all FEENet related errors."""

    exit_code: int = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None, operation: Optional[str] = None):
        self.message = message
        self.details = details or {}
        self.operation = operation
        super().__init__(self.message)

    def __str__(self) -> str:
        base_msg = self.message
        if self.operation:
            base_msg = f"[{self.operation}] {base_msg}"

        if self.details:
            details_str = ", ".join(f"{k}={v}" for k, v in self.details.items())
            base_msg += f" (Details: {details_str})"

        return base_msg


class ConfigurationError(FeenetError):
    """Raised when there are configuration-related issues."""
    exit_code = 2


class ValidationError(FeenetError):
    """Raised when input validation fails."""
    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None, value: Any = None, **kwargs):
        details = kwargs.get('details', {})
        if field:
            details['field'] = field
        if value is not None:
            details['value'] = str(value)
        super().__init__(message, details, kwargs.get('operation'))


class ShapeMismatch(ValidationError):
    """Raised when array shapes disagree with the bound mesh, basis or model."""

    def __init__(self, message: str, expected: Any = None, found: Any = None, **kwargs):
        details = kwargs.get('details', {})
        if expected is not None:
            details['expected'] = str(expected)
        if found is not None:
            details['found'] = str(found)
        super().__init__(message, details=details, operation=kwargs.get('operation'))


# Geometry and mesh ingestion

class GeometryError(FeenetError):
    """Base class for mesh generation and ingestion failures."""
    exit_code = 3


class InvalidGeometry(GeometryError):
    """Raised when a geometry specification cannot produce a valid polygon."""
    pass


class ParseError(GeometryError):
    """Raised when a mesh file is malformed."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None, **kwargs):
        details = kwargs.get('details', {})
        if line is not None:
            details['line'] = line
        if path:
            details['path'] = path
        self.line = line
        super().__init__(message, details, kwargs.get('operation'))


class UnsupportedElement(GeometryError):
    """Raised when a mesh file contains element types other than P1 triangles/tets."""

    def __init__(self, message: str, element_type: Optional[int] = None, line: Optional[int] = None, **kwargs):
        details = kwargs.get('details', {})
        if element_type is not None:
            details['element_type'] = element_type
        if line is not None:
            details['line'] = line
        self.element_type = element_type
        super().__init__(message, details, kwargs.get('operation'))


class NotInDomain(GeometryError):
    """Raised when query points fall outside every mesh element."""

    def __init__(self, message: str, point_indices: Optional[Sequence[int]] = None, **kwargs):
        details = kwargs.get('details', {})
        self.point_indices = list(point_indices) if point_indices is not None else []
        if self.point_indices:
            shown = self.point_indices[:10]
            details['points'] = shown if len(self.point_indices) <= 10 else f"{shown}... ({len(self.point_indices)} total)"
        super().__init__(message, details, kwargs.get('operation'))


class DegenerateElement(GeometryError):
    """Raised when an element has (near) zero volume."""

    def __init__(self, message: str, element: Optional[int] = None, volume: Optional[float] = None, **kwargs):
        details = kwargs.get('details', {})
        if element is not None:
            details['element'] = element
        if volume is not None:
            details['volume'] = volume
        super().__init__(message, details, kwargs.get('operation'))


# Numerical solvers

class NotConverged(FeenetError):
    """Raised when an iterative solver or eigensolver misses its tolerance."""
    exit_code = 4

    def __init__(self, message: str, iterations: Optional[int] = None, residual: Optional[float] = None, **kwargs):
        details = kwargs.get('details', {})
        if iterations is not None:
            details['iterations'] = iterations
        if residual is not None:
            details['residual'] = residual
        self.iterations = iterations
        self.residual = residual
        super().__init__(message, details, kwargs.get('operation'))


class InsufficientDofs(FeenetError):
    """Raised when more modes are requested than interior degrees of freedom."""
    exit_code = 2

    def __init__(self, message: str, requested: Optional[int] = None, available: Optional[int] = None, **kwargs):
        details = kwargs.get('details', {})
        if requested is not None:
            details['requested'] = requested
        if available is not None:
            details['available'] = available
        super().__init__(message, details, kwargs.get('operation'))


class MissingTime(FeenetError):
    """Raised when a time-dependent reconstruction is evaluated without t."""
    exit_code = 2


class DomainError(FeenetError):
    """Raised when a spectral function is undefined on part of the spectrum."""
    exit_code = 2


class ZeroReference(FeenetError):
    """Raised when a relative error is requested against a zero reference field."""
    exit_code = 2


class NonFiniteLoss(FeenetError):
    """Raised when training produces a NaN or infinite loss."""
    exit_code = 6

    def __init__(self, message: str, iteration: Optional[int] = None, **kwargs):
        details = kwargs.get('details', {})
        if iteration is not None:
            details['iteration'] = iteration
        self.iteration = iteration
        super().__init__(message, details, kwargs.get('operation'))


# Artifact storage

class StorageError(FeenetError):
    """Raised when artifact storage operations fail."""
    exit_code = 2

    def __init__(self, message: str, file_path: Optional[str] = None, **kwargs):
        details = kwargs.get('details', {})
        if file_path:
            details['file_path'] = file_path
        super().__init__(message, details, kwargs.get('operation'))


class ContainerError(StorageError):
    """Raised when a FEEN container is malformed or of the wrong kind."""
    pass


class HashMismatch(StorageError):
    """Raised when artifacts reference a different mesh or basis than supplied."""
    exit_code = 5

    def __init__(self, message: str, expected: Optional[str] = None, found: Optional[str] = None, **kwargs):
        details = kwargs.get('details', {})
        if expected:
            details['expected'] = expected
        if found:
            details['found'] = found
        super().__init__(message, details=details, operation=kwargs.get('operation'))


# Convenience functions for common error scenarios
def raise_configuration_error(message: str, setting: Optional[str] = None, value: Any = None):
    """Raise a configuration error with standardized details."""
    details = {}
    if setting:
        details['setting'] = setting
    if value is not None:
        details['value'] = str(value)
    raise ConfigurationError(message, details=details)


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit code table."""
    if isinstance(error, FeenetError):
        return error.exit_code
    return 1
