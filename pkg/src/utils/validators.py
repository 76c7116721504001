"""
Input validation helpers shared by the numerical modules.
Every check raises a ShapeMismatch carrying the offending field name so the
CLI can report it.
"""
from typing import Optional, Tuple

import numpy as np

from src.utils.exceptions import ShapeMismatch


class ArrayValidator:
    """Static shape and value checks for numpy inputs."""

    @staticmethod
    def as_vector(name: str, values, length: Optional[int] = None, operation: Optional[str] = None) -> np.ndarray:
        """Return ``values`` as a float64 1-D array, optionally of a fixed length."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1:
            raise ShapeMismatch(f"{name} must be a vector", expected="1-D", found=arr.shape, operation=operation)
        if length is not None and arr.shape[0] != length:
            raise ShapeMismatch(f"{name} has wrong length", expected=length, found=arr.shape[0], operation=operation)
        return arr

    @staticmethod
    def as_matrix(name: str, values, n_cols: Optional[int] = None, n_rows: Optional[int] = None,
                  operation: Optional[str] = None) -> np.ndarray:
        """Return ``values`` as a float64 2-D array with optional fixed dimensions."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeMismatch(f"{name} must be a matrix", expected="2-D", found=arr.shape, operation=operation)
        if n_rows is not None and arr.shape[0] != n_rows:
            raise ShapeMismatch(f"{name} has wrong row count", expected=n_rows, found=arr.shape[0], operation=operation)
        if n_cols is not None and arr.shape[1] != n_cols:
            raise ShapeMismatch(f"{name} has wrong column count", expected=n_cols, found=arr.shape[1], operation=operation)
        return arr

    @staticmethod
    def as_batch(name: str, values, width: int, operation: Optional[str] = None) -> Tuple[np.ndarray, bool]:
        """Accept a vector or a stack of vectors; return (2-D array, was_vector)."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
            was_vector = True
        elif arr.ndim == 2:
            was_vector = False
        else:
            raise ShapeMismatch(f"{name} must be 1-D or 2-D", expected="1-D or 2-D", found=arr.shape, operation=operation)
        if arr.shape[1] != width:
            raise ShapeMismatch(f"{name} has wrong width", expected=width, found=arr.shape[1], operation=operation)
        return arr, was_vector
