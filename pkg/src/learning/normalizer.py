"""Per-sensor Z-score or identity normalization."""
from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.utils.exceptions import ShapeMismatch, ValidationError

MIN_STD = 1e-12


@dataclass(frozen=True, eq=False)
class Normalizer:
    mode: Literal["zscore", "identity"]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mode not in ("zscore", "identity"):
            raise ValidationError(f"unknown normalization mode {self.mode!r}", field='mode', value=self.mode)
        if self.mean.shape != self.std.shape:
            raise ShapeMismatch("mean and std shapes differ", expected=self.mean.shape, found=self.std.shape)

    @classmethod
    def identity(cls, width: int) -> "Normalizer":
        return cls("identity", np.zeros(width), np.ones(width))

    @classmethod
    def fit(cls, data, mode: str) -> "Normalizer":
        """Statistics over every axis but the last (samples, and snapshots for heat outputs)."""
        data = np.asarray(data, dtype=np.float64)
        width = data.shape[-1]
        if mode == "identity":
            return cls.identity(width)
        flat = data.reshape(-1, width)
        if flat.shape[0] == 0:
            raise ValidationError("cannot fit a normalizer on empty data", field='data')
        return cls("zscore", flat.mean(axis=0), np.maximum(flat.std(axis=0), MIN_STD))

    @property
    def width(self) -> int:
        return int(self.mean.size)

    def _check(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.width:
            raise ShapeMismatch("value width differs from normalizer", expected=self.width, found=x.shape[-1])

    def normalize(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.mode == "identity":
            return x
        self._check(x)
        return (x - self.mean) / self.std

    def denormalize(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if self.mode == "identity":
            return y
        self._check(y)
        return y * self.std + self.mean

    def at_points(self, interp) -> "Normalizer":
        """Statistics carried to query points by P1 interpolation (``interp`` is points x nodes)."""
        if self.mode == "identity":
            return Normalizer.identity(interp.shape[0])
        return Normalizer("zscore", np.asarray(interp @ self.mean), np.maximum(np.asarray(interp @ self.std), MIN_STD))
