"""Diagonal Gaussian densities, log-likelihood ratios and KL divergences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))
MIN_VARIANCE = 1e-12


class DomainError(ValueError):
    """Invalid distribution parameters or mismatched dimensions."""


@dataclass(frozen=True)
class DiagonalGaussian:
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        var = np.atleast_1d(np.asarray(self.var, dtype=float))
        if mean.shape != var.shape:
            raise DomainError(f"mean shape {mean.shape} != variance shape {var.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise DomainError("non-finite Gaussian parameters")
        if np.any(var <= MIN_VARIANCE):
            raise DomainError("variance must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    def sample(self, rng: np.random.Generator, size=None):
        shape = self.mean.shape if size is None else (size,) + self.mean.shape
        return self.mean + np.sqrt(self.var) * rng.standard_normal(shape)


def diag_log_density(mean, var, y):
    """Vectorised log N(y; mean, diag(var)), summed over the last axis."""
    diff = y - mean
    return -0.5 * np.sum(LOG_2PI + np.log(var) + diff * diff / var, axis=-1)


def _check_dim(g: DiagonalGaussian, y) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape[-1] != g.dim:
        raise DomainError(f"observation dim {y.shape[-1]} != distribution dim {g.dim}")
    return y


def log_density(g: DiagonalGaussian, y) -> float:
    y = _check_dim(g, y)
    return float(diag_log_density(g.mean, g.var, y))


def llr(p1: DiagonalGaussian, p0: DiagonalGaussian, y) -> float:
    """log p1(y) - log p0(y)."""
    if p1.dim != p0.dim:
        raise DomainError("distributions differ in dimension")
    return log_density(p1, y) - log_density(p0, y)


def kl_divergence(p1: DiagonalGaussian, p0: DiagonalGaussian) -> float:
    """KL(p1 || p0) in closed form."""
    if p1.dim != p0.dim:
        raise DomainError("distributions differ in dimension")
    ratio = p1.var / p0.var
    diff = p1.mean - p0.mean
    return float(0.5 * np.sum(ratio + diff * diff / p0.var - 1.0 - np.log(ratio)))
