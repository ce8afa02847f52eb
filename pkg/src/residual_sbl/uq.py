"""Gaussian posterior of the signal at a fixed hyperparameter vector."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.stats import norm

from .forward_models import Measurement
from .solver import KernelConditionError, normal_equations

# Dense precision matrices beyond this many unknowns are refused (64 x 64 images).
MAX_UQ_UNKNOWNS = 64 * 64


@dataclass(frozen=True, eq=False)
class ConditionalPosterior:
    """N(mean, precision^-1) with ``precision = alpha Re(F^H F) + Phi^T diag(theta) Phi``."""

    mean: np.ndarray
    precision: np.ndarray
    theta: np.ndarray
    cholesky: np.ndarray  # lower factor of the precision

    @cached_property
    def covariance(self) -> np.ndarray:
        L = self.cholesky
        Linv = sla.solve_triangular(L, np.eye(L.shape[0]), lower=True)
        return Linv.T @ Linv

    @cached_property
    def variance(self) -> np.ndarray:
        # diag(P^-1) = column sums of squares of L^-1
        Linv = sla.solve_triangular(self.cholesky, np.eye(self.mean.size), lower=True)
        return np.sum(Linv**2, axis=0)

    def sample(self, count: int, seed: int) -> np.ndarray:
        return sample(self, count, seed)


@dataclass(frozen=True)
class CredibleBand:
    level: float
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def half_width(self) -> np.ndarray:
        return self.upper - self.mean

    def to_csv(self, path) -> None:
        from .io import write_csv

        write_csv(path, ["index", "mean", "lower", "upper"], [np.arange(self.mean.size), self.mean, self.lower, self.upper])


def conditional_posterior(m: Measurement, transform, theta) -> ConditionalPosterior:
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise ValueError("theta must be strictly positive")
    if m.model.cols > MAX_UQ_UNKNOWNS:
        raise ValueError(f"dense posterior refused for {m.model.cols} unknowns")
    P, b = normal_equations(m, transform, theta)
    P = 0.5 * (P + P.T)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise KernelConditionError("posterior precision is not positive definite") from exc
    return ConditionalPosterior(sla.cho_solve((L, True), b), P, theta, L)


def sample(posterior: ConditionalPosterior, count: int, seed: int) -> np.ndarray:
    """``count`` draws as rows: ``mean + L^-T z`` with ``P = L L^T``."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((posterior.mean.size, count))
    draws = sla.solve_triangular(posterior.cholesky, z, lower=True, trans="T")
    return posterior.mean[None, :] + draws.T


def credible_band(posterior: ConditionalPosterior, level: float = 0.99) -> CredibleBand:
    if not 0 < level < 1:
        raise ValueError("credible level must lie in (0, 1)")
    half = norm.ppf((1 + level) / 2) * np.sqrt(posterior.variance)
    mu = posterior.mean
    return CredibleBand(level, mu, mu - half, mu + half)
