"""Straight-line paths with a sinusoidal perturbation, and Gaussian oracles.

The perturbed path is ``x_t = (1-t) x0 + t x1 + gamma_t z`` with
``gamma_t = a sin^2(pi t)``.  For independent Gaussian endpoints every
quantity the sampler needs (conditional velocity, marginal score, transport
velocity) has a closed form, which the tests use as ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class InterpolantConfig:
    a: float = 0.1
    t_min: float = 0.05
    # hook for non-sinusoidal schedules: (gamma, dgamma/dt) as functions of t
    schedule: tuple[Callable, Callable] | None = None

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError("interpolant.a must be > 0")
        if not 0 < self.t_min < 0.5:
            raise ConfigError("interpolant.t_min must lie in (0, 0.5)")


@dataclass(frozen=True)
class GaussianPairOracle:
    """Independent isotropic Gaussian endpoints N(mu0, var0 I) and N(mu1, var1 I)."""

    mu0: np.ndarray | float
    mu1: np.ndarray | float
    var0: float
    var1: float

    def __post_init__(self):
        if not (self.var0 > 0 and self.var1 > 0):
            raise ConfigError("oracle variances must be positive")


def _check_t(t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > 1):
        raise DomainError(f"t must lie in [0, 1], got {t}")
    return t_arr


def gamma(t, cfg: InterpolantConfig):
    t = _check_t(t)
    if cfg.schedule is not None:
        return cfg.schedule[0](t)
    # reflect about t = 1/2 so both endpoints give exactly zero
    return cfg.a * np.sin(np.pi * np.minimum(t, 1 - t)) ** 2


def gamma_dot(t, cfg: InterpolantConfig):
    t = _check_t(t)
    if cfg.schedule is not None:
        return cfg.schedule[1](t)
    return cfg.a * np.pi * np.where(t <= 0.5, np.sin(2 * np.pi * t), -np.sin(2 * np.pi * (1 - t)))


def _col(t, x):
    """Broadcast per-row times against an (n, d) array."""
    t = np.asarray(t, dtype=float)
    return t[:, None] if t.ndim == 1 and np.ndim(x) == 2 else t


def interpolate(x0, x1, t, z, cfg: InterpolantConfig):
    x0, x1, z = np.asarray(x0, float), np.asarray(x1, float), np.asarray(z, float)
    if not (x0.shape == x1.shape == z.shape):
        raise DomainError(f"shape mismatch: {x0.shape}, {x1.shape}, {z.shape}")
    g = _col(gamma(t, cfg), x0)
    tc = _col(t, x0)
    return (1 - tc) * x0 + tc * x1 + g * z


def score_target(z, t, cfg: InterpolantConfig):
    """-z / gamma_t: the score of x_t given both endpoints."""
    t_arr = _check_t(t)
    if np.any(t_arr < cfg.t_min) or np.any(t_arr > 1 - cfg.t_min):
        raise DomainError(f"score target undefined within t_min={cfg.t_min} of an endpoint")
    z = np.asarray(z, float)
    return -z / _col(gamma(t_arr, cfg), z)


# ---------------------------------------------------------------- oracles

def marginal_moments(t, oracle: GaussianPairOracle, cfg: InterpolantConfig | None = None):
    """Mean and per-coordinate variance of x_t (gamma = 0 when ``cfg`` is None).

    Oracle functions take a scalar ``t``; samplers share one time grid.
    """
    t = _check_t(t)
    mean = (1 - t) * np.asarray(oracle.mu0, float) + t * np.asarray(oracle.mu1, float)
    var = (1 - t) ** 2 * oracle.var0 + t**2 * oracle.var1
    if cfg is not None:
        var = var + gamma(t, cfg) ** 2
    return mean, var


def oracle_velocity(x, t, oracle: GaussianPairOracle, cfg: InterpolantConfig | None = None):
    """E[x1 - x0 | x_t = x] for independent Gaussian endpoints.

    Linear-Gaussian conditioning: the noise term is independent of x1 - x0, so
    it only enters through the marginal variance.
    """
    x = np.asarray(x, float)
    mean, var = marginal_moments(t, oracle, cfg)
    t = np.asarray(t, float)
    cov = t * oracle.var1 - (1 - t) * oracle.var0
    drift = np.asarray(oracle.mu1, float) - np.asarray(oracle.mu0, float)
    return drift + cov / var * (x - mean)


def transport_velocity(x, t, oracle: GaussianPairOracle, cfg: InterpolantConfig | None = None):
    """Velocity whose ODE exactly carries the Gaussian marginal path.

    Equals ``oracle_velocity`` plus the gamma*gamma' contribution of the
    perturbation; identical to it when ``cfg`` is None.
    """
    v = oracle_velocity(x, t, oracle, cfg)
    if cfg is None:
        return v
    mean, var = marginal_moments(t, oracle, cfg)
    slope = gamma(t, cfg) * gamma_dot(t, cfg) / var
    return v + slope * (np.asarray(x, float) - mean)


def oracle_score(x, t, oracle: GaussianPairOracle, cfg: InterpolantConfig | None = None):
    x = np.asarray(x, float)
    mean, var = marginal_moments(t, oracle, cfg)
    return -(x - mean) / var


def oracle_log_density(x, t, oracle: GaussianPairOracle, cfg: InterpolantConfig | None = None):
    x = np.atleast_1d(np.asarray(x, float))
    mean, var = marginal_moments(t, oracle, cfg)
    d = x.shape[-1]
    r2 = np.sum((x - mean) ** 2, axis=-1)
    return -0.5 * r2 / var - 0.5 * d * np.log(2 * np.pi * var)


class GaussianFields:
    """Velocity/score fields of the exact Gaussian marginal path.

    With these fields the corrected SDE reproduces the path's marginals, which
    makes them the reference for sampler validation.
    """

    def __init__(self, oracle: GaussianPairOracle, cfg: InterpolantConfig | None = None):
        self.oracle = oracle
        self.cfg = cfg

    def velocity(self, x, t, c=None):
        return transport_velocity(x, t, self.oracle, self.cfg)

    def score(self, x, t, c=None):
        return oracle_score(x, t, self.oracle, self.cfg)
