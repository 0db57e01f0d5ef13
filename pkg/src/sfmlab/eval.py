"""Distribution-level generation metrics on raw coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ConfigError

JITTER = 1e-8


@dataclass
class MetricReport:
    frechet: float
    energy: float
    n_generated: int
    n_reference: int
    jitter: float = 0.0


def _sqrtm_psd(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def frechet_from_moments(mu_a, cov_a, mu_b, cov_b) -> float:
    """||mu_a - mu_b||^2 + tr(A + B - 2 (A B)^{1/2}).

    tr((AB)^{1/2}) is evaluated as tr((A^{1/2} B A^{1/2})^{1/2}), whose
    argument is symmetric PSD.
    """
    mu_a, mu_b = np.atleast_1d(mu_a).astype(float), np.atleast_1d(mu_b).astype(float)
    cov_a, cov_b = np.atleast_2d(cov_a).astype(float), np.atleast_2d(cov_b).astype(float)
    ra = _sqrtm_psd(cov_a)
    w = np.linalg.eigvalsh(ra @ cov_b @ ra)
    cross = np.sum(np.sqrt(np.clip(w, 0, None)))
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * cross)


def _moments(x: np.ndarray):
    mu = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    return mu, cov


def frechet_distance(a, b, return_jitter: bool = False):
    """Gaussian Fréchet distance between two point sets.

    A singular covariance gets ``JITTER`` added to its diagonal; the amount
    used is returned when ``return_jitter`` is set.
    """
    a, b = np.atleast_2d(np.asarray(a, float)), np.atleast_2d(np.asarray(b, float))
    if a.shape[1] != b.shape[1]:
        raise ConfigError("point sets differ in dimension")
    if min(len(a), len(b)) < 2:
        raise ConfigError("need at least two points per set")
    (mu_a, cov_a), (mu_b, cov_b) = _moments(a), _moments(b)
    jitter = 0.0
    for cov in (cov_a, cov_b):
        if np.linalg.eigvalsh(cov).min() <= 0:
            jitter = JITTER
    if jitter:
        eye = np.eye(a.shape[1]) * jitter
        cov_a, cov_b = cov_a + eye, cov_b + eye
    fd = frechet_from_moments(mu_a, cov_a, mu_b, cov_b)
    return (fd, jitter) if return_jitter else fd


def energy_distance(a, b) -> float:
    """2 E|a-b| - E|a-a'| - E|b-b'| with U-statistic within-set terms.

    A single-point set contributes zero within-set spread.
    """
    a, b = np.atleast_2d(np.asarray(a, float)), np.atleast_2d(np.asarray(b, float))
    if len(a) == 0 or len(b) == 0:
        raise ConfigError("energy distance needs nonempty sets")
    cross = cdist(a, b).mean()
    within_a = pdist(a).mean() if len(a) > 1 else 0.0
    within_b = pdist(b).mean() if len(b) > 1 else 0.0
    return float(2.0 * cross - within_a - within_b)


def nearest_sq_distance(a, b) -> float:
    """Mean squared distance from each point of ``a`` to its nearest point in ``b``."""
    return float(cdist(np.atleast_2d(a), np.atleast_2d(b), "sqeuclidean").min(axis=1).mean())


def metric_report(generated, reference) -> MetricReport:
    fd, jit = frechet_distance(generated, reference, return_jitter=True)
    return MetricReport(fd, energy_distance(generated, reference), len(generated), len(reference), jit)
