import numpy as np
import pytest
from hypothesis import given, strategies as st

from sfmlab.errors import ConfigError, DomainError
from sfmlab.interpolant import (GaussianFields, GaussianPairOracle, InterpolantConfig, gamma, gamma_dot,
                                interpolate, marginal_moments, oracle_log_density, oracle_score,
                                oracle_velocity, score_target, transport_velocity)

CFG = InterpolantConfig(a=0.1)


def test_config_validation():
    with pytest.raises(ConfigError):
        InterpolantConfig(a=0.0)
    with pytest.raises(ConfigError):
        InterpolantConfig(t_min=0.5)
    with pytest.raises(ConfigError):
        GaussianPairOracle(0.0, 1.0, 0.0, 1.0)


def test_gamma_examples():
    assert gamma(0.0, CFG) == 0.0
    assert gamma(1.0, CFG) == 0.0
    assert gamma(0.5, CFG) == pytest.approx(0.1, abs=1e-15)
    assert gamma(0.25, CFG) == pytest.approx(0.05, abs=1e-15)
    with pytest.raises(DomainError):
        gamma(1.01, CFG)
    with pytest.raises(DomainError):
        gamma(-0.1, CFG)


def test_gamma_dot_matches_finite_difference():
    for t in (0.1, 0.3, 0.77):
        fd = (gamma(t + 1e-6, CFG) - gamma(t - 1e-6, CFG)) / 2e-6
        assert gamma_dot(t, CFG) == pytest.approx(fd, rel=1e-7)


def test_custom_schedule_hook():
    cfg = InterpolantConfig(schedule=(lambda t: 0.2 * t * (1 - t), lambda t: 0.2 * (1 - 2 * t)))
    assert gamma(0.5, cfg) == pytest.approx(0.05)
    assert interpolate(0.0, 2.0, 0.5, 1.0, cfg) == pytest.approx(1.05)


def test_interpolate_examples():
    assert interpolate(0.0, 2.0, 0.5, 1.0, CFG) == pytest.approx(1.1, abs=1e-15)
    x0, x1, z = np.array([1.0, -2.0]), np.array([3.0, 4.0]), np.array([9.0, 9.0])
    assert np.array_equal(interpolate(x0, x1, 0.0, z, CFG), x0)
    assert np.array_equal(interpolate(x0, x1, 1.0, z, CFG), x1)
    with pytest.raises(DomainError):
        interpolate(x0, np.zeros(3), 0.5, z, CFG)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=5), st.floats(-1e3, 1e3))
def test_endpoint_preservation_property(vals, zval):
    x0 = np.array(vals)
    x1 = x0[::-1] * 2 + 1
    z = np.full_like(x0, zval)
    assert np.array_equal(interpolate(x0, x1, 0.0, z, CFG), x0)
    assert np.array_equal(interpolate(x0, x1, 1.0, z, CFG), x1)


def test_interpolate_per_row_times():
    x0, x1, z = np.zeros((3, 2)), np.ones((3, 2)), np.zeros((3, 2))
    t = np.array([0.0, 0.5, 1.0])
    assert np.allclose(interpolate(x0, x1, t, z, CFG), t[:, None] * np.ones((3, 2)))


def test_score_target_examples():
    assert score_target(0.0, 0.5, CFG) == 0.0
    assert score_target(1.0, 0.5, CFG) == pytest.approx(-10.0, abs=1e-12)
    assert score_target(2.0, 0.25, CFG) == pytest.approx(-40.0, abs=1e-12)
    with pytest.raises(DomainError):
        score_target(1.0, 0.01, CFG)
    with pytest.raises(DomainError):
        score_target(1.0, 0.99, CFG)


def test_score_target_is_gradient_of_bridge_log_density(nprng):
    # log N(x_t; (1-t)x0 + t x1, gamma^2) differentiated numerically in x_t
    x0, x1, z = nprng.normal(size=3), nprng.normal(size=3), nprng.normal(size=3)
    t = 0.37
    g = gamma(t, CFG)
    xt = interpolate(x0, x1, t, z, CFG)
    m = (1 - t) * x0 + t * x1
    logp = lambda x: -0.5 * np.sum((x - m) ** 2) / g**2
    h = 1e-6
    fd = np.array([(logp(xt + h * e) - logp(xt - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(score_target(z, t, CFG), fd, rtol=1e-6)


def test_marginal_law_of_interpolant():
    rng = np.random.default_rng(0)
    orc = GaussianPairOracle(np.array([0.5, -1.0]), np.array([2.0, 1.0]), 0.7, 0.3)
    n = 10**5
    for t in (0.1, 0.5, 0.9):
        x0 = orc.mu0 + np.sqrt(orc.var0) * rng.normal(size=(n, 2))
        x1 = orc.mu1 + np.sqrt(orc.var1) * rng.normal(size=(n, 2))
        xt = interpolate(x0, x1, t, rng.normal(size=(n, 2)), CFG)
        mean, var = marginal_moments(t, orc, CFG)
        assert np.all(np.abs(xt.mean(0) - mean) < 4 * np.sqrt(var / n))
        assert np.all(np.abs(xt.var(0, ddof=1) - var) < 4 * var * np.sqrt(2 / (n - 1)))


def test_oracle_velocity_examples():
    orc = GaussianPairOracle(0.0, 0.0, 1.0, 1.0)
    for t in (0.0, 0.3, 0.9):
        assert oracle_velocity(0.0, t, orc) == 0.0
    mu = 1.7
    deg = GaussianPairOracle(0.0, mu, 1e-14, 1e-14)
    for t in (0.0, 0.2, 0.5, 1.0):
        x_on_path = t * mu
        assert oracle_velocity(x_on_path, t, deg) == pytest.approx(mu, abs=1e-9)


def test_oracle_velocity_matches_rejection_sampling():
    # brute force: E[x1 - x0 | |x_t - x| < h] from 1e6 joint draws
    rng = np.random.default_rng(42)
    orc = GaussianPairOracle(0.3, -1.2, 0.8, 0.5)
    t, x, h = 0.3, 0.1, 0.01
    hits = []
    for _ in range(4):
        n = 10**6
        x0 = orc.mu0 + np.sqrt(orc.var0) * rng.normal(size=n)
        x1 = orc.mu1 + np.sqrt(orc.var1) * rng.normal(size=n)
        xt = interpolate(x0, x1, t, rng.normal(size=n), CFG)
        keep = np.abs(xt - x) < h
        hits.append((x1 - x0)[keep])
    v = np.concatenate(hits)
    se = v.std(ddof=1) / np.sqrt(v.size)
    assert v.size > 1000
    assert abs(v.mean() - oracle_velocity(x, t, orc, CFG)) < 3 * se


def test_oracle_score_examples_and_fd(nprng):
    orc = GaussianPairOracle(0.0, 0.0, 1.0, 1.0)
    assert oracle_score(1.3, 0.5, orc) == pytest.approx(-1.3 / 0.5)
    rnd = GaussianPairOracle(nprng.normal(size=3), nprng.normal(size=3), 0.6, 1.4)
    for t in (0.2, 0.65):
        mean, _ = marginal_moments(t, rnd, CFG)
        assert np.allclose(oracle_score(mean, t, rnd, CFG), 0.0)
        x = nprng.normal(size=3)
        h = 1e-5
        fd = np.array([(oracle_log_density(x + h * e, t, rnd, CFG) - oracle_log_density(x - h * e, t, rnd, CFG))
                       / (2 * h) for e in np.eye(3)])
        assert np.allclose(oracle_score(x, t, rnd, CFG), fd, atol=1e-6)


def test_transport_velocity_solves_continuity_equation():
    # d/dt p + d/dx (p v) = 0 for the 1-D Gaussian marginal path, checked numerically
    orc = GaussianPairOracle(0.4, 2.0, 1.0, 0.25)
    dens = lambda x, t: np.exp(oracle_log_density(np.array([x]), t, orc, CFG))
    vel = lambda x, t: float(transport_velocity(x, t, orc, CFG))
    h = 1e-5
    for t in (0.2, 0.5, 0.8):
        for x in (-0.5, 0.9, 1.6):
            dpdt = (dens(x, t + h) - dens(x, t - h)) / (2 * h)
            dflux = (dens(x + h, t) * vel(x + h, t) - dens(x - h, t) * vel(x - h, t)) / (2 * h)
            assert abs(dpdt + dflux) < 1e-6


def test_transport_equals_conditional_velocity_without_perturbation():
    orc = GaussianPairOracle(0.1, 1.0, 2.0, 0.5)
    assert transport_velocity(0.7, 0.4, orc) == oracle_velocity(0.7, 0.4, orc)
    f = GaussianFields(orc, CFG)
    assert f.velocity(np.array([[0.7]]), 0.4, None).shape == (1, 1)
