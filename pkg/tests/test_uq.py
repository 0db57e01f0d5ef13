import tracemalloc

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sfmlab.errors import ConfigError
from sfmlab.interpolant import GaussianFields, GaussianPairOracle, InterpolantConfig
from sfmlab.nets import FieldNet, MlpConfig
from sfmlab.numkit import RngStream
from sfmlab.posterior import ConstantFields, FiniteEnsemble, MapSampler, PosteriorDraw
from sfmlab.sample import SdeConfig, SolveCounter, iid_paths, sde_solve
from sfmlab.uq import (UqBudget, _decompose_arrays, avuq, decompose, draw_stats, map_aleatoric, map_bound_check,
                       mcd_dfm_epistemic, nested_iid, nested_terminals, per_draw_stats)

# E||zeta|| for zeta ~ N(0, I_16): sqrt(2) Gamma(8.5) / Gamma(8), checked against
# scipy.stats.chi(16).mean() and a 1e6-draw brute-force average
CHI16_MEAN = 3.938025621887322


class CyclingEnsemble(FiniteEnsemble):
    """Deterministic member order (0, 1, 0, 1, ...) for hand-computed cases."""

    def __init__(self, members, order=None):
        super().__init__(members)
        self.order = order
        self.i = 0

    def draw(self, rng):
        m = self.order[self.i % len(self.order)] if self.order else self.i % len(self.members)
        self.i += 1
        return PosteriorDraw(self.i, self.kind, member=m)


def test_budget_validation():
    with pytest.raises(ConfigError):
        UqBudget(0, 4)
    with pytest.raises(ConfigError):
        UqBudget(2, 1)
    with pytest.raises(ConfigError):
        UqBudget(2, 3, antithetic=True)
    assert UqBudget(2, 3, antithetic=False).K == 3
    assert UqBudget(4, 6).J == 3


def test_per_draw_stats_examples():
    m, tr = per_draw_stats(np.ones((5, 3)))
    assert tr == 0.0 and np.array_equal(m, np.ones(3))
    m, tr = per_draw_stats(np.array([[0.0], [2.0]]))
    assert m[0] == 1.0 and tr == 2.0
    with pytest.raises(ConfigError):
        per_draw_stats(np.ones((1, 2)))
    z = RngStream(0).gauss((10**5, 2))
    assert abs(per_draw_stats(z)[1] - 2.0) < 0.05


def test_decompose_exact_identical_draws():
    means = np.tile([0.5, -0.2], (6, 1))
    r = decompose(means, np.full(6, 0.8), K=10**12)
    assert r.epistemic_trace_raw == 0.0
    assert abs(r.epistemic_trace_corrected) < 1e-9
    assert r.aleatoric_trace == pytest.approx(0.8)


def test_decompose_finite_ensemble_exact_stats():
    s2 = 0.49
    means = np.array([[-1.0], [1.0], [1.0], [-1.0]])
    r = decompose(means, np.full(4, s2), K=8)
    assert r.aleatoric_trace == pytest.approx(s2)
    assert r.epistemic_trace_raw == pytest.approx(4.0 / 3.0)  # (M-1) denominator on realized draws
    assert r.epistemic_trace_corrected == pytest.approx(4.0 / 3.0 - s2 / 8)
    assert r.score_aleatoric == -r.aleatoric_trace and r.score_epistemic == -r.epistemic_trace_raw
    pos = decompose(means, np.full(4, s2), K=8, score_sign=1.0)
    assert pos.score_epistemic == r.epistemic_trace_raw


def test_decompose_single_draw_has_no_epistemic():
    r = decompose(np.array([[1.0, 2.0]]), np.array([0.3]), K=4)
    assert r.epistemic_trace_raw is None and r.score_epistemic is None
    assert r.aleatoric_trace == 0.3 and not r.corrected_negative


def test_negative_corrected_is_reported_and_flagged():
    r = decompose(np.array([[0.0], [0.01]]), np.array([1.0, 1.0]), K=2)
    assert r.epistemic_trace_corrected < 0 and r.corrected_negative


def ensemble_replications(M, K, reps, s=1.0, seed=0):
    """Finite-ensemble terminals N(+-1, s^2): (reps, M, K) draws, vectorized."""
    rng = np.random.default_rng(seed)
    members = np.where(rng.random((reps, M)) < 0.5, -1.0, 1.0)
    x = members[:, :, None] + s * rng.normal(size=(reps, M, K))
    mean, trace = per_draw_stats(x[..., None])
    return members, x, mean, trace


def test_mc_noise_law_k4():
    # E[raw E] = 1 + 1/K and E[corrected E] = 1 over 1000 replications
    M, K = 64, 4
    _, _, mean, trace = ensemble_replications(M, K, 1000)
    ale, raw, corr = zip(*[_decompose_arrays(mean[i], trace[i], K) for i in range(1000)])
    raw, corr, ale = map(np.asarray, (raw, corr, ale))
    se = lambda v: v.std(ddof=1) / np.sqrt(v.size)
    assert abs(raw.mean() - (1 + 1 / K)) < 4 * se(raw)
    assert abs(corr.mean() - 1.0) < 4 * se(corr)
    assert abs(ale.mean() - 1.0) < 4 * se(ale)


def test_total_variance_identity():
    # pooled variance of all M*K samples ~ tr(A) + population epistemic (= 1)
    M, K = 64, 8
    _, x, mean, trace = ensemble_replications(M, K, 500, s=1.0, seed=1)
    pooled = x.reshape(500, -1).var(axis=1, ddof=1)
    ale = trace.mean(axis=1)
    gap = pooled - (ale + 1.0)
    assert abs(gap.mean()) < 4 * gap.std(ddof=1) / np.sqrt(500)


@given(st.floats(0.1, 10.0), st.integers(0, 1000))
def test_scale_equivariance(alpha, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4, 2))
    m, t = per_draw_stats(x)
    ma, ta = per_draw_stats(alpha * x)
    r, ra = decompose(m, t, 4), decompose(ma, ta, 4)
    a2 = alpha**2
    assert np.allclose(ta, a2 * t, rtol=1e-12)
    for f in ("aleatoric_trace", "epistemic_trace_raw", "epistemic_trace_corrected", "score_aleatoric",
              "score_epistemic"):
        assert getattr(ra, f) == pytest.approx(a2 * getattr(r, f), rel=1e-10, abs=1e-14)


@given(st.permutations(list(range(6))))
def test_exchangeable_in_draw_order(perm):
    rng = np.random.default_rng(3)
    m, t = rng.normal(size=(6, 3)), rng.random(6)
    a, b = decompose(m, t, 4), decompose(m[list(perm)], t[list(perm)], 4)
    assert a.aleatoric_trace == pytest.approx(b.aleatoric_trace, rel=1e-12)
    assert a.epistemic_trace_raw == pytest.approx(b.epistemic_trace_raw, rel=1e-12)


def test_no_dxd_allocation_large_d():
    d = 20000  # a d x d float64 matrix would be 3.2 GB
    x = RngStream(0).gauss((4, 4, d))
    tracemalloc.start()
    m, t = per_draw_stats(x)
    decompose(m, t, 4)
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    assert peak < 20 * x.nbytes


ORACLE = GaussianPairOracle(0.0, 2.0, 1.0, 0.25)
ICFG = InterpolantConfig()


def test_avuq_deterministic_pipeline_is_zero():
    cfg = MlpConfig(2, hidden_widths=(8,), condition_count=2, dropout_rate=0.2)
    v, s = FieldNet.init(cfg, "velocity", RngStream(0)), FieldNet.init(cfg, "score", RngStream(1))
    r = avuq(np.zeros(2), 0, MapSampler(v, s), UqBudget(3, 4), RngStream(2), SdeConfig(steps=10, sigma_max=0.0))
    assert r.aleatoric_trace == 0.0 and r.epistemic_trace_raw == 0.0


def test_avuq_zero_drift_pairs_cancel():
    ens = FiniteEnsemble([ConstantFields([0.0, 0.0])])
    x0 = np.array([0.4, -0.3])
    for K in (2, 6):
        terms = nested_terminals(x0, None, ens, UqBudget(3, K), RngStream(K), SdeConfig(steps=20, sigma_max=0.8))
        mean, trace = draw_stats(terms, antithetic=True)
        assert np.allclose(mean, x0, rtol=0, atol=1e-15)
        assert np.all(trace > 0)
        r = avuq(x0, None, ens, UqBudget(3, K), RngStream(K), SdeConfig(steps=20, sigma_max=0.8))
        assert r.epistemic_trace_raw < 1e-28


def test_avuq_requires_antithetic_budget():
    ens = FiniteEnsemble([ConstantFields([0.0])])
    with pytest.raises(ConfigError):
        avuq(np.zeros(1), None, ens, UqBudget(2, 3, antithetic=False), RngStream(0), SdeConfig(steps=2))


def test_nested_solve_count_and_batch_reports():
    ens = FiniteEnsemble([GaussianFields(ORACLE, ICFG)])
    counter = SolveCounter()
    x0 = np.zeros((5, 1))
    reps = nested_iid(x0, None, ens, UqBudget(3, 4, antithetic=False), RngStream(0), SdeConfig(steps=10), counter)
    assert len(reps) == 5 and counter.sde == 5 * 3 * 4
    assert all(r.mode == "iid" for r in reps)


def test_antithetic_mean_has_lower_variance():
    fields = GaussianFields(ORACLE, ICFG)
    ens = FiniteEnsemble([fields])
    cfg = SdeConfig(steps=50, sigma_max=0.5)
    x0 = np.zeros((300, 1))  # 300 replications as a batch of identical inputs
    ta = nested_terminals(x0, None, ens, UqBudget(1, 4), RngStream(1), cfg)
    ti = nested_terminals(x0, None, ens, UqBudget(1, 4, antithetic=False), RngStream(2), cfg)
    ma, _ = draw_stats(ta, True)
    mi, _ = draw_stats(ti, False)
    assert ma[0, :, 0].var(ddof=1) / mi[0, :, 0].var(ddof=1) < 0.9


def test_map_aleatoric_examples():
    cfg = MlpConfig(2, hidden_widths=(8,), condition_count=2)
    v, s = FieldNet.init(cfg, "velocity", RngStream(0)), FieldNet.init(cfg, "score", RngStream(1))
    mp = MapSampler(v, s)
    assert map_aleatoric(np.zeros(2), 0, mp, 4, RngStream(2), SdeConfig(steps=5, sigma_max=0.0)) == 0.0
    with pytest.raises(ConfigError):
        map_aleatoric(np.zeros(2), 0, mp, 1, RngStream(2), SdeConfig(steps=5))
    # identical to -trace/d computed from the same terminals
    sde = SdeConfig(steps=10, sigma_max=0.5)
    rng = RngStream(3)
    score = map_aleatoric(np.zeros(2), 0, mp, 6, rng, sde)
    path = iid_paths(rng.split("sample"), 6, 10, 2, n=1)
    term = sde_solve(mp.fields(mp.draw()), np.zeros((6, 2)), np.zeros(6, int), path, sde).terminal
    assert score == -per_draw_stats(term)[1] / 2
    assert -per_draw_stats(np.array([[0.0], [2.0]]))[1] / 1 == -2.0


def test_mcd_dfm_examples():
    sde = SdeConfig(steps=7)
    ens = CyclingEnsemble([ConstantFields([0.0]), ConstantFields([1.0])])
    assert mcd_dfm_epistemic(np.zeros(1), None, ens, 2, RngStream(0), sde) == pytest.approx(-0.5)
    counter = SolveCounter()
    single = FiniteEnsemble([ConstantFields([0.3])])
    assert mcd_dfm_epistemic(np.zeros(1), None, single, 4, RngStream(0), sde, counter) == 0.0
    assert counter.ode == 4 and counter.sde == 0
    three = [ConstantFields([0.0]), ConstantFields([1.0]), ConstantFields([5.0])]
    a = mcd_dfm_epistemic(np.zeros(1), None, CyclingEnsemble(three, [0, 1, 2]), 3, RngStream(0), sde)
    b = mcd_dfm_epistemic(np.zeros(1), None, CyclingEnsemble(three, [2, 0, 1]), 3, RngStream(0), sde)
    assert a == pytest.approx(b, rel=1e-14)
    with pytest.raises(ConfigError):
        mcd_dfm_epistemic(np.zeros(1), None, single, 1, RngStream(0), sde)


def test_bound_check_examples():
    w0 = np.zeros(16)
    const = map_bound_check(lambda w: np.full(len(w), 3.0), w0, 0.1, 1.0, 1000, RngStream(0))
    assert const.lhs == 0.0 and const.holds
    L = 2.0
    norm = map_bound_check(lambda w: L * np.linalg.norm(w - w0, axis=1), w0, 0.1, L, 20000, RngStream(1))
    assert norm.holds and norm.rhs == pytest.approx(L * 0.1 * 4)
    assert abs(norm.lhs - L * 0.1 * CHI16_MEAN) < 4 * norm.slack / 4
    g = np.ones(16) * L / 4
    lin = map_bound_check(lambda w: w @ g, w0, 0.1, L, 20000, RngStream(2))
    assert lin.holds and lin.lhs < 0.05 * lin.rhs


def test_antithetic_reduction_on_nonlinear_fields():
    # a random MLP field makes pair means non-degenerate, unlike the linear oracle
    cfg = MlpConfig(1, hidden_widths=(16,), condition_count=1, dropout_rate=0.0, activation="tanh")
    v = FieldNet.init(cfg, "velocity", RngStream(5)).with_weights(3 * FieldNet.init(cfg, "velocity",
                                                                                     RngStream(5)).weights)
    s = FieldNet.init(cfg, "score", RngStream(6))
    mp = MapSampler(v, s)
    sde = SdeConfig(steps=40, sigma_max=1.0)
    x0 = np.full((400, 1), 0.2)
    ta = nested_terminals(x0, 0, mp, UqBudget(1, 4), RngStream(1), sde)
    ti = nested_terminals(x0, 0, mp, UqBudget(1, 4, antithetic=False), RngStream(2), sde)
    ratio = draw_stats(ta, True)[0][0, :, 0].var(ddof=1) / draw_stats(ti, False)[0][0, :, 0].var(ddof=1)
    assert 1e-6 < ratio < 0.9  # linear fields would give ~1e-29
