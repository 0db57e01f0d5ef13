"""Nested Monte-Carlo uncertainty estimates for stochastic flow samplers.

For M posterior draws and K SDE terminals per draw:

* aleatoric  tr(A) = mean over draws of the within-draw variance trace
* epistemic  tr(E) = across-draw variance trace of the per-draw means
* corrected  tr(E) - tr(A)/K removes the residual Monte-Carlo noise that the
  finite-K means carry into tr(E)

Everything is accumulated per coordinate and summed, so no d x d matrix is
ever formed.  Anomaly scores are ``score_sign * trace`` (negated by default).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .numkit import RngStream
from .posterior import PosteriorSampler
from .sample import Fields, SdeConfig, SolveCounter, antithetic_paths, iid_paths, ode_solve, sde_solve

MODES = ("iid", "antithetic")


@dataclass(frozen=True)
class UqBudget:
    M: int
    K: int
    antithetic: bool = True

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError("budget M must be >= 1")
        if self.K < 2:
            raise ConfigError("budget K must be >= 2 for a within-draw variance")
        if self.antithetic and self.K % 2:
            raise ConfigError(f"antithetic mode needs even K, got K={self.K}")

    @property
    def J(self) -> int:
        return self.K // 2


@dataclass
class UqReport:
    aleatoric_trace: float | None
    epistemic_trace_raw: float | None
    epistemic_trace_corrected: float | None
    budget: UqBudget
    mode: str
    score_aleatoric: float | None = None
    score_epistemic: float | None = None

    @property
    def corrected_negative(self) -> bool:
        c = self.epistemic_trace_corrected
        return c is not None and c < 0


def per_draw_stats(samples) -> tuple[np.ndarray, np.ndarray]:
    """Mean and unbiased variance trace over the K axis (second to last).

    ``samples`` is (..., K, d); returns mean (..., d) and trace (...).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    K = x.shape[-2]
    if K < 2:
        raise ConfigError("need K >= 2 samples for a variance")
    mean = x.mean(axis=-2)
    dev = x - mean[..., None, :]
    trace = (dev * dev).sum(axis=(-2, -1)) / (K - 1)
    return mean, trace


def _decompose_arrays(means, traces, K):
    means = np.asarray(means, dtype=float)
    traces = np.asarray(traces, dtype=float)
    M = means.shape[0]
    ale = traces.mean(axis=0)
    if M < 2:
        return ale, None, None
    shifted = means - means[0]  # exact zeros for identical draws, less cancellation
    dev = shifted - shifted.mean(axis=0)
    epi = (dev * dev).sum(axis=-1).sum(axis=0) / (M - 1)
    return ale, epi, epi - ale / K


def decompose(means, traces, K: int, budget: UqBudget | None = None, mode: str = "iid",
              score_sign: float = -1.0) -> UqReport:
    """Aleatoric/epistemic split from per-draw stats of one input.

    ``means`` is (M, d), ``traces`` is (M,).  With M < 2 only the aleatoric
    part is defined and the epistemic fields are None.
    """
    means = np.asarray(means, dtype=float)
    if means.ndim == 1:
        means = means[:, None]
    ale, epi, corr = _decompose_arrays(means, traces, K)
    if budget is None:
        budget = UqBudget(means.shape[0], K, antithetic=(mode == "antithetic" and K % 2 == 0))
    return UqReport(
        float(ale),
        None if epi is None else float(epi),
        None if corr is None else float(corr),
        budget,
        mode,
        score_sign * float(ale),
        None if epi is None else score_sign * float(epi),
    )


def _as_batch(x0, c):
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    x0 = np.atleast_2d(x0)
    c = np.broadcast_to(np.asarray(c if c is not None else 0), (x0.shape[0],))
    return x0, c, single


def nested_terminals(x0, c, sampler: PosteriorSampler, budget: UqBudget, rng: RngStream,
                     cfg: SdeConfig, counter: SolveCounter | None = None) -> np.ndarray:
    """Terminal states (M, n, K, d) from M draws x K SDE solves per input.

    Antithetic budgets order each input's K terminals as (+, -) pairs.
    """
    x0, c, _ = _as_batch(x0, c)
    n, d = x0.shape
    K = budget.K
    draw_rng = rng.split("posterior")
    noise_rng = rng.split("sample")
    xs = np.repeat(x0, K, axis=0)
    cs = np.repeat(c, K)
    out = np.empty((budget.M, n, K, d))
    for m in range(budget.M):
        draw = sampler.draw(draw_rng)
        fields = sampler.fields(draw, cfg.guidance_alpha)
        r = noise_rng.split(m)
        if budget.antithetic:
            path = antithetic_paths(r, budget.J, cfg.steps, d, n=n)
        else:
            path = iid_paths(r, K, cfg.steps, d, n=n)
        traj = sde_solve(fields, xs, cs, path, cfg, counter=counter)
        out[m] = traj.terminal.reshape(n, K, d)
    return out


def draw_stats(terminals: np.ndarray, antithetic: bool) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw means and aleatoric traces from (M, n, K, d) terminals.

    Antithetic means average the pair means; the aleatoric trace always uses
    all raw terminals, pair correlation notwithstanding.
    """
    mean, trace = per_draw_stats(terminals)
    if antithetic:
        pairs = 0.5 * (terminals[..., 0::2, :] + terminals[..., 1::2, :])
        mean = pairs.mean(axis=-2)
    return mean, trace


def _nested(x0, c, sampler, budget, rng, cfg, counter, score_sign):
    x0b, cb, single = _as_batch(x0, c)
    term = nested_terminals(x0b, cb, sampler, budget, rng, cfg, counter)
    means, traces = draw_stats(term, budget.antithetic)
    mode = "antithetic" if budget.antithetic else "iid"
    reports = [decompose(means[:, i], traces[:, i], budget.K, budget, mode, score_sign)
               for i in range(x0b.shape[0])]
    return reports[0] if single else reports


def avuq(x0, c, sampler: PosteriorSampler, budget: UqBudget, rng: RngStream, cfg: SdeConfig,
         counter: SolveCounter | None = None, score_sign: float = -1.0):
    """Antithetic nested estimate; one report per input row (or one for a single input)."""
    if not budget.antithetic:
        raise ConfigError("avuq needs an antithetic budget")
    return _nested(x0, c, sampler, budget, rng, cfg, counter, score_sign)


def nested_iid(x0, c, sampler: PosteriorSampler, budget: UqBudget, rng: RngStream, cfg: SdeConfig,
               counter: SolveCounter | None = None, score_sign: float = -1.0):
    if budget.antithetic:
        budget = UqBudget(budget.M, budget.K, antithetic=False)
    return _nested(x0, c, sampler, budget, rng, cfg, counter, score_sign)


def map_aleatoric(x0, c, sampler: PosteriorSampler, K: int, rng: RngStream, cfg: SdeConfig,
                  counter: SolveCounter | None = None, score_sign: float = -1.0):
    """score_sign * mean per-coordinate variance over K SDE solves at the MAP weights."""
    if K < 2:
        raise ConfigError("MAP aleatoric score needs K >= 2")
    x0b, cb, single = _as_batch(x0, c)
    n, d = x0b.shape
    fields = sampler.fields(sampler.draw(rng.split("posterior")), cfg.guidance_alpha)
    path = iid_paths(rng.split("sample"), K, cfg.steps, d, n=n)
    traj = sde_solve(fields, np.repeat(x0b, K, axis=0), np.repeat(cb, K), path, cfg, counter=counter)
    _, trace = per_draw_stats(traj.terminal.reshape(n, K, d))
    scores = score_sign * trace / d
    return float(scores[0]) if single else scores


def mcd_dfm_epistemic(x0, c, sampler: PosteriorSampler, M: int, rng: RngStream, cfg: SdeConfig,
                      counter: SolveCounter | None = None, score_sign: float = -1.0):
    """score_sign * across-draw variance trace of M deterministic ODE terminals."""
    if M < 2:
        raise ConfigError("MCD-DFM epistemic score needs M >= 2")
    x0b, cb, single = _as_batch(x0, c)
    draw_rng = rng.split("posterior")
    terms = []
    for _ in range(M):
        fields = sampler.fields(sampler.draw(draw_rng), cfg.guidance_alpha)
        terms.append(ode_solve(fields, x0b, cb, cfg, counter=counter).terminal)
    _, trace = per_draw_stats(np.stack(terms, axis=1))
    scores = score_sign * trace
    return float(scores[0]) if single else scores


# ---------------------------------------------------------------- MAP bound

@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    slack: float
    holds: bool


def map_bound_check(V: Callable[[np.ndarray], np.ndarray], map_point, epsilon: float, L: float,
                    n_draws: int, rng: RngStream) -> BoundCheck:
    """Compare |E_q V - V(map)| with L * eps * sqrt(d) for q = N(map, eps^2 I).

    ``V`` maps an (n, d) array of parameter vectors to n values.  The check
    allows four standard errors of Monte-Carlo slack on the left side.
    """
    w0 = np.asarray(map_point, dtype=float).ravel()
    d = w0.size
    zeta = rng.gauss((n_draws, d))
    vals = np.asarray(V(w0 + epsilon * zeta), dtype=float)
    v0 = float(np.asarray(V(w0[None, :]), dtype=float).ravel()[0])
    lhs = abs(vals.mean() - v0)
    slack = 4.0 * vals.std(ddof=1) / np.sqrt(n_draws)
    rhs = L * epsilon * np.sqrt(d)
    return BoundCheck(float(lhs), float(rhs), float(slack), bool(lhs <= rhs + slack))
