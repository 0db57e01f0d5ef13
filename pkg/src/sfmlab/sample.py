"""Euler / Euler-Maruyama integration of learned (or oracle) fields.

Fields are any object with ``velocity(x, t, c)`` and ``score(x, t, c)``
returning arrays shaped like ``x`` (batch, d).  The stochastic sampler uses

    x <- x + (v + k * 0.5 * sigma_t^2 * s) dt + sigma_t sqrt(dt) * sign * eps

where ``k`` is +1 for the marginal-preserving forward SDE, 0 for naive noise
injection and -1 for the reverse-time sign.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np

from .errors import ConfigError, DomainError, IntegrationError
from .numkit import RngStream

CORRECTIONS = {"marginal": 1.0, "none": 0.0, "reverse": -1.0}


class Fields(Protocol):
    def velocity(self, x: np.ndarray, t: float, c) -> np.ndarray: ...

    def score(self, x: np.ndarray, t: float, c) -> np.ndarray: ...


@dataclass(frozen=True)
class SdeConfig:
    steps: int = 100
    sigma_max: float = 0.5
    sigma_shape: str = "sin"
    guidance_alpha: float = 1.0
    correction: str = "marginal"

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("sde.steps must be >= 1")
        if self.sigma_max < 0:
            raise ConfigError("sde.sigma_max must be >= 0")
        if self.sigma_shape not in ("sin", "constant"):
            raise ConfigError(f"unknown sigma_shape {self.sigma_shape!r}")
        if self.guidance_alpha < 1:
            raise ConfigError("sde.guidance_alpha must be >= 1")
        if self.correction not in CORRECTIONS:
            raise ConfigError(f"sde.correction must be one of {sorted(CORRECTIONS)}")


@dataclass
class NoisePath:
    """Driving increments for a batch of trajectories.

    ``eps`` is (n, steps, d); ``sign`` is (n,) with entries +-1.
    """

    eps: np.ndarray
    sign: np.ndarray

    def __post_init__(self):
        self.eps = np.asarray(self.eps, dtype=float)
        if self.eps.ndim == 2:
            self.eps = self.eps[None]
        self.sign = np.broadcast_to(np.asarray(self.sign, dtype=float), (self.eps.shape[0],)).copy()
        if not np.all(np.abs(self.sign) == 1):
            raise ConfigError("noise sign must be +1 or -1")

    def __len__(self):
        return self.eps.shape[0]

    @property
    def steps(self) -> int:
        return self.eps.shape[1]

    def signed(self) -> np.ndarray:
        return self.eps * self.sign[:, None, None]


@dataclass
class Trajectory:
    terminal: np.ndarray
    states: np.ndarray | None = None  # (saved, n, d)
    times: np.ndarray | None = None


@dataclass
class SolveCounter:
    """Counts single-trajectory solves (a batch of n counts n)."""

    ode: int = 0
    sde: int = 0
    by_tag: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.ode + self.sde

    def add(self, kind: str, n: int, tag: str | None = None):
        setattr(self, kind, getattr(self, kind) + n)
        if tag is not None:
            self.by_tag[tag] = self.by_tag.get(tag, 0) + n


def sigma(t, cfg: SdeConfig):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > 1):
        raise DomainError(f"t must lie in [0, 1], got {t}")
    if cfg.sigma_shape == "constant":
        return cfg.sigma_max * np.ones_like(t_arr)
    return cfg.sigma_max * np.sin(np.pi * np.minimum(t_arr, 1 - t_arr))


def _record_steps(record, steps: int) -> list[int]:
    if record is True:
        return list(range(steps + 1))
    if not record:
        return []
    idx = sorted(set(int(k) for k in record))
    if idx and (idx[0] < 0 or idx[-1] > steps):
        raise ConfigError("record steps out of range")
    return idx


def _batch(x0) -> tuple[np.ndarray, bool]:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        return x0[None, :].copy(), True
    return x0.copy(), False


def _finish(x, saved, save_idx, steps, single) -> Trajectory:
    states = np.stack(saved) if saved else None
    times = np.asarray(save_idx, dtype=float) / steps if saved else None
    if single:
        return Trajectory(x[0], None if states is None else states[:, 0], times)
    return Trajectory(x, states, times)


def ode_solve(fields: Fields, x0, c, cfg: SdeConfig, record: bool | Iterable[int] = False,
              counter: SolveCounter | None = None) -> Trajectory:
    """Explicit Euler on the uniform grid t_k = k / steps."""
    x, single = _batch(x0)
    n = cfg.steps
    dt = 1.0 / n
    save_idx = _record_steps(record, n)
    saved = [x.copy()] if 0 in save_idx else []
    for k in range(n):
        x = x + fields.velocity(x, k * dt, c) * dt
        if not np.all(np.isfinite(x)):
            raise IntegrationError(k)
        if k + 1 in save_idx:
            saved.append(x.copy())
    if counter is not None:
        counter.add("ode", x.shape[0])
    return _finish(x, saved, save_idx, n, single)


def sde_solve(fields: Fields, x0, c, path: NoisePath, cfg: SdeConfig,
              record: bool | Iterable[int] = False, counter: SolveCounter | None = None) -> Trajectory:
    """Euler-Maruyama driven by a fixed noise path; bit-deterministic given the path."""
    x, single = _batch(x0)
    n = cfg.steps
    if path.steps != n:
        raise ConfigError(f"noise path has {path.steps} steps, config has {n}")
    if len(path) != x.shape[0]:
        if x.shape[0] == 1:
            x = np.repeat(x, len(path), axis=0)
            single = False
        else:
            raise ConfigError(f"{len(path)} noise paths for {x.shape[0]} trajectories")
    dt = 1.0 / n
    k_corr = CORRECTIONS[cfg.correction]
    noise = path.signed()
    save_idx = _record_steps(record, n)
    saved = [x.copy()] if 0 in save_idx else []
    sqdt = np.sqrt(dt)
    for k in range(n):
        t = k * dt
        s_t = float(sigma(t, cfg))
        drift = fields.velocity(x, t, c)
        if s_t > 0 and k_corr != 0:
            drift = drift + (k_corr * 0.5 * s_t * s_t) * fields.score(x, t, c)
        x = x + drift * dt
        if s_t > 0:
            x = x + (s_t * sqdt) * noise[:, k, :]
        if not np.all(np.isfinite(x)):
            raise IntegrationError(k)
        if k + 1 in save_idx:
            saved.append(x.copy())
    if counter is not None:
        counter.add("sde", x.shape[0])
    return _finish(x, saved, save_idx, n, single and len(path) == 1)


def iid_paths(rng: RngStream, K: int, steps: int, d: int, n: int | None = None) -> NoisePath:
    shape = (K, steps, d) if n is None else (n * K, steps, d)
    return NoisePath(rng.gauss(shape), 1.0)


def antithetic_paths(rng: RngStream, J: int, steps: int, d: int, n: int | None = None) -> NoisePath:
    """2J paths ordered (+eps_1, -eps_1, +eps_2, -eps_2, ...); per input when ``n`` is given.

    The sign flips the whole increment path, not individual steps.
    """
    if J < 1:
        raise ConfigError("need at least one antithetic pair")
    m = J if n is None else n * J
    eps = rng.gauss((m, steps, d))
    eps2 = np.repeat(eps, 2, axis=0)
    sign = np.tile([1.0, -1.0], m)
    return NoisePath(eps2, sign)


class NaiveFields:
    """Wrap fields so the score is ignored (for counterexample runs)."""

    def __init__(self, inner: Fields):
        self.inner = inner

    def velocity(self, x, t, c):
        return self.inner.velocity(x, t, c)

    def score(self, x, t, c):
        return np.zeros_like(x)


def write_trajectory_csv(path, traj: Trajectory, index: int = 0):
    """Dump one recorded trajectory as ``step,t,x0,...``."""
    if traj.states is None:
        raise ConfigError("trajectory was not recorded")
    states = traj.states if traj.states.ndim == 2 else traj.states[:, index, :]
    d = states.shape[1]
    steps = len(traj.times) - 1
    with open(path, "w") as f:
        f.write(",".join(["step", "t"] + [f"x{j}" for j in range(d)]) + "\n")
        for k, (t, row) in enumerate(zip(traj.times, states)):
            f.write(",".join([str(k), repr(float(t))] + [repr(float(v)) for v in row]) + "\n")
    return steps
