"""Synthetic distribution-to-distribution datasets and shift scenarios.

Source: standard normal in d dimensions.  Target for condition ``c``: a 2-D
shape (Gaussian mixture, ring, moons or single Gaussian) rotated by
``c * angle_step`` in the first two coordinates; extra coordinates are small
Gaussian noise.  Pairs are drawn from the product measure (no OT pairing).
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .numkit import RngStream

TARGET_FAMILIES = ("mixture", "ring", "moons", "gaussian")
SHIFT_KINDS = ("none", "intensity", "rotated_source", "unseen_condition")
SCENARIOS = ("intensity", "rotated_source", "unseen_condition", "unseen_intensity")

Sampler = Callable[[RngStream, int], np.ndarray]


@dataclass(frozen=True)
class DatasetSpec:
    d: int = 2
    n_conditions: int = 5
    withheld: tuple[int, ...] = (2,)
    source: str = "gaussian"
    target: str = "mixture"
    angle_step: float = 2 * np.pi / 15
    radius: float = 1.5
    component_std: float = 0.3
    n_components: int = 3
    n_train: int = 2000
    n_eval: int = 500
    n_holdout: int = 500
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "withheld", tuple(int(c) for c in self.withheld))
        if self.d < 2:
            raise ConfigError("dataset.d must be >= 2")
        if self.source != "gaussian":
            raise ConfigError(f"unknown source family {self.source!r}")
        if self.target not in TARGET_FAMILIES:
            raise ConfigError(f"unknown target family {self.target!r}")
        if self.n_train < 1:
            raise ConfigError("dataset.n_train must be >= 1")
        if any(c < 0 or c >= self.n_conditions for c in self.withheld):
            raise ConfigError("withheld condition out of range")
        if len(self.train_conditions) == 0:
            raise ConfigError("every condition is withheld")

    @property
    def train_conditions(self) -> tuple[int, ...]:
        return tuple(c for c in range(self.n_conditions) if c not in self.withheld)

    @property
    def null_id(self) -> int:
        return self.n_conditions

    @property
    def condition_count(self) -> int:
        return self.n_conditions + 1

    def condition_features(self) -> np.ndarray:
        """(cos, sin) of each condition's rotation; the null row (last) is zero."""
        ang = np.arange(self.n_conditions) * self.angle_step
        return np.vstack([np.column_stack([np.cos(ang), np.sin(ang)]), [0.0, 0.0]])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["withheld"] = list(self.withheld)
        return {k: v for k, v in d.items() if v is not None}


@dataclass(frozen=True)
class ShiftSpec:
    kind: str = "none"
    severity: float = 0.0

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise ConfigError(f"unknown shift kind {self.kind!r}")
        if self.severity < 0:
            raise ConfigError("shift severity must be >= 0")


@dataclass
class Dataset:
    spec: DatasetSpec
    x0: np.ndarray
    x1: np.ndarray
    c: np.ndarray
    eval_source: np.ndarray
    holdout: dict[int, np.ndarray] = field(default_factory=dict)


def _rotate2(x: np.ndarray, angle: float) -> np.ndarray:
    out = x.copy()
    ca, sa = np.cos(angle), np.sin(angle)
    out[:, 0] = ca * x[:, 0] - sa * x[:, 1]
    out[:, 1] = sa * x[:, 0] + ca * x[:, 1]
    return out


def source_sampler(spec: DatasetSpec) -> Sampler:
    return lambda rng, n: rng.gauss((n, spec.d))


def target_sampler(spec: DatasetSpec, c: int) -> Sampler:
    if not 0 <= c < spec.n_conditions:
        raise ConfigError(f"unknown condition {c}")
    angle = c * spec.angle_step

    def sample(rng: RngStream, n: int) -> np.ndarray:
        noise = spec.component_std * rng.gauss((n, spec.d))
        if spec.target == "mixture":
            k = rng.integers(spec.n_components, n)
            phi = 2 * np.pi * k / spec.n_components
            base = spec.radius * np.column_stack([np.cos(phi), np.sin(phi)])
        elif spec.target == "ring":
            phi = 2 * np.pi * rng.uniform(n)
            base = np.column_stack([np.cos(phi), np.sin(phi)]) + [0.75, 0.0]
            noise = 0.3 * noise
        elif spec.target == "moons":
            u = np.pi * rng.uniform(n)
            upper = rng.bernoulli(0.5, n)
            base = np.where(upper[:, None],
                            np.column_stack([np.cos(u), np.sin(u)]),
                            np.column_stack([1 - np.cos(u), 0.5 - np.sin(u)])) - [0.5, 0.25]
            noise = 0.3 * noise
        else:
            base = np.tile([spec.radius, 0.0], (n, 1))
        x = noise
        x[:, :2] += base
        return _rotate2(x, angle)

    return sample


def apply_shift(sampler: Sampler, shift: ShiftSpec) -> Sampler:
    """Wrap a source sampler with a distribution shift; severity 0 is the identity."""
    s = shift.severity
    if shift.kind in ("none", "unseen_condition") or s == 0:
        return sampler
    if shift.kind == "intensity":
        return lambda rng, n: (1 + s) * sampler(rng, n) + s
    return lambda rng, n: _rotate2(sampler(rng, n), s * np.pi)


def shift_points(x: np.ndarray, shift: ShiftSpec) -> np.ndarray:
    """The same map as ``apply_shift`` applied to given points."""
    return apply_shift(lambda rng, n: np.asarray(x, float), shift)(None, len(x))


def make_dataset(spec: DatasetSpec) -> Dataset:
    rng = RngStream(spec.seed).split("data")
    src = source_sampler(spec)
    x0 = src(rng.split("train_source"), spec.n_train)
    conds = np.asarray(spec.train_conditions)
    c = conds[rng.split("train_cond").integers(len(conds), spec.n_train)]
    x1 = np.empty_like(x0)
    tgt_rng = rng.split("train_target")
    for cc in conds:
        idx = np.flatnonzero(c == cc)
        if idx.size:
            x1[idx] = target_sampler(spec, int(cc))(tgt_rng.split(int(cc)), idx.size)
    eval_source = src(rng.split("eval_source"), spec.n_eval)
    holdout = {cc: target_sampler(spec, cc)(rng.split(("holdout", cc)), spec.n_holdout)
               for cc in range(spec.n_conditions)}
    return Dataset(spec, x0, x1, c, eval_source, holdout)


# ---------------------------------------------------------------- scenarios

@dataclass
class Pool:
    x0: np.ndarray
    c: np.ndarray
    provenance: np.ndarray


def scenario_shift(kind: str, severity: float) -> ShiftSpec:
    """Source shift of a scenario; ``unseen_intensity`` combines a withheld
    condition with an intensity shift."""
    if kind not in SCENARIOS:
        raise ConfigError(f"unknown scenario {kind!r}; choose from {SCENARIOS}")
    shift_kind = {"intensity": "intensity", "unseen_intensity": "intensity",
                  "rotated_source": "rotated_source", "unseen_condition": "unseen_condition"}[kind]
    return ShiftSpec(shift_kind, severity)


def scenario_conditions(spec: DatasetSpec, kind: str) -> tuple[int, ...]:
    if kind in ("unseen_condition", "unseen_intensity"):
        if not spec.withheld:
            raise ConfigError("scenario needs a withheld condition")
        return spec.withheld
    return spec.train_conditions


def scenario_inputs(dataset: Dataset, kind: str, severity: float, n: int, rng: RngStream):
    """Shifted inputs (x0, c) for one scenario, conditions drawn uniformly."""
    spec = dataset.spec
    shift = scenario_shift(kind, severity)
    conds = np.asarray(scenario_conditions(spec, kind))
    x0 = apply_shift(source_sampler(spec), shift)(rng.split("x0"), n)
    c = conds[rng.split("c").integers(len(conds), n)]
    return x0, c


def detection_pool(dataset: Dataset, kind: str, severity: float, n_id: int, n_ood: int,
                   rng: RngStream) -> Pool:
    spec = dataset.spec
    src = source_sampler(spec)
    x_id = src(rng.split("id_x0"), n_id)
    conds = np.asarray(spec.train_conditions)
    c_id = conds[rng.split("id_c").integers(len(conds), n_id)]
    x_ood, c_ood = scenario_inputs(dataset, kind, severity, n_ood, rng.split("ood"))
    prov = np.array(["ID"] * n_id + ["OOD"] * n_ood)
    return Pool(np.vstack([x_id, x_ood]), np.concatenate([c_id, c_ood]), prov)


# ---------------------------------------------------------------- CSV

def save_dataset_csv(path, dataset: Dataset):
    d = dataset.spec.d
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["split", "condition"] + [f"x{j}" for j in range(d)])
        for x, c in zip(dataset.x0, dataset.c):
            w.writerow(["source", int(c)] + [repr(float(v)) for v in x])
        for x, c in zip(dataset.x1, dataset.c):
            w.writerow(["target", int(c)] + [repr(float(v)) for v in x])
        for x in dataset.eval_source:
            w.writerow(["eval_source", -1] + [repr(float(v)) for v in x])
        for cc, pts in dataset.holdout.items():
            for x in pts:
                w.writerow(["holdout", int(cc)] + [repr(float(v)) for v in x])


def load_dataset_csv(path, spec: DatasetSpec) -> Dataset:
    rows: dict[str, list] = {"source": [], "target": [], "eval_source": [], "holdout": []}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header[:2] != ["split", "condition"] or len(header) - 2 != spec.d:
            raise ConfigError(f"{path}: header does not match a {spec.d}-d dataset")
        for row in reader:
            if row[0] not in rows:
                raise ConfigError(f"{path}: unknown split {row[0]!r}")
            rows[row[0]].append((int(row[1]), [float(v) for v in row[2:]]))
    if not rows["source"] or len(rows["source"]) != len(rows["target"]):
        raise ConfigError(f"{path}: needs equally many nonzero source and target rows")
    x0 = np.array([r[1] for r in rows["source"]])
    x1 = np.array([r[1] for r in rows["target"]])
    c = np.array([r[0] for r in rows["source"]])
    ev = np.array([r[1] for r in rows["eval_source"]]).reshape(-1, spec.d)
    holdout: dict[int, list] = {}
    for cc, x in rows["holdout"]:
        holdout.setdefault(cc, []).append(x)
    return Dataset(spec, x0, x1, c, ev, {k: np.array(v) for k, v in holdout.items()})
