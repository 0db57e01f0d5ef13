"""Unreliable-generation labels, the threshold rule, and ranking metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError

ID, OOD = "ID", "OOD"
FILTER_MODES = ("none", "mean", "half_sigma")


@dataclass(frozen=True)
class FilterPolicy:
    mode: str = "half_sigma"

    def __post_init__(self):
        if self.mode not in FILTER_MODES:
            raise ConfigError(f"filter mode must be one of {FILTER_MODES}")

    @property
    def width(self) -> float:
        return 0.5 if self.mode == "half_sigma" else 0.0


@dataclass
class FilterResult:
    keep: np.ndarray  # indices into the pool
    labels: np.ndarray  # label per kept index
    mu: float
    sigma: float
    degenerate: bool


def filter_pool(errors, provenance, policy: FilterPolicy) -> FilterResult:
    """Drop ambiguous pool members; statistics come from the full pool.

    ``half_sigma`` removes ID with error > mu - 0.5 sigma and OOD with error
    < mu + 0.5 sigma (population sigma); ``mean`` uses mu for both cuts.
    """
    errors = np.asarray(errors, dtype=float)
    prov = np.asarray(provenance)
    if errors.size == 0:
        raise ConfigError("empty pool")
    if errors.shape != prov.shape:
        raise ConfigError("errors and provenance differ in length")
    bad = set(np.unique(prov)) - {ID, OOD}
    if bad:
        raise ConfigError(f"unknown provenance labels {sorted(bad)}")
    mu, sd = float(errors.mean()), float(errors.std(ddof=0))
    if policy.mode == "none":
        keep = np.arange(errors.size)
    else:
        w = policy.width
        drop = ((prov == ID) & (errors > mu - w * sd)) | ((prov == OOD) & (errors < mu + w * sd))
        keep = np.flatnonzero(~drop)
    labels = prov[keep]
    degenerate = not (np.any(labels == ID) and np.any(labels == OOD))
    return FilterResult(keep, labels, mu, sd, degenerate)


def decide(score: float, tau: float) -> str:
    if not np.isfinite(score):
        raise ConfigError("score must be finite")
    return OOD if score > tau else ID


def _is_ood(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype.kind in ("U", "S", "O"):
        return labels == OOD
    return labels.astype(bool)


def auroc(scores, labels) -> float:
    """P(random OOD outscores random ID), ties counted one half."""
    s = np.asarray(scores, dtype=float)
    pos = _is_ood(labels)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("AUROC needs both ID and OOD examples")
    ranks = rankdata(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(scores, labels) -> float:
    """Average precision with OOD as positive: sum over thresholds of dRecall * precision."""
    s = np.asarray(scores, dtype=float)
    pos = _is_ood(labels)
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise ConfigError("AUPR needs at least one OOD example")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, p_sorted = s[order], pos[order]
    # last index of each group of tied scores
    ends = np.r_[np.flatnonzero(np.diff(s_sorted)), s.size - 1]
    tp = np.cumsum(p_sorted)[ends]
    predicted = ends + 1
    precision = tp / predicted
    recall = tp / n_pos
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * precision))


def seed_summary(values) -> tuple[float, float | None]:
    """Mean and standard error (sample std / sqrt(n)); SE is None for one value."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ConfigError("no values")
    if v.size == 1:
        return float(v[0]), None
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))
