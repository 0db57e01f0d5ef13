"""Approximate posterior samplers over the (velocity, score) parameters.

A draw fully determines deterministic forwards of both networks.  Samplers
are immutable; all randomness comes from the stream passed to ``draw``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import ConfigError
from .nets import DropoutMask, FieldNet, forward, guided_velocity, sample_mask
from .numkit import RngStream
from .sample import Fields


class PosteriorError(RuntimeError):
    pass


@dataclass(frozen=True)
class PosteriorDraw:
    draw_id: int
    kind: str
    velocity_mask: DropoutMask | None = None
    score_mask: DropoutMask | None = None
    member: int | None = None


class NetFields:
    """Fields of a (velocity, score) net pair under fixed dropout masks.

    The same velocity mask is used for the conditional and the null branch of
    classifier-free guidance.
    """

    def __init__(self, velocity: FieldNet, score: FieldNet, alpha: float = 1.0,
                 velocity_mask: DropoutMask | None = None, score_mask: DropoutMask | None = None):
        self.vnet, self.snet, self.alpha = velocity, score, alpha
        self.vmask, self.smask = velocity_mask, score_mask

    def velocity(self, x, t, c):
        if self.alpha == 1:
            return forward(self.vnet, x, t, c, self.vmask)
        return guided_velocity(self.vnet, x, t, c, self.alpha, self.vmask)

    def score(self, x, t, c):
        return forward(self.snet, x, t, c, self.smask)


class ConstantFields:
    """Spatially constant velocity with zero score; handy synthetic member."""

    def __init__(self, velocity):
        self.v = np.asarray(velocity, dtype=float)

    def velocity(self, x, t, c):
        return np.broadcast_to(self.v, np.shape(x)).copy()

    def score(self, x, t, c):
        return np.zeros_like(x)


class PosteriorSampler(Protocol):
    kind: str

    def draw(self, rng: RngStream) -> PosteriorDraw: ...

    def fields(self, draw: PosteriorDraw, alpha: float = 1.0) -> Fields: ...


class MapSampler:
    """Point mass at the trained weights; ignores the stream."""

    kind = "map"

    def __init__(self, velocity: FieldNet | None, score: FieldNet | None):
        self.velocity, self.score = velocity, score

    def _check(self):
        if self.velocity is None or self.score is None:
            raise PosteriorError("sampler has no trained networks")

    def draw(self, rng: RngStream | None = None) -> PosteriorDraw:
        self._check()
        return PosteriorDraw(0, self.kind)

    def fields(self, draw: PosteriorDraw, alpha: float = 1.0) -> Fields:
        self._check()
        return NetFields(self.velocity, self.score, alpha)


class McDropoutSampler(MapSampler):
    """MC-Dropout: independent keep-masks for the velocity and score nets."""

    kind = "mc_dropout"

    def draw(self, rng: RngStream) -> PosteriorDraw:
        self._check()
        draw_id = rng.counter
        vmask = sample_mask(rng, self.velocity.config)
        smask = sample_mask(rng, self.score.config)
        return PosteriorDraw(draw_id, self.kind, vmask, smask)

    def fields(self, draw: PosteriorDraw, alpha: float = 1.0) -> Fields:
        self._check()
        return NetFields(self.velocity, self.score, alpha, draw.velocity_mask, draw.score_mask)


class FiniteEnsemble:
    """Uniform posterior over an explicit member list (ground-truth oracle)."""

    kind = "finite_ensemble"

    def __init__(self, members: Sequence[Fields]):
        if not members:
            raise PosteriorError("ensemble needs at least one member")
        self.members = list(members)

    def draw(self, rng: RngStream) -> PosteriorDraw:
        draw_id = rng.counter
        m = int(rng.integers(len(self.members))[0])
        return PosteriorDraw(draw_id, self.kind, member=m)

    def fields(self, draw: PosteriorDraw, alpha: float = 1.0) -> Fields:
        return self.members[draw.member]


def make_sampler(kind: str, velocity: FieldNet | None = None, score: FieldNet | None = None,
                 members: Sequence[Fields] | None = None) -> PosteriorSampler:
    if kind == "map":
        return MapSampler(velocity, score)
    if kind == "mc_dropout":
        return McDropoutSampler(velocity, score)
    if kind == "finite_ensemble":
        return FiniteEnsemble(members or [])
    if kind in ("swag", "laplace"):
        raise NotImplementedError(f"{kind} posteriors are an extension point; implement PosteriorSampler")
    raise ConfigError(f"unknown posterior kind {kind!r}")
