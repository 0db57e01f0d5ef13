"""Counter-based random streams on top of numpy's Philox4x64.

A stream is addressed by ``(seed, stream_id)``; the ``counter`` counts variates
already consumed.  Variate ``i`` of a stream always comes from the same raw
64-bit word(s), so any slice of the sequence can be regenerated without
replaying the prefix.  This is what keeps antithetic pairs and batched
trajectories reproducible independent of how work is scheduled.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_WORDS_PER_BLOCK = 4
# xor tweak of the stream id used for gaussian words
_GAUSS_LANE = 0x9E3779B97F4A7C15
_U53 = 2.0**-53


def _derive_id(parent: int, name: str | int) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(parent.to_bytes(8, "little"))
    h.update(str(name).encode())
    return int.from_bytes(h.digest(), "little")


def _shape_size(shape) -> tuple[tuple[int, ...], int]:
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    shape = tuple(int(s) for s in shape)
    n = int(np.prod(shape)) if shape else 1
    return shape, n


@dataclass
class RngStream:
    """A reproducible, splittable stream of random variates.

    Each uniform or gaussian variate advances ``counter`` by exactly one.
    """

    seed: int
    stream_id: int = 0
    counter: int = 0

    def __post_init__(self):
        self.seed = int(self.seed) & _MASK64
        self.stream_id = int(self.stream_id) & _MASK64
        if self.counter < 0:
            raise ValueError("counter must be nonnegative")

    def _raw(self, start: int, n: int, lane: int = 0) -> np.ndarray:
        if n == 0:
            return np.empty(0, dtype=np.uint64)
        b0 = start // _WORDS_PER_BLOCK
        b1 = -(-(start + n) // _WORDS_PER_BLOCK)
        key = self.seed | ((self.stream_id ^ lane) << 64)
        words = np.random.Philox(key=key, counter=b0).random_raw((b1 - b0) * _WORDS_PER_BLOCK)
        off = start - b0 * _WORDS_PER_BLOCK
        return words[off : off + n]

    @staticmethod
    def _to_unit(words: np.ndarray) -> np.ndarray:
        # open interval (0, 1): safe for log in Box-Muller
        return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _U53

    def uniform(self, shape=1) -> np.ndarray:
        shape, n = _shape_size(shape)
        u = self._to_unit(self._raw(self.counter, n))
        self.counter += n
        return u.reshape(shape)

    def gauss(self, shape=1) -> np.ndarray:
        """Standard normal draws (Box-Muller on word pairs).

        Gaussian variate i comes from word pair i // 2 of a separate key lane,
        so it never shares raw words with uniforms drawn from the same stream.
        """
        shape, n = _shape_size(shape)
        if n < 1:
            raise ValueError("need at least one draw")
        p0 = self.counter // 2
        p1 = -(-(self.counter + n) // 2)
        u = self._to_unit(self._raw(2 * p0, 2 * (p1 - p0), _GAUSS_LANE))
        r = np.sqrt(-2.0 * np.log(u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * (p1 - p0))
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        off = self.counter - 2 * p0
        self.counter += n
        return z[off : off + n].reshape(shape)

    def integers(self, high: int, shape=1) -> np.ndarray:
        """Uniform integers in ``[0, high)``."""
        if high < 1:
            raise ValueError("high must be >= 1")
        u = self.uniform(shape)
        return np.minimum((u * high).astype(np.int64), high - 1)

    def bernoulli(self, p: float, shape=1) -> np.ndarray:
        return self.uniform(shape) < p

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")

    def split(self, name: str | int) -> "RngStream":
        """Child stream with a fresh counter; depends only on (seed, stream_id, name)."""
        return RngStream(self.seed, _derive_id(self.stream_id, name), 0)

    def copy(self) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.counter)


def gauss(rng: RngStream, n) -> np.ndarray:
    return rng.gauss(n)


def root_stream(seed: int) -> RngStream:
    return RngStream(seed, 0, 0)
