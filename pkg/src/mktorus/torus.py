"""Discretized torus arithmetic on 32-bit words.

A torus element ``t`` in ``[0, 1)`` is stored as the unsigned integer
``round(t * 2**32) mod 2**32``. Addition, subtraction and negation of
``numpy.uint32`` values wrap modulo ``2**32`` and therefore agree exactly
with addition on the torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

TORUS_BITS = 32
MODULUS = 1 << TORUS_BITS
MASK = MODULUS - 1

Torus32 = np.uint32

EIGHTH = 1 << 29
QUARTER = 1 << 30
HALF = 1 << 31


def torus_from_real(r) -> np.uint32:
    """Map a real (``float``, ``int`` or ``Fraction``) onto the 32-bit torus grid."""
    fr = Fraction(r)
    frac = fr - math.floor(fr)
    return np.uint32(round(frac * MODULUS) % MODULUS)


def torus_to_real(t) -> float:
    """Inverse of :func:`torus_from_real` onto ``[0, 1)``."""
    return int(t) / MODULUS


def to_signed(t):
    """Centered representative in ``[-2**31, 2**31)`` (as int64)."""
    return np.asarray(t, dtype=np.uint32).view(np.int32).astype(np.int64)


def torus_distance(x, y):
    """Distance on the circle between two torus words, in grid units."""
    d = np.abs(to_signed(np.asarray(x, dtype=np.uint32) - np.asarray(y, dtype=np.uint32)))
    return d


@dataclass(frozen=True)
class NoiseParams:
    """Gaussian noise on the torus with standard deviation ``alpha``.

    ``alpha = 0`` is allowed and yields exact (noiseless) samples.
    """

    alpha: float = 2.0 ** -25
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")


class NoiseSampler:
    """Seeded source of torus noise and uniform masks.

    Each role owns its own sampler; use :meth:`spawn` to derive independent
    child streams that replay identically across processes.
    """

    def __init__(self, params: NoiseParams | None = None, seed_seq=None):
        self.params = params or NoiseParams()
        if seed_seq is None:
            seed_seq = np.random.SeedSequence(self.params.rng_seed)
        self._seed_seq = seed_seq
        self.rng = np.random.Generator(np.random.PCG64(seed_seq))

    @property
    def alpha(self) -> float:
        return self.params.alpha

    def spawn(self, n: int = 1) -> list[NoiseSampler]:
        return [NoiseSampler(self.params, s) for s in self._seed_seq.spawn(n)]

    def noise(self, shape=()) -> np.ndarray:
        if self.alpha == 0:
            return np.zeros(shape, dtype=np.uint32)
        e = np.rint(self.rng.normal(0.0, self.alpha * MODULUS, size=shape))
        return e.astype(np.int64).astype(np.uint32)

    def uniform(self, shape=()) -> np.ndarray:
        return self.rng.integers(0, MODULUS, size=shape, dtype=np.uint32)

    def bits(self, shape=()) -> np.ndarray:
        return self.rng.integers(0, 2, size=shape, dtype=np.uint8)


def sample_noise(p: NoiseParams, sampler: NoiseSampler | None = None) -> np.uint32:
    """One centered Gaussian torus sample of stddev ``p.alpha``."""
    sampler = sampler or NoiseSampler(p)
    return np.uint32(sampler.noise())


def decode_quarter_bit(phase, return_flag: bool = False):
    """Round a phase to the message space ``{0, 1/4}``.

    In-band results are ``phase in [1/8, 3/8)`` for 1 and
    ``phase in [7/8, 1) u [0, 1/8)`` for 0. Anything else is decoded to the
    nearer message (``[3/8, 5/8)`` -> 1, ``[5/8, 7/8)`` -> 0) and flagged as
    out of band, meaning the noise reached 1/8 or more.

    Works element-wise on arrays.
    """
    p = np.asarray(phase, dtype=np.uint32).astype(np.int64)
    bit = ((p >= EIGHTH) & (p < 5 * EIGHTH)).astype(np.uint8)
    flag = (p >= 3 * EIGHTH) & (p < 7 * EIGHTH)
    if bit.ndim == 0:
        bit, flag = int(bit), bool(flag)
    if return_flag:
        return bit, flag
    return bit


def encode_quarter_bit(mu):
    return (np.asarray(mu, dtype=np.uint32) & 1) * np.uint32(QUARTER)
