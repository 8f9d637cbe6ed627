"""Multi-key TLWE: keys, bit encryption, extension and (partial) decryption.

Ciphertexts are batch-capable: ``a`` has shape ``(*batch, slots, n)`` and
``b`` has shape ``batch``. Slot ``j`` holds the mask block of party
``parties[j]``; a fully extended ciphertext has ``parties == (1, ..., k)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .torus import (
    QUARTER,
    NoiseParams,
    NoiseSampler,
    decode_quarter_bit,
)


@dataclass(frozen=True)
class MKParams:
    n: int
    k: int
    noise: NoiseParams = field(default_factory=NoiseParams)
    lam: int = 110

    @property
    def ct_length(self) -> int:
        return self.k * self.n + 1


def setup(n: int, k: int, noise: NoiseParams | None = None, lam: int = 110) -> MKParams:
    if n < 1 or k < 1:
        raise ValueError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    return MKParams(n=n, k=k, noise=noise or NoiseParams(), lam=lam)


@dataclass(frozen=True)
class PublicKey:
    """Placeholder for bootstrapping key material; never used for computation."""

    party_index: int
    tag: bytes = b""


@dataclass(frozen=True, eq=False)
class SecretKey:
    party_index: int
    s: np.ndarray

    def __post_init__(self):
        self.s.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.s)

    def __eq__(self, other):
        return (isinstance(other, SecretKey) and self.party_index == other.party_index
                and np.array_equal(self.s, other.s))

    def __hash__(self):
        return hash((self.party_index, self.s.tobytes()))


def keygen(params: MKParams, party_index: int, sampler: NoiseSampler | None = None):
    """Binary secret key and an opaque public key for ``party_index`` (1-based)."""
    if not 1 <= party_index <= params.k:
        raise ValueError(f"party index {party_index} outside [1, {params.k}]")
    sampler = sampler or NoiseSampler(params.noise)
    s = sampler.bits(params.n)
    return SecretKey(party_index, s), PublicKey(party_index)


@dataclass(frozen=True, eq=False)
class MKCiphertext:
    a: np.ndarray
    b: np.ndarray
    parties: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.a.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.b.shape

    @property
    def active_slots(self) -> frozenset[int]:
        nz = np.any(self.a != 0, axis=tuple(i for i in range(self.a.ndim) if i != self.a.ndim - 2))
        return frozenset(p for p, used in zip(self.parties, np.atleast_1d(nz)) if used)

    def __len__(self):
        return len(self.parties) * self.n + 1

    def __getitem__(self, idx):
        return MKCiphertext(self.a[idx], self.b[idx], self.parties)

    def __eq__(self, other):
        return (isinstance(other, MKCiphertext) and self.parties == other.parties
                and np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b))

    def words(self) -> np.ndarray:
        """Flat ``(..., slots*n + 1)`` view ``(a_1, ..., a_k, b)``."""
        flat = self.a.reshape(self.batch_shape + (-1,))
        return np.concatenate([flat, self.b[..., None]], axis=-1)


def encrypt_bit(mu, sk: SecretKey, params: MKParams, sampler: NoiseSampler) -> MKCiphertext:
    """Fresh single-key encryption ``b = mu/4 - <a, s> + e``.

    ``mu`` may be an array of bits; the result is then a batch. The returned
    ciphertext has one slot; use :func:`extend` to place it among ``k``.
    """
    mu = np.asarray(mu)
    if np.any((mu != 0) & (mu != 1)):
        raise ValueError("mu must be 0 or 1")
    a = sampler.uniform(mu.shape + (1, params.n))
    b = _masked_b(mu, a[..., 0, :], sk.s, sampler)
    return MKCiphertext(a, b, (sk.party_index,))


def encrypt_joint(mu, keys, params: MKParams, sampler: NoiseSampler) -> MKCiphertext:
    """Fresh encryption of ``mu`` directly under the full key set."""
    mu = np.asarray(mu)
    keys = sorted(keys, key=lambda sk: sk.party_index)
    a = sampler.uniform(mu.shape + (params.k, params.n))
    s = np.stack([sk.s for sk in keys])
    b = _masked_b(mu, a, s, sampler)
    return MKCiphertext(a, b, tuple(range(1, params.k + 1)))


def _masked_b(mu, a, s, sampler):
    dot = _inner(a, s)
    e = sampler.noise(mu.shape)
    with np.errstate(over="ignore"):  # mod 2^32 on 0-d operands
        return (mu.astype(np.uint32) * np.uint32(QUARTER) - dot + e).astype(np.uint32)


def _inner(a, s) -> np.ndarray:
    """``sum a*s mod 2**32`` over trailing axes of matching shape."""
    s = np.asarray(s, dtype=np.uint64)
    prod = a.astype(np.uint64) * s
    axes = tuple(range(a.ndim - s.ndim, a.ndim))
    return (prod.sum(axis=axes) & 0xFFFFFFFF).astype(np.uint32)


def trivial_ciphertext(mu, params: MKParams) -> MKCiphertext:
    mu = np.asarray(mu)
    a = np.zeros(mu.shape + (params.k, params.n), dtype=np.uint32)
    b = (mu.astype(np.uint32) * np.uint32(QUARTER)).astype(np.uint32)
    return MKCiphertext(a, b, tuple(range(1, params.k + 1)))


def extend(ct: MKCiphertext, k: int) -> MKCiphertext:
    """Place each mask block at its party's slot among ``k``, zero elsewhere."""
    full = tuple(range(1, k + 1))
    if ct.parties == full:
        return ct
    if any(not 1 <= p <= k for p in ct.parties):
        raise ValueError(f"ciphertext parties {ct.parties} do not fit k={k}")
    a = np.zeros(ct.batch_shape + (k, ct.n), dtype=np.uint32)
    for slot, p in enumerate(ct.parties):
        a[..., p - 1, :] = ct.a[..., slot, :]
    return MKCiphertext(a, ct.b.copy(), full)


def _key_for(keys, party):
    for sk in keys:
        if sk.party_index == party:
            return sk
    return None


def phase(ct: MKCiphertext, keys) -> np.ndarray:
    """``b + sum_i <a_i, s_i>``; keys must cover every active slot."""
    acc = ct.b.astype(np.uint32).copy()
    active = ct.active_slots
    for slot, p in enumerate(ct.parties):
        sk = _key_for(keys, p)
        if sk is None:
            if p in active:
                raise KeyError(f"missing secret key for active party {p}")
            continue
        acc = acc + _inner(ct.a[..., slot, :], sk.s)
    return acc.astype(np.uint32)


def decrypt_naive(ct: MKCiphertext, keys, return_flag: bool = False):
    """Single-decryptor baseline holding every secret key."""
    return decode_quarter_bit(phase(ct, keys), return_flag=return_flag)


@dataclass(frozen=True, eq=False)
class PartialDec:
    party_index: int
    p: np.ndarray


def part_dec(ct: MKCiphertext, sk: SecretKey) -> PartialDec:
    """``p_i = b + <a_i, s_i>``."""
    if sk.party_index not in ct.parties:
        raise ValueError(f"party {sk.party_index} has no slot in this ciphertext")
    slot = ct.parties.index(sk.party_index)
    p = (ct.b + _inner(ct.a[..., slot, :], sk.s)).astype(np.uint32)
    return PartialDec(sk.party_index, p)


def fin_dec(partials, b, k: int) -> np.ndarray:
    """``sum p_i - (k-1) b``: the noisy scaled message before rounding."""
    idx = [pd.party_index for pd in partials]
    if len(set(idx)) != len(idx):
        raise ValueError(f"duplicate partial decryptions: {idx}")
    if sorted(idx) != list(range(1, k + 1)):
        raise ValueError(f"expected one partial per party 1..{k}, got {sorted(idx)}")
    acc = np.zeros_like(np.asarray(b, dtype=np.uint32))
    for pd in partials:
        acc = acc + pd.p
    return (acc - np.uint32(k - 1) * np.asarray(b, dtype=np.uint32)).astype(np.uint32)


# -- serialization: u32 word-count prefix, then little-endian u32 words ------

def _pack_words(words) -> bytes:
    words = np.ascontiguousarray(words, dtype="<u4").ravel()
    return struct.pack("<I", len(words)) + words.tobytes()


def _unpack_words(buf: bytes, offset: int = 0):
    (count,) = struct.unpack_from("<I", buf, offset)
    start = offset + 4
    words = np.frombuffer(buf, dtype="<u4", count=count, offset=start).astype(np.uint32)
    return words, start + 4 * count


def ciphertext_to_bytes(ct: MKCiphertext) -> bytes:
    """Header words ``[n, slots, count, *parties]`` then ``count`` rows of ``a..., b``."""
    rows = ct.words().reshape(-1, len(ct))
    header = [ct.n, len(ct.parties), rows.shape[0], *ct.parties]
    return _pack_words(np.concatenate([np.array(header, dtype=np.uint32), rows.ravel()]))


def ciphertext_from_bytes(buf: bytes, offset: int = 0):
    words, end = _unpack_words(buf, offset)
    n, slots, count = (int(w) for w in words[:3])
    parties = tuple(int(p) for p in words[3:3 + slots])
    rows = words[3 + slots:].reshape(count, slots * n + 1)
    a = rows[:, :-1].reshape(count, slots, n)
    return MKCiphertext(a, rows[:, -1].copy(), parties), end


def secret_key_to_bytes(sk: SecretKey) -> bytes:
    return _pack_words(np.concatenate([[sk.party_index], sk.s.astype(np.uint32)]))


def secret_key_from_bytes(buf: bytes, offset: int = 0):
    words, end = _unpack_words(buf, offset)
    return SecretKey(int(words[0]), words[1:].astype(np.uint8)), end


def partial_to_bytes(pd: PartialDec) -> bytes:
    return _pack_words(np.concatenate([[pd.party_index], np.ravel(pd.p)]))


def partial_from_bytes(buf: bytes, offset: int = 0):
    words, end = _unpack_words(buf, offset)
    return PartialDec(int(words[0]), words[1:].copy()), end
