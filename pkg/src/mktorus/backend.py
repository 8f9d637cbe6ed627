"""Encrypted bits and the homomorphic gate layer.

Two interchangeable backends share one surface:

``ClearBackend``
    bits are plain ``bool`` arrays; gates are exact boolean operations.
``NoiseSimBackend``
    bits are multi-key TLWE samples. A gate forms the usual linear
    combination of its (extended) inputs and hands it to a bootstrap oracle,
    which rounds the phase with the session keys and returns a fresh
    encryption. Real blind rotation is not implemented; the oracle keeps the
    two observable properties of gate bootstrapping (correct bit, fresh
    noise).

Every ``EncBit`` carries a lane shape, so one gate call evaluates the same
circuit on many independent inputs at once. Gate counters record circuit
gates (one per call) and lane bootstraps (one per lane).
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from . import tlwe
from .torus import EIGHTH, QUARTER, NoiseParams, NoiseSampler

GATES = ("NAND", "AND", "OR", "XOR", "NOT")


class BackendMismatch(TypeError):
    pass


@dataclass
class GateCounter:
    bootstrapped_gates: int = 0
    free_ops: int = 0
    lane_bootstraps: int = 0

    def snapshot(self) -> GateCounter:
        return GateCounter(self.bootstrapped_gates, self.free_ops, self.lane_bootstraps)

    def as_dict(self) -> dict:
        return {"bootstrapped": self.bootstrapped_gates, "free": self.free_ops,
                "lane_bootstraps": self.lane_bootstraps}


class EncBit:
    """One encrypted bit per lane; combine with ``& | ^ ~``."""

    __slots__ = ("backend", "data")

    def __init__(self, backend, data):
        self.backend = backend
        self.data = data

    @property
    def shape(self) -> tuple[int, ...]:
        return self.backend.lane_shape(self.data)

    def __and__(self, other):
        return self.backend.gate("AND", self, other)

    def __or__(self, other):
        return self.backend.gate("OR", self, other)

    def __xor__(self, other):
        return self.backend.gate("XOR", self, other)

    def __invert__(self):
        return self.backend.gate("NOT", self)

    def nand(self, other):
        return self.backend.gate("NAND", self, other)

    def decrypt(self) -> np.ndarray:
        return self.backend.decrypt(self)

    def __repr__(self):
        return f"EncBit({self.backend.name}, shape={self.shape})"


class Backend:
    name = "abstract"

    def __init__(self):
        self.total = GateCounter()
        self._scopes: list[GateCounter] = []

    @contextlib.contextmanager
    def count(self):
        """Nested counting scope: ``with backend.count() as c: ...``."""
        c = GateCounter()
        self._scopes.append(c)
        try:
            yield c
        finally:
            self._scopes.remove(c)

    def gate_count_scope(self):
        return self.count()

    def _tally(self, kind: str, lanes: int) -> None:
        for c in (self.total, *self._scopes):
            if kind == "NOT":
                c.free_ops += 1
            else:
                c.bootstrapped_gates += 1
                c.lane_bootstraps += lanes

    def gate(self, kind: str, a: EncBit, b: EncBit | None = None) -> EncBit:
        if kind not in GATES:
            raise ValueError(f"unknown gate {kind!r}")
        if kind == "NOT":
            if b is not None:
                raise ValueError("NOT takes a single operand")
            self._check(a)
            out = self._not(a.data)
        else:
            if b is None:
                raise ValueError(f"{kind} takes two operands")
            self._check(a)
            self._check(b)
            out = self._binary(kind, a.data, b.data)
        self._tally(kind, int(np.prod(self.lane_shape(out), dtype=np.int64)))
        return EncBit(self, out)

    def eval_gate(self, kind, c1, c2=None):
        return self.gate(kind, c1, c2)

    def _check(self, x) -> None:
        if not isinstance(x, EncBit) or x.backend is not self:
            raise BackendMismatch(f"operand {x!r} does not belong to backend {self.name}")

    # lane plumbing; payloads are (*lanes, *tail)
    tail: tuple[int, ...] = ()

    def lane_shape(self, data) -> tuple[int, ...]:
        return data.shape[:data.ndim - len(self.tail)]

    def reshape_lanes(self, x: EncBit, shape) -> EncBit:
        return EncBit(self, x.data.reshape(tuple(shape) + self.tail))

    def broadcast_lanes(self, x: EncBit, shape) -> EncBit:
        return EncBit(self, np.broadcast_to(x.data, tuple(shape) + self.tail))

    # subclass hooks

    def encrypt(self, bits, party: int = 1) -> EncBit:
        raise NotImplementedError

    def trivial(self, bit, shape=()) -> EncBit:
        raise NotImplementedError

    def decrypt(self, x: EncBit) -> np.ndarray:
        raise NotImplementedError

    def _not(self, a):
        raise NotImplementedError

    def _binary(self, kind, a, b):
        raise NotImplementedError


class ClearBackend(Backend):
    name = "clear"

    def encrypt(self, bits, party=1):
        return EncBit(self, np.asarray(bits).astype(bool))

    def trivial(self, bit, shape=()):
        bits = np.asarray(bit).astype(bool)
        return EncBit(self, np.array(np.broadcast_to(bits, np.broadcast_shapes(bits.shape, tuple(shape)))))

    def decrypt(self, x):
        self._check(x)
        return x.data.astype(np.uint8)

    def _not(self, a):
        return ~a

    def _binary(self, kind, a, b):
        if kind == "AND":
            return a & b
        if kind == "OR":
            return a | b
        if kind == "XOR":
            return a ^ b
        return ~(a & b)


# gate constants on the b coordinate, in 32-bit torus units
_FIVE_EIGHTHS = np.uint32(5 * EIGHTH)
_MINUS_EIGHTH = np.uint32((1 << 32) - EIGHTH)
_EIGHTH = np.uint32(EIGHTH)
_QUARTER = np.uint32(QUARTER)


class NoiseSimBackend(Backend):
    """TLWE samples under ``k`` parties' keys, refreshed by a bootstrap oracle.

    Payloads are ``uint32`` arrays of shape ``(*lanes, k*n + 1)`` laid out as
    ``(a_1, ..., a_k, b)``. The oracle outputs a 1 iff the phase of the gate's
    linear combination lies in ``[1/4, 3/4)``; with messages encoded as
    ``mu/4`` this single rule realises all four bootstrapped gates with a
    1/8 margin on every side.
    """

    name = "noisesim"

    def __init__(self, params: tlwe.MKParams | None = None, seed: int = 0, keys=None):
        super().__init__()
        self.params = params or tlwe.setup(32, 2)
        root = np.random.SeedSequence(seed)
        key_seed, self._oracle_seed, self._enc_seed = root.spawn(3)
        if keys is None:
            samplers = NoiseSampler(self.params.noise, key_seed).spawn(self.params.k)
            keys = [tlwe.keygen(self.params, i + 1, samplers[i])[0] for i in range(self.params.k)]
        self._keys = tuple(sorted(keys, key=lambda sk: sk.party_index))
        self._s = np.concatenate([sk.s for sk in self._keys]).astype(np.uint64)
        self._oracle = NoiseSampler(self.params.noise, self._oracle_seed)
        self._enc = NoiseSampler(self.params.noise, self._enc_seed)
        self._dim = self.params.k * self.params.n
        self.tail = (self._dim + 1,)

    @property
    def alpha(self) -> float:
        return self.params.noise.alpha

    def party_keys(self):
        """Secret keys of the simulated participants, for the decryption protocol."""
        return self._keys

    def _phase(self, data) -> np.ndarray:
        acc = (data[..., :self._dim].astype(np.uint64) * self._s).sum(axis=-1)
        return ((acc + data[..., -1]) & 0xFFFFFFFF).astype(np.uint32)

    def _fresh(self, bits: np.ndarray, sampler: NoiseSampler) -> np.ndarray:
        shape = bits.shape
        a = sampler.uniform(shape + (self._dim,))
        dot = ((a.astype(np.uint64) * self._s).sum(axis=-1) & 0xFFFFFFFF).astype(np.uint32)
        with np.errstate(over="ignore"):  # mod 2^32 on 0-d operands
            b = (bits.astype(np.uint32) * _QUARTER - dot + sampler.noise(shape)).astype(np.uint32)
        return np.concatenate([a, b[..., None]], axis=-1)

    def encrypt(self, bits, party=1):
        bits = np.asarray(bits)
        sk = self._keys[party - 1]
        ct = tlwe.encrypt_bit(bits.astype(np.uint8), sk, self.params, self._enc)
        return EncBit(self, tlwe.extend(ct, self.params.k).words())

    def trivial(self, bit, shape=()):
        bits = np.asarray(bit).astype(bool)
        shape = np.broadcast_shapes(bits.shape, tuple(shape))
        data = np.zeros(shape + self.tail, dtype=np.uint32)
        data[..., -1] = np.where(bits, _QUARTER, np.uint32(0))
        return EncBit(self, data)

    def decrypt(self, x):
        self._check(x)
        return np.asarray(tlwe.decode_quarter_bit(self._phase(x.data)), dtype=np.uint8)

    def phase_of(self, x: EncBit) -> np.ndarray:
        """Phase under the joint key (test instrumentation)."""
        self._check(x)
        return self._phase(x.data)

    def to_ciphertext(self, x: EncBit) -> tlwe.MKCiphertext:
        self._check(x)
        shape = self.lane_shape(x.data)
        a = x.data[..., :self._dim].reshape(shape + (self.params.k, self.params.n))
        return tlwe.MKCiphertext(a, x.data[..., -1].copy(), tuple(range(1, self.params.k + 1)))

    def linear_combination(self, kind: str, a, b=None) -> np.ndarray:
        """The pre-bootstrap sample of a gate (phase-level instrumentation)."""
        if kind == "NOT":
            out = (np.uint32(0) - a).astype(np.uint32)
            out[..., -1] += _QUARTER
            return out
        a, b = np.broadcast_arrays(a, b)
        if kind == "XOR":
            return (np.uint32(2) * (a - b)).astype(np.uint32)
        if kind == "NAND":
            out = (np.uint32(0) - a - b).astype(np.uint32)
            out[..., -1] += _FIVE_EIGHTHS
        elif kind == "AND":
            out = (a + b).astype(np.uint32)
            out[..., -1] += _MINUS_EIGHTH
        else:
            out = (a + b).astype(np.uint32)
            out[..., -1] += _EIGHTH
        return out

    def bootstrap_oracle(self, lin: np.ndarray) -> np.ndarray:
        ph = self._phase(lin).astype(np.int64)
        bits = (ph >= QUARTER) & (ph < 3 * QUARTER)
        return self._fresh(bits, self._oracle)

    def bootstrap(self, lin: tlwe.MKCiphertext) -> tlwe.MKCiphertext:
        """Oracle applied to a ciphertext object."""
        lin = tlwe.extend(lin, self.params.k)
        out = self.bootstrap_oracle(lin.words())
        return self.to_ciphertext(EncBit(self, out))

    def _not(self, a):
        return self.linear_combination("NOT", a)

    def _binary(self, kind, a, b):
        return self.bootstrap_oracle(self.linear_combination(kind, a, b))


def make_backend(name: str, n: int = 32, k: int = 2, alpha: float = 2.0 ** -25, seed: int = 0) -> Backend:
    if name == "clear":
        return ClearBackend()
    if name == "noisesim":
        return NoiseSimBackend(tlwe.setup(n, k, NoiseParams(alpha, seed)), seed=seed)
    raise ValueError(f"unknown backend {name!r}")
