"""Two-party additive secret sharing over Z_{2^32}.

Shares live in flat ``uint32`` batches so one message can carry many
ciphertext bits. Only linear functions are evaluated on shares; public
constants are folded into server 0's share.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

SERVER0 = 0
SERVER1 = 1


@dataclass(frozen=True, eq=False)
class ArithShare:
    holder: int
    v: np.ndarray

    def __post_init__(self):
        if self.holder not in (SERVER0, SERVER1):
            raise ValueError(f"holder must be 0 or 1, got {self.holder}")
        object.__setattr__(self, "v", np.asarray(self.v, dtype=np.uint32))

    def __len__(self):
        return self.v.size


def share(x, rng: np.random.Generator, r=None) -> tuple[ArithShare, ArithShare]:
    """Split ``x`` into ``(x - r, r)`` with ``r`` uniform (or given)."""
    x = np.asarray(x, dtype=np.uint32)
    if r is None:
        r = rng.integers(0, 1 << 32, size=x.shape, dtype=np.uint32)
    r = np.asarray(r, dtype=np.uint32)
    return ArithShare(SERVER0, (x - r).astype(np.uint32)), ArithShare(SERVER1, r)


def reconstruct(x0: ArithShare, x1: ArithShare) -> np.ndarray:
    if x0.holder == x1.holder:
        raise ValueError("cannot reconstruct from two shares of the same holder")
    return (x0.v + x1.v).astype(np.uint32)


def linear_eval(shares, coeffs, const=0) -> ArithShare:
    """Local ``sum c_i * [x_i] (+ const on server 0)``; no communication.

    ``shares`` must all be held by the same server. ``const`` is a public
    value (scalar or batch) that only server 0 adds, so the pair still
    reconstructs to ``sum c_i x_i + const``.
    """
    shares = list(shares)
    coeffs = list(coeffs)
    if len(shares) != len(coeffs):
        raise ValueError("one coefficient per share is required")
    holders = {s.holder for s in shares}
    if len(holders) != 1:
        raise ValueError(f"mixed holders in one linear evaluation: {sorted(holders)}")
    holder = holders.pop()
    acc = np.zeros_like(shares[0].v)
    for s, c in zip(shares, coeffs):
        acc = acc + np.uint32(int(c) % (1 << 32)) * s.v
    if holder == SERVER0:
        acc = acc + np.asarray(const, dtype=np.int64).astype(np.uint32)
    return ArithShare(holder, acc.astype(np.uint32))


def add_const(x: ArithShare, c) -> ArithShare:
    """Public constant addition: only server 0's share moves."""
    if x.holder == SERVER0:
        return ArithShare(SERVER0, (x.v + np.asarray(c, dtype=np.int64).astype(np.uint32)).astype(np.uint32))
    return x


# -- batch codec: holder tag u8 | count u32 | count x u32, all little endian --

def shares_to_bytes(x: ArithShare) -> bytes:
    v = np.ascontiguousarray(x.v.ravel(), dtype="<u4")
    return struct.pack("<BI", x.holder, v.size) + v.tobytes()


def shares_from_bytes(buf: bytes, offset: int = 0) -> tuple[ArithShare, int]:
    holder, count = struct.unpack_from("<BI", buf, offset)
    start = offset + 5
    v = np.frombuffer(buf, dtype="<u4", count=count, offset=start).astype(np.uint32)
    return ArithShare(holder, v), start + 4 * count
