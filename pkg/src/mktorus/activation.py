"""Piecewise activation ``g`` and Taylor sigmoid baselines.

``g`` works on unscaled integers and outputs values already multiplied by 16::

    g(x) = 0        x < -2
           4x + 8   -2 <= x <= 2
           16       x > 2

The Taylor baselines take a fixed-point input with ``frac_bits`` fractional
bits and also return ``16 * sigmoid(x)`` as an integer, so every activation
plugs into training at the same output scale.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import circuits as C
from .backend import ClearBackend

OUT_SCALE = 16
OUT_BITS = 4
KINDS = ("g", "taylor3", "taylor7", "sigmoid")

# Maclaurin coefficients of the sigmoid's odd part: x/4 - x^3/48 + x^5/480 - 17x^7/80640
TAYLOR_SERIES = (Fraction(1, 4), Fraction(-1, 48), Fraction(1, 480), Fraction(-17, 80640))
COEF_BITS = 12


def taylor_coefficients(order: int, coef_bits: int = COEF_BITS) -> tuple[int, ...]:
    """Odd-power coefficients scaled by ``2**coef_bits``, round half away from zero."""
    if order not in (3, 7):
        raise ValueError(f"Taylor order must be 3 or 7, got {order}")
    out = []
    for c in TAYLOR_SERIES[: (order + 1) // 2]:
        v = c * (1 << coef_bits)
        out.append(int(math.copysign(math.floor(abs(v) + Fraction(1, 2)), v)))
    return tuple(out)


@dataclass(frozen=True)
class ActSpec:
    kind: str = "g"
    q: int = 16

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"activation must be one of {KINDS}, got {self.kind!r}")
        if self.q < 2 or self.q & (self.q - 1):
            raise ValueError(f"scale q must be a power of two >= 2, got {self.q}")

    @property
    def order(self) -> int | None:
        return int(self.kind[-1]) if self.kind.startswith("taylor") else None


# -- real-valued references --------------------------------------------------

def sigmoid_clear(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def g_clear(x):
    """``g`` on reals, already in the x16 output scale."""
    return np.clip(4.0 * np.asarray(x, dtype=float) + 8.0, 0.0, 16.0)


def taylor_clear(x, order: int):
    x = np.asarray(x, dtype=float)
    coefs = [float(c) for c in TAYLOR_SERIES[: (order + 1) // 2]]
    return 0.5 + sum(c * x ** (2 * i + 1) for i, c in enumerate(coefs))


# -- integer references (mirror the circuits bit for bit) --------------------

def g_int(x):
    """Exact integer ``g`` as computed by the compare-quads circuit."""
    x = np.asarray(x, dtype=np.int64)
    mid = np.where(x >= -2, 4 * x + 8, 0)
    return np.where(mid >= 16, 16, mid)


def taylor_int(x, order: int, width: int = 16, frac_bits: int = 4, coef_bits: int = COEF_BITS):
    """Fixed-point Horner evaluation with the circuit's wraparound at ``width``."""
    coefs = taylor_coefficients(order, coef_bits)
    x = np.asarray(x, dtype=np.int64)
    w = lambda v: C.wrap(v, width)  # noqa: E731
    x2 = w((x * x) >> frac_bits)
    t = w((x2 * coefs[-1]) >> frac_bits)
    t = w(t + coefs[-2])
    for c in reversed(coefs[:-2]):
        t = w((t * x2) >> frac_bits)
        t = w(t + c)
    th = t >> (coef_bits - OUT_BITS)
    return w(w((x * th) >> frac_bits) + OUT_SCALE // 2)


# -- circuits ----------------------------------------------------------------

def act_g(x: C.EncWord, headroom: int = 3) -> C.EncWord:
    """Encrypted ``g`` from two compare-quads.

    The input is first widened by ``headroom`` bits so ``4x + 8`` cannot wrap
    for any representable ``x``; the result is narrowed back to the input
    width (needs ``l >= 6`` to hold 16).
    """
    l = x.width
    if l < 6:
        raise C.WidthError(f"act_g needs width >= 6 to represent 16, got {l}")
    be = x.backend
    xe = C.homogenize(x, l + headroom)
    L = xe.width
    lin = C.add_const(C.shift_left_const(xe, 2), 8)
    mid = C.compare_quads(xe, C.trivial_word(-2, L, be), C.trivial_word(0, L, be), lin)
    sixteen = C.trivial_word(16, L, be)
    res = C.compare_quads(mid, sixteen, mid, C.trivial_word(16, L, be))
    return C.narrow(res, l)


def g_act_cost(l: int, headroom: int = 3) -> int:
    L = l + headroom
    return headroom + C.g_add(L) + 2 * C.g_compare_quads(L)


def act_taylor(x: C.EncWord, order: int, frac_bits: int = 4, coef_bits: int = COEF_BITS) -> C.EncWord:
    """Encrypted Taylor sigmoid; matches :func:`taylor_int` exactly."""
    coefs = taylor_coefficients(order, coef_bits)
    l = x.width
    if coef_bits < OUT_BITS or coef_bits - OUT_BITS >= l:
        raise C.WidthError("coefficient scale does not fit the word")
    x2 = C.mul_rescale(x, x, frac_bits, l)
    t = C.mul_const_rescale(x2, coefs[-1], frac_bits, l)
    t = C.add_const(t, coefs[-2])
    for c in reversed(coefs[:-2]):
        t = C.mul_rescale(t, x2, frac_bits, l)
        t = C.add_const(t, c)
    th = C.EncWord(t.bits[coef_bits - OUT_BITS:])
    return C.add_const(C.mul_rescale(x, th, frac_bits, l), OUT_SCALE // 2)


def gate_cost(function: str, width: int = 16, backend=None) -> dict:
    """Bootstrapped-gate count and wall time of one activation evaluation."""
    be = backend or ClearBackend()
    x = C.mk_enc_word(0, width, be)
    t0 = time.perf_counter()
    with be.count() as c:
        if function == "g":
            out = act_g(x)
        elif function in ("taylor3", "taylor7"):
            out = act_taylor(x, int(function[-1]))
        else:
            raise ValueError(f"unknown activation {function!r}")
    elapsed = time.perf_counter() - t0
    return {"function": function, "width": width, "bootstrapped": c.bootstrapped_gates,
            "free": c.free_ops, "seconds": elapsed, "value_at_0": C.decode_word(out)}
