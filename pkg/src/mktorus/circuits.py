"""Two's-complement words of encrypted bits and the integer gadget catalog.

Words are LSB first. All operators are data-oblivious circuits built from
the backend's gates, so the same code runs on clear bits and on TLWE
samples. A word's bits share one lane shape; operating on words with
different lane shapes broadcasts like numpy.

Gate costs (bootstrapped gates per call, independent of lane count):

* ``mk_add`` at width w: ``5w - 6`` (half adder in, no carry out); 1 at w=1
* ``mk_sub`` at width w: ``5w - 3`` (carry injected as a trivial 1)
* ``homogenize`` l -> l': ``l' - l``
* ``compare_quads`` at width l: ``2 + g_sub(l+1) + 2l + l``
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .backend import Backend, EncBit


class WidthError(ValueError):
    pass


class EncWord:
    """An ``l``-bit two's-complement integer, one ``EncBit`` per position."""

    __slots__ = ("bits",)

    def __init__(self, bits: Sequence[EncBit]):
        bits = tuple(bits)
        if not bits:
            raise WidthError("a word needs at least one bit")
        self.bits = bits

    @property
    def width(self) -> int:
        return len(self.bits)

    @property
    def backend(self) -> Backend:
        return self.bits[0].backend

    @property
    def shape(self) -> tuple[int, ...]:
        return np.broadcast_shapes(*(b.shape for b in self.bits))

    @property
    def sign(self) -> EncBit:
        return self.bits[-1]

    def __len__(self):
        return len(self.bits)

    def __repr__(self):
        return f"EncWord(width={self.width}, lanes={self.shape}, backend={self.backend.name})"

    # lane plumbing (no gates)
    def take(self, indices, axis: int = 0) -> EncWord:
        be = self.backend
        return EncWord(EncBit(be, np.take(be.broadcast_lanes(b, self.shape).data, indices, axis=axis))
                       for b in self.bits)

    def reshape(self, shape) -> EncWord:
        be = self.backend
        return EncWord(be.reshape_lanes(be.broadcast_lanes(b, self.shape), shape) for b in self.bits)

    def broadcast_to(self, shape) -> EncWord:
        be = self.backend
        return EncWord(be.broadcast_lanes(b, shape) for b in self.bits)

    def decode(self) -> np.ndarray:
        return decode_word(self)


def concat_lanes(words: Sequence[EncWord], axis: int = 0) -> EncWord:
    widths = {w.width for w in words}
    if len(widths) != 1:
        raise WidthError(f"cannot concatenate widths {sorted(widths)}")
    be = words[0].backend
    bits = []
    for i in range(widths.pop()):
        parts = [be.broadcast_lanes(w.bits[i], w.shape).data for w in words]
        bits.append(EncBit(be, np.concatenate(parts, axis=axis)))
    return EncWord(bits)


def stack_lanes(words: Sequence[EncWord], axis: int = 0) -> EncWord:
    return concat_lanes([w.reshape(w.shape[:axis] + (1,) + w.shape[axis:]) for w in words], axis=axis)


# -- encoding ----------------------------------------------------------------

def _check_range(m: np.ndarray, l: int) -> None:
    lo, hi = -(1 << (l - 1)), (1 << (l - 1)) - 1
    if m.size and (m.min() < lo or m.max() > hi):
        raise OverflowError(f"value outside [{lo}, {hi}] for width {l}")


def to_bits(m, l: int) -> np.ndarray:
    """Two's-complement bit planes, shape ``(l, *m.shape)``, LSB first."""
    m = np.asarray(m, dtype=np.int64)
    return np.stack([(m >> i) & 1 for i in range(l)]).astype(np.uint8)


def mk_enc_word(m, l: int, backend: Backend, party: int = 1) -> EncWord:
    """Encrypt ``m`` (int or int array) as an ``l``-bit word."""
    if l < 1:
        raise WidthError("width must be positive")
    m = np.asarray(m, dtype=np.int64)
    _check_range(m, l)
    planes = to_bits(m, l)
    return EncWord(backend.encrypt(planes[i], party=party) for i in range(l))


def trivial_word(m, l: int, backend: Backend, shape=()) -> EncWord:
    """Noiseless public constant; ``m`` may be an int or an int array."""
    m = np.asarray(m, dtype=np.int64)
    planes = to_bits(m, l)
    return EncWord(backend.trivial(planes[i], shape) for i in range(l))


def decode_word(w: EncWord):
    planes = [b.decrypt().astype(np.int64) for b in w.bits]
    planes = np.broadcast_arrays(*planes)
    val = sum(p << i for i, p in enumerate(planes[:-1])) - (planes[-1] << (w.width - 1))
    val = np.asarray(val, dtype=np.int64)
    return int(val) if val.ndim == 0 else val


def wrap(v, l: int):
    """Native oracle for ``l``-bit two's-complement wraparound."""
    v = np.asarray(v, dtype=np.int64)
    half = np.int64(1) << (l - 1)
    return ((v + half) & ((np.int64(1) << l) - 1)) - half


# -- structural (zero-gate) helpers ------------------------------------------

def _zeros(backend, n, shape=()) -> list[EncBit]:
    return [backend.trivial(0, shape) for _ in range(n)]


def extract_sign(w: EncWord) -> EncBit:
    return w.sign


def narrow(w: EncWord, l: int) -> EncWord:
    """Keep the low ``l`` bits (value mod 2^l)."""
    if not 1 <= l <= w.width:
        raise WidthError(f"cannot narrow width {w.width} to {l}")
    return EncWord(w.bits[:l])


def shift_left_const(w: EncWord, s: int) -> EncWord:
    if s < 0:
        raise ValueError("shift must be non-negative")
    if s == 0:
        return w
    return EncWord((_zeros(w.backend, s) + list(w.bits))[:w.width])


def _same_width(*words: EncWord) -> int:
    widths = {w.width for w in words}
    if len(widths) != 1:
        raise WidthError(f"width mismatch: {[w.width for w in words]}")
    return widths.pop()


# -- adders ------------------------------------------------------------------

def _ripple(xs, ys, carry=None) -> list[EncBit]:
    out = []
    last = len(xs) - 1
    for i, (x, y) in enumerate(zip(xs, ys)):
        if carry is None:
            out.append(x ^ y)
            if i < last:
                carry = x & y
        else:
            t = x ^ y
            out.append(t ^ carry)
            if i < last:
                carry = (x & y) | (t & carry)
    return out


def mk_add(a: EncWord, b: EncWord) -> EncWord:
    _same_width(a, b)
    return EncWord(_ripple(a.bits, b.bits))


def mk_sub(a: EncWord, b: EncWord) -> EncWord:
    _same_width(a, b)
    one = a.backend.trivial(1)
    return EncWord(_ripple(a.bits, [~y for y in b.bits], carry=one))


def mk_neg(w: EncWord) -> EncWord:
    return mk_sub(trivial_word(0, w.width, w.backend), w)


def add_const(w: EncWord, c) -> EncWord:
    return mk_add(w, trivial_word(c, w.width, w.backend))


def sub_const(w: EncWord, c) -> EncWord:
    return mk_sub(w, trivial_word(c, w.width, w.backend))


def sum_lanes(w: EncWord, axis: int = 0) -> EncWord:
    """Sum over one lane axis with a balanced adder tree (mod 2^width)."""
    axis = axis % len(w.shape)
    while w.shape[axis] > 1:
        n = w.shape[axis]
        half = n // 2
        lo = w.take(np.arange(half), axis)
        hi = w.take(np.arange(half, 2 * half), axis)
        s = mk_add(lo, hi)
        if n % 2:
            s = concat_lanes([s, w.take([n - 1], axis)], axis)
        w = s
    return w.take(0, axis)


# -- sign extension ----------------------------------------------------------

def homogenize(w: EncWord, l_out: int, literal: bool = False) -> EncWord:
    """Sign-extend to ``l_out`` bits with freshly minted sign copies.

    Each new high bit is ``AND(trivial(1), sign)``. ``literal=True`` uses
    ``AND(trivial(0), sign)`` instead, which clears the high bits; it exists
    only to demonstrate why that reading is wrong.
    """
    if l_out < w.width:
        raise WidthError(f"cannot homogenize width {w.width} down to {l_out}")
    be = w.backend
    filler = be.trivial(0 if literal else 1)
    return EncWord(list(w.bits) + [filler & w.sign for _ in range(l_out - w.width)])


def resize(w: EncWord, l_out: int) -> EncWord:
    """Homogenize up or narrow down to ``l_out``."""
    return homogenize(w, l_out) if l_out >= w.width else narrow(w, l_out)


def rescale(w: EncWord, s: int, l_out: int | None = None) -> EncWord:
    """``floor(w / 2^s)`` (arithmetic shift), resized to ``l_out`` bits."""
    if s < 0:
        raise ValueError("shift must be non-negative")
    l_out = w.width if l_out is None else l_out
    if s >= w.width:
        raise WidthError(f"shift {s} consumes the whole {w.width}-bit word")
    return resize(EncWord(w.bits[s:]), l_out)


# -- multiplication ----------------------------------------------------------

def mul_low(a: EncWord, b: EncWord, out_bits: int) -> EncWord:
    """Signed product ``a*b mod 2^out_bits`` for any operand widths.

    Shift-add over the rows of ``b``: partial products ``b_i AND a_j`` with
    ``a`` sign-extended by fan-out, rows truncated at ``out_bits``; the row of
    ``b``'s sign bit carries weight ``-2^(lb-1)`` and is subtracted.
    """
    be = a.backend
    la, lb = a.width, b.width
    shape = np.broadcast_shapes(a.shape, b.shape)
    cache: dict[tuple[int, int], EncBit] = {}

    def pp(i, j):
        key = (i, min(j, la - 1))
        if key not in cache:
            cache[key] = b.bits[i] & a.bits[key[1]]
        return cache[key]

    def row(i):
        return [pp(i, p - i) for p in range(i, out_bits)]

    if lb == 1:
        acc = mk_sub(trivial_word(0, out_bits, be, shape), EncWord(row(0))).bits
        return EncWord(acc)
    acc = row(0)
    for i in range(1, min(lb, out_bits)):
        lo, hi = acc[:i], EncWord(acc[i:])
        r = EncWord(row(i))
        hi = mk_sub(hi, r) if i == lb - 1 else mk_add(hi, r)
        acc = lo + list(hi.bits)
    return EncWord(acc)


def mk_mul(a: EncWord, b: EncWord) -> EncWord:
    """Exact signed product of two ``l``-bit words as a ``2l``-bit word."""
    l = _same_width(a, b)
    return mul_low(a, b, 2 * l)


def mul_rescale(a: EncWord, b: EncWord, s: int, l_out: int) -> EncWord:
    """``wrap(floor(a*b / 2^s), l_out)`` from a truncated product."""
    return EncWord(mul_low(a, b, s + l_out).bits[s:])


def mul_const(w: EncWord, c: int, out_bits: int | None = None) -> EncWord:
    """``c*w mod 2^out_bits`` by shift-and-add over the set bits of ``|c|``."""
    out_bits = w.width if out_bits is None else out_bits
    be = w.backend
    mag = abs(int(c))
    if mag == 0:
        return trivial_word(0, out_bits, be, w.shape)
    ext = resize(w, out_bits)
    js = [j for j in range(out_bits) if (mag >> j) & 1]
    if not js:
        return trivial_word(0, out_bits, be, w.shape)
    acc = list(shift_left_const(ext, js[0]).bits)
    for j in js[1:]:
        hi = mk_add(EncWord(acc[j:]), EncWord(ext.bits[:out_bits - j]))
        acc = acc[:j] + list(hi.bits)
    out = EncWord(acc)
    return mk_neg(out) if c < 0 else out


def mul_const_rescale(w: EncWord, c: int, s: int, l_out: int) -> EncWord:
    return EncWord(mul_const(w, c, s + l_out).bits[s:])


# -- division ----------------------------------------------------------------

def _cond_neg(w: EncWord, s: EncBit) -> EncWord:
    """``-w`` where ``s`` is 1, ``w`` elsewhere: ``(w XOR s) + s``."""
    ys = [x ^ s for x in w.bits]
    out, carry = [], s
    for i, y in enumerate(ys):
        out.append(y ^ carry)
        if i < len(ys) - 1:
            carry = y & carry
    return EncWord(out)


def _mux(sel: EncBit, t: EncWord, f: EncWord) -> EncWord:
    """``t`` where ``sel`` is 1, else ``f``: ``f XOR (sel AND (t XOR f))``."""
    return EncWord(fb ^ (sel & (tb ^ fb)) for tb, fb in zip(t.bits, f.bits))


def _any(bits) -> EncBit:
    bits = list(bits)
    while len(bits) > 1:
        nxt = [bits[i] | bits[i + 1] for i in range(0, len(bits) - 1, 2)]
        if len(bits) % 2:
            nxt.append(bits[-1])
        bits = nxt
    return bits[0]


def mk_div(a: EncWord, b: EncWord) -> EncWord:
    """Signed ``a / b`` truncated toward zero, as an ``l``-bit word.

    ``a`` has width ``2l`` and ``b`` width ``l``. Magnitudes go through a
    restoring divider; the quotient is reduced mod 2^l and the sign is
    reapplied. A zero divisor yields -1 (all ones).
    """
    l = b.width
    if a.width != 2 * l:
        raise WidthError(f"dividend must be twice the divisor width, got {a.width} and {l}")
    be = a.backend
    shape = np.broadcast_shapes(a.shape, b.shape)
    sa, sb = a.sign, b.sign
    num = _cond_neg(a, sa)
    den = _cond_neg(b, sb)
    w = l + 2
    den_ext = EncWord(list(den.bits) + _zeros(be, 2, shape))
    rem = EncWord(_zeros(be, w, shape))
    q = [None] * (2 * l)
    for i in range(2 * l - 1, -1, -1):
        rem = EncWord([num.bits[i]] + list(rem.bits[:w - 1]))
        trial = mk_sub(rem, den_ext)
        q[i] = ~trial.sign
        if i:
            rem = _mux(q[i], trial, rem)
    zero = ~_any(b.bits)
    out = _cond_neg(EncWord(q[:l]), sa ^ sb)
    return EncWord(x | zero for x in out.bits)


def div_oracle(a, b, l: int):
    """Native truncating division with the circuit's conventions."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    safe = np.where(b == 0, 1, b)
    qt = np.abs(a) // np.abs(safe) * np.sign(a) * np.sign(safe)
    return np.where(b == 0, -1, wrap(qt, l))


# -- comparison --------------------------------------------------------------

def compare_quads(a: EncWord, b: EncWord, c: EncWord, d: EncWord,
                  combiner: str = "or", literal_homogenize: bool = False) -> EncWord:
    """``d`` where ``a >= b``, else ``c``; branch free.

    ``a`` and ``b`` are widened by one bit so ``a - b`` cannot overflow. The
    masked halves are disjoint, so the combiner is per-bit OR by default;
    ``combiner="add"`` uses the ripple adder instead.
    """
    l = _same_width(a, b, c, d)
    diff = mk_sub(homogenize(a, l + 1, literal_homogenize), homogenize(b, l + 1, literal_homogenize))
    s = diff.sign
    ns = ~s
    cm = EncWord(s & x for x in c.bits)
    dm = EncWord(ns & y for y in d.bits)
    if combiner == "or":
        return EncWord(x | y for x, y in zip(cm.bits, dm.bits))
    if combiner == "add":
        return mk_add(cm, dm)
    raise ValueError(f"unknown combiner {combiner!r}")


def select_geq(a, b, c, d):
    """Clear oracle for :func:`compare_quads`."""
    return np.where(np.asarray(a) >= np.asarray(b), d, c)


# -- closed-form costs -------------------------------------------------------

def g_add(w: int) -> int:
    return 1 if w == 1 else 5 * w - 6


def g_sub(w: int) -> int:
    return 5 * w - 3


def g_compare_quads(l: int, combiner: str = "or") -> int:
    comb = l if combiner == "or" else g_add(l)
    return 2 + g_sub(l + 1) + 2 * l + comb
