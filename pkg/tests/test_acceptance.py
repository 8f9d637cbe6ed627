"""Acceptance criteria, one group of tests per criterion.

Each test carries ``criterion(n, title)``; conftest prints one PASS/FAIL
line per criterion after the run.
"""

import hashlib

import numpy as np
import pytest

from mktorus import activation as act
from mktorus import circuits as C
from mktorus import distdec, tlwe, wire
from mktorus.backend import ClearBackend, EncBit, make_backend
from mktorus.cli import demo_keys
from mktorus.distdec import SERVER0, SERVER1
from mktorus.ml import data as D
from mktorus.ml import train as T
from mktorus.torus import QUARTER, torus_from_real
from mktorus.wire import MsgType

# Defaults of the distdec demo.
N, ALPHA = 500, 2.0 ** -15


def crit(n, title):
    return pytest.mark.criterion(n, title)


# -- 1 ------------------------------------------------------------------------

@crit(1, "distributed decryption correctness")
@pytest.mark.parametrize("k", [2, 4, 8])
def test_distdec_correct(k):
    params, keys, enc = demo_keys(N, k, ALPHA, seed=k)
    for g in range(10):
        mu = enc.bits(1000)
        ct = tlwe.encrypt_joint(mu, keys, params, enc)
        res = distdec.distributed_decrypt(ct, keys, seed=100 * k + g, session=g)
        assert np.array_equal(res.bits, mu)
        assert np.array_equal(res.bits, tlwe.decrypt_naive(ct, keys))
        assert not res.out_of_band.any()


# -- 2 ------------------------------------------------------------------------

_E = [1 / 32, 1 / 16, 3 / 32, 1 / 8 - 2 ** -12, 1 / 8 + 2 ** -12, 3 / 16]
# An error of 1/8 or more towards the other message lands inside that
# message's band; nothing in the phase distinguishes it from a clean sample.
_BLIND = {(0, 1 / 8 + 2 ** -12), (0, 3 / 16), (1, -(1 / 8 + 2 ** -12)), (1, -3 / 16)}


def _noise_cases():
    for mu in (0, 1):
        for mag in _E:
            for e in (mag, -mag):
                marks = [pytest.mark.xfail(strict=True, reason="error crosses into the other "
                                           "message's band")] if (mu, e) in _BLIND else []
                yield pytest.param(mu, e, marks=marks, id=f"mu{mu}-e{e:+.6f}")


def _with_exact_error(mu, e, k=3):
    params, keys, enc = demo_keys(64, k, ALPHA, seed=5)
    bits = np.full(8, mu, dtype=np.uint8)
    ct = tlwe.encrypt_joint(bits, keys, params, enc)
    # replace the sampled noise by exactly e
    drift = tlwe.phase(ct, keys) - np.uint32(mu * QUARTER)
    b = (ct.b - drift + torus_from_real(e)).astype(np.uint32)
    ct = tlwe.MKCiphertext(ct.a, b, ct.parties)
    want = (np.array([mu * QUARTER], dtype=np.uint32) + torus_from_real(e)).astype(np.uint32)
    assert np.all(tlwe.phase(ct, keys) == want)
    return ct, keys


@crit(2, "noise threshold")
@pytest.mark.parametrize("mu,e", list(_noise_cases()))
def test_noise_threshold(mu, e):
    ct, keys = _with_exact_error(mu, e)
    res = distdec.distributed_decrypt(ct, keys, seed=3)
    naive, naive_flag = tlwe.decrypt_naive(ct, keys, return_flag=True)
    assert np.array_equal(res.bits, naive) and np.array_equal(res.out_of_band, naive_flag)
    if abs(e) < 1 / 8:
        assert np.all(res.bits == mu)
        assert not res.out_of_band.any()
    else:
        assert res.out_of_band.all()


# -- 3 ------------------------------------------------------------------------

def _all_pairs(l):
    v = np.arange(-2 ** (l - 1), 2 ** (l - 1))
    a, b = np.meshgrid(v, v, indexing="ij")
    return a.ravel(), b.ravel()


@crit(3, "circuit oracle equivalence")
@pytest.mark.parametrize("op", ["add", "sub"])
def test_add_sub_exhaustive(op):
    be = ClearBackend()
    a, b = _all_pairs(8)
    assert a.size == 65536
    f = C.mk_add if op == "add" else C.mk_sub
    got = f(C.mk_enc_word(a, 8, be), C.mk_enc_word(b, 8, be)).decode()
    ref = a + b if op == "add" else a - b
    assert np.array_equal(got, (ref + 128) % 256 - 128)


@crit(3, "circuit oracle equivalence")
def test_mul_random():
    be = ClearBackend()
    rng = np.random.default_rng(3)
    a, b = rng.integers(-2 ** 15, 2 ** 15, (2, 10 ** 4))
    got = C.mk_mul(C.mk_enc_word(a, 16, be), C.mk_enc_word(b, 16, be)).decode()
    assert np.array_equal(got, a * b)


@crit(3, "circuit oracle equivalence")
def test_div_exhaustive():
    be = ClearBackend()
    a = np.arange(-2 ** 9, 2 ** 9)
    b = np.arange(-2 ** 4, 2 ** 4)
    A, B = (x.ravel() for x in np.meshgrid(a, b, indexing="ij"))
    got = C.mk_div(C.mk_enc_word(A, 10, be), C.mk_enc_word(B, 5, be)).decode()
    # independent oracle: Python integer division truncated toward zero, mod 2^5
    ref = []
    for x, y in zip(A.tolist(), B.tolist()):
        if y == 0:
            ref.append(-1)
            continue
        qt = abs(x) // abs(y) * (1 if (x < 0) == (y < 0) else -1)
        ref.append((qt + 16) % 32 - 16)
    assert np.array_equal(got, ref)


@crit(3, "circuit oracle equivalence")
def test_compare_quads_exhaustive():
    be = ClearBackend()
    v = np.arange(-32, 32)
    a, b = _all_pairs(6)
    rng = np.random.default_rng(6)
    c, d = rng.choice(v, (2, a.size))
    got = C.compare_quads(*(C.mk_enc_word(x, 6, be) for x in (a, b, c, d))).decode()
    assert np.array_equal(got, [dd if aa >= bb else cc for aa, bb, cc, dd in zip(a, b, c, d)])
    # both branches for every (a, b): swapping c and d flips every selection
    got2 = C.compare_quads(*(C.mk_enc_word(x, 6, be) for x in (a, b, d, c))).decode()
    assert np.array_equal(np.where(a >= b, c, d), got2)


# -- 4 ------------------------------------------------------------------------

PROGRAMS = 1000
_OPS = ["gates", "add", "sub", "mul", "div", "compare_quads", "act_g"]


def _enc_mixed(be, values, l, owners):
    """Encrypt lane ``i`` under party ``owners[i]``."""
    w1, w2 = C.mk_enc_word(values, l, be, party=1), C.mk_enc_word(values, l, be, party=2)
    if isinstance(be, ClearBackend):
        return w1
    sel = (np.asarray(owners) == 1)[..., None]
    return C.EncWord(EncBit(be, np.where(sel, x.data, y.data)) for x, y in zip(w1.bits, w2.bits))


def _word_program(be, op, rng_state, depth, lanes):
    """Chain ``depth`` applications of ``op``; each step takes the previous
    result and a fresh operand owned by a random party."""
    rng = np.random.default_rng(rng_state)
    l = 6
    lo, hi = -2 ** (l - 1), 2 ** (l - 1)
    fresh = lambda w=l: _enc_mixed(be, rng.integers(-2 ** (w - 1), 2 ** (w - 1), lanes), w,  # noqa: E731
                                   rng.integers(1, 3, lanes))
    x = fresh()
    outs = []
    for _ in range(depth):
        if op == "add":
            x = C.mk_add(x, fresh())
        elif op == "sub":
            x = C.mk_sub(fresh(), x)
        elif op == "mul":
            x = C.narrow(C.mk_mul(x, fresh()), l)
        elif op == "div":
            x = C.mk_div(C.mk_mul(x, fresh()), fresh())
        elif op == "compare_quads":
            roles = [x, fresh(), fresh(), fresh()]
            perm = rng.permutation(4)
            x = C.compare_quads(*(roles[i] for i in perm))
        elif op == "act_g":
            x = act.act_g(C.add_const(x, int(rng.integers(lo, hi))))
        outs.append(x.decode())
    return outs


def _gate_program(be, seed, steps, lanes):
    rng = np.random.default_rng(seed)
    init = rng.integers(0, 2, (3, lanes))
    regs = [be.encrypt(b, party=1 + i % 2) for i, b in enumerate(init)]
    for _ in range(steps):
        kind = ["AND", "OR", "XOR", "NAND", "NOT"][rng.integers(5)]
        i, j = rng.integers(len(regs), size=2)
        regs.append(~regs[i] if kind == "NOT" else be.gate(kind, regs[i], regs[j]))
    return [r.decrypt() for r in regs]


@crit(4, "backend transparency")
@pytest.mark.parametrize("op", _OPS)
def test_backend_transparency(op):
    rng = np.random.default_rng(_OPS.index(op))
    be_n = make_backend("noisesim", n=16, k=2, alpha=2.0 ** -25, seed=11)
    be_c = ClearBackend()
    mismatches = programs = 0
    if op == "gates":
        # distinct random gate programs, each over 8 lanes of data
        for p in range(PROGRAMS):
            steps = int(rng.integers(1, 16))
            a = _gate_program(be_c, p, steps, 8)
            b = _gate_program(be_n, p, steps, 8)
            mismatches += sum(not np.array_equal(x, y) for x, y in zip(a, b))
            programs += 1
    else:
        # programs of equal depth run side by side as lanes; each program
        # still draws its own operands and key owners
        depth = rng.integers(1, 4, PROGRAMS)
        for d in (1, 2, 3):
            lanes = int(np.sum(depth == d))
            seed = int(rng.integers(2 ** 31))
            a = _word_program(be_c, op, seed, d, lanes)
            b = _word_program(be_n, op, seed, d, lanes)
            mismatches += sum(int(np.sum(x != y)) for x, y in zip(a, b))
            programs += lanes
    assert programs == PROGRAMS
    assert mismatches == 0


# -- 5 ------------------------------------------------------------------------

@crit(5, "activation cost ratio")
@pytest.mark.parametrize("order,lo,hi", [(7, 5, 20), (3, 2, 10)])
def test_activation_cost_ratio(order, lo, hi):
    g = act.gate_cost("g", 16, ClearBackend())["bootstrapped"]
    t = act.gate_cost(f"taylor{order}", 16, ClearBackend())["bootstrapped"]
    again = act.gate_cost(f"taylor{order}", 16, ClearBackend())["bootstrapped"]
    assert t == again
    assert lo <= t / g <= hi


# -- 6 ------------------------------------------------------------------------

@crit(6, "activation correctness")
def test_act_g_exhaustive():
    x = np.arange(-128, 128)
    out = act.act_g(C.mk_enc_word(x, 8, ClearBackend())).decode()
    ref = [min(max(4 * v + 8, 0), 16) for v in x.tolist()]
    assert np.array_equal(out, ref)
    assert out[x == -2][0] == 0 and out[x == 2][0] == 16


# -- 7 ------------------------------------------------------------------------

def _lr_accuracy(kind, mode):
    X, y = D.make_synthetic()
    cfg = T.ScaleConfig(q=64, alpha=1, width=16, rounding="floor")
    if mode == "float":
        Xf = D.add_bias(X, 1.0)
    else:
        Xf = D.add_bias(D.preprocess(X, "rounding", width=16).X)
    model = T.train_lr(Xf, y, cfg, kind, mode, iters=40)
    return 100 * float((T.predict_lr(model, Xf) == y).mean())


@crit(7, "LR accuracy ordering")
def test_lr_ordering():
    g, t3, t7 = (_lr_accuracy(k, "int") for k in ("g", "taylor3", "taylor7"))
    print(f"LR int accuracy: g={g:.1f} taylor3={t3:.1f} taylor7={t7:.1f}")
    assert t7 >= g >= t3 + 5
    assert t7 - g <= 6


@crit(7, "LR accuracy ordering")
def test_lr_float_baseline():
    assert _lr_accuracy("sigmoid", "float") >= 93


# -- 8 ------------------------------------------------------------------------

_WIDTHS = [dict(q=16, width=16), dict(q=64, width=20)]


@crit(8, "no accuracy loss under encryption")
@pytest.mark.parametrize("seed", [1, 2, 3])
@pytest.mark.parametrize("widths", _WIDTHS, ids=["q16w16", "q64w20"])
def test_lr_enc_matches_int(seed, widths):
    X, y = D.make_synthetic(samples=8, seed=seed)
    Xf = D.add_bias(D.preprocess(X, "rounding", width=widths["width"]).X)
    cfg = T.ScaleConfig(alpha=4, rounding="floor", **widths)
    for kind in ("g", "taylor7"):
        be = ClearBackend()
        enc = T.train_lr(Xf, y, cfg, kind, "enc", iters=3, backend=be)
        ref = T.train_lr(Xf, y, cfg, kind, "int", iters=3)
        assert len(enc.history) == len(ref.history) == 3
        for a, b in zip(enc.history, ref.history):
            assert np.array_equal(a, b)
        assert np.array_equal(T.predict_lr(enc, Xf, backend=be), T.predict_lr(ref, Xf))


@crit(8, "no accuracy loss under encryption")
@pytest.mark.parametrize("seed", [1, 2, 3])
@pytest.mark.parametrize("widths", _WIDTHS, ids=["q16w16", "q64w20"])
def test_nn_enc_matches_int(seed, widths):
    q = widths["q"]
    X, y = D.load_iris()
    Xtr, _, ytr, _ = D.split_half(X, y, seed)
    Z = (Xtr - Xtr.mean(0)) / Xtr.std(0)
    idx = np.random.default_rng(seed).choice(len(Z), 3, replace=False)
    tr = D.add_bias(D.preprocess(Z[idx], "zoom", q, widths["width"]).X, q)
    Y = D.one_hot(ytr[idx], 3)
    cfg = T.ScaleConfig(alpha1=q // 4, alpha2=q // 4, beta1=q // 2, beta2=q // 2,
                        rounding="nearest", **widths)
    enc = T.train_nn(tr, Y, cfg, 2, "g", "enc", 1, seed=seed, backend=ClearBackend(), track="step")
    ref = T.train_nn(tr, Y, cfg, 2, "g", "int", 1, seed=seed, track="step")
    assert len(enc.history) == len(ref.history) == 3
    for se, sr in zip(enc.history, ref.history):
        for a, b in zip(se, sr):
            assert np.array_equal(a, b)


# -- 9 ------------------------------------------------------------------------

def _iris_accuracy(kind, mode):
    X, y = D.load_iris()
    Xtr, Xte, ytr, yte = D.split_half(X, y, 0)
    assert len(Xtr) == len(Xte) == 75
    mu, sd = Xtr.mean(0), Xtr.std(0)
    q = 256
    cfg = T.ScaleConfig(q=q, alpha1=16, alpha2=16, beta1=192, beta2=192, width=20,
                        rounding="nearest")
    if mode == "float":
        prep = lambda A: D.add_bias((A - mu) / sd, 1.0)  # noqa: E731
    else:
        prep = lambda A: D.add_bias(D.preprocess((A - mu) / sd, "zoom", q, 20).X, q)  # noqa: E731
    model = T.train_nn(prep(Xtr), D.one_hot(ytr, 3), cfg, 6, kind, mode, 40, seed=1, track="none")
    return 100 * float((T.predict_nn(model, prep(Xte)) == yte).mean())


@crit(9, "NN on Iris")
def test_nn_iris():
    g = _iris_accuracy("g", "int")
    t3 = _iris_accuracy("taylor3", "int")
    t7f = _iris_accuracy("taylor7", "float")
    print(f"Iris test accuracy: int g={g:.2f} int taylor3={t3:.2f} float taylor7={t7f:.2f}")
    assert g >= 90
    assert abs(g - t7f) <= 3.5
    assert t3 < g


# -- 10 -----------------------------------------------------------------------

@crit(10, "protocol structure")
@pytest.mark.parametrize("k", [2, 4])
def test_protocol_structure(k):
    params, keys, enc = demo_keys(64, k, ALPHA, seed=9)
    ct = tlwe.encrypt_joint(enc.bits(50), keys, params, enc)
    res = distdec.distributed_decrypt(ct, keys, seed=2)
    t = res.transcript
    assert t.verify()
    servers = {SERVER0, SERVER1}
    # servers only speak after all shares are in, and then only to participants
    last_share = max(i for i, e in enumerate(t.entries) if e.msg_type == MsgType.SHAREBATCH)
    assert not [e for e in t.entries if e.sender in servers and e.receiver in servers]
    assert all(e.sender not in servers for e in t.entries[:last_share + 1])
    assert len(t) == 2 * k + 2 * k
    assert t.count(MsgType.SHAREBATCH) == 2 * k and t.count(MsgType.RESULTSHARE) == 2 * k
    # no raw partial decryption in any frame: hash the payloads a leaking
    # participant would have sent and look for them in the transcript
    seen = t.payload_hashes()
    for sk in keys:
        p = np.ravel(tlwe.part_dec(ct, sk).p)
        leaked = [p.astype("<u4").tobytes()]
        for holder in (SERVER0, SERVER1):
            leaked.append(wire.encode_share_batch(sk.party_index, holder, p))
        assert not {hashlib.sha256(x).hexdigest() for x in leaked} & seen
