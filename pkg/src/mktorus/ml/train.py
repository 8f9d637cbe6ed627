"""Scaled-integer training of logistic regression (BGD) and a one-hidden-layer
network (GDM), in three modes.

``float``
    real arithmetic with the real activation; the accuracy baseline.
``int``
    the exact integer schedule on numpy ``int64`` with explicit two's
    complement wraparound at every word boundary.
``enc``
    the same schedule as circuits over encrypted words.

Integer schedule conventions (``q = 2**s``):

* stored quantities are ``value * q`` in ``width``-bit words;
* every product is exact in ``2*width`` bits and is followed by an
  arithmetic right shift by ``s`` back into ``width`` bits;
* activations return ``16 * f(z)``; labels are stored as ``16*y`` (LR) or
  ``q*y`` (NN);
* the LR batch mean ``1/m`` is a restoring division by the public ``m``.

Int and enc modes are written independently; equality of their models at
every iteration is the no-loss property the tests check.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import activation as act
from .. import circuits as C
from ..backend import Backend

MODES = ("float", "int", "enc")


@dataclass(frozen=True)
class ScaleConfig:
    q: int = 16
    alpha: int = 4
    alpha1: int = 4
    alpha2: int = 4
    beta1: int = 8
    beta2: int = 8
    width: int = 16
    rounding: str = "floor"

    def __post_init__(self):
        if self.q < 2 or self.q & (self.q - 1):
            raise ValueError(f"q must be a power of two >= 2, got {self.q}")
        for name in ("alpha", "alpha1", "alpha2", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0 <= v <= self.q:
                raise ValueError(f"{name}={v} must lie in [0, q={self.q}]")
        if self.width < 8 or self.width > 31:
            raise ValueError(f"word width {self.width} outside [8, 31]")
        if self.rounding not in ("floor", "nearest"):
            raise ValueError(f"rounding must be 'floor' or 'nearest', got {self.rounding!r}")

    @property
    def shift(self) -> int:
        return self.q.bit_length() - 1

    @property
    def wide(self) -> int:
        return 2 * self.width

    def with_(self, **kw) -> ScaleConfig:
        return replace(self, **kw)


def _w(v, l):
    return C.wrap(v, l)


def shr_int(v, s: int, cfg: ScaleConfig, l_out: int | None = None):
    """Rescale of a ``2*width`` value: shift right by ``s``, floor or nearest."""
    if cfg.rounding == "nearest" and s:
        v = _w(v + (1 << (s - 1)), cfg.wide)
    return _w(v >> s, cfg.width if l_out is None else l_out)


def shr_enc(w: C.EncWord, s: int, cfg: ScaleConfig, l_out: int | None = None) -> C.EncWord:
    if cfg.rounding == "nearest" and s:
        w = C.add_const(w, 1 << (s - 1))
    return C.rescale(w, s, cfg.width if l_out is None else l_out)


# -- activations in the three modes ------------------------------------------

def activate_float(kind: str, z):
    """Real activation in [0, 1]-ish units."""
    if kind == "sigmoid":
        return act.sigmoid_clear(z)
    if kind == "g":
        return act.g_clear(z) / act.OUT_SCALE
    return act.taylor_clear(z, int(kind[-1]))


def activate_int(kind: str, z, cfg: ScaleConfig):
    """``16*f(z/q)`` for ``z`` stored at scale q."""
    if kind == "g":
        return act.g_int(shr_int(z, cfg.shift, cfg))
    if kind in ("taylor3", "taylor7"):
        return act.taylor_int(z, int(kind[-1]), cfg.width, frac_bits=cfg.shift)
    raise ValueError(f"activation {kind!r} has no integer form")


def activate_enc(kind: str, z: C.EncWord, cfg: ScaleConfig) -> C.EncWord:
    if kind == "g":
        return act.act_g(shr_enc(z, cfg.shift, cfg))
    if kind in ("taylor3", "taylor7"):
        return act.act_taylor(z, int(kind[-1]), frac_bits=cfg.shift)
    raise ValueError(f"activation {kind!r} has no circuit form")


def _out_to_q_int(h, cfg):
    d = cfg.shift - act.OUT_BITS
    return _w(h << d, cfg.width) if d >= 0 else h >> -d


def _out_to_q_enc(h, cfg):
    d = cfg.shift - act.OUT_BITS
    return C.shift_left_const(h, d) if d >= 0 else C.rescale(h, -d, cfg.width)


# -- logistic regression -----------------------------------------------------

@dataclass
class LRModel:
    theta: np.ndarray
    mode: str
    kind: str
    cfg: ScaleConfig
    history: list = field(default_factory=list)
    words: C.EncWord | None = None

    def coef(self) -> np.ndarray:
        return self.theta / self.cfg.q if self.mode != "float" else self.theta


def lr_forward_float(theta, X, kind):
    return activate_float(kind, X @ theta)


def lr_forward_int(theta, X, kind, cfg: ScaleConfig):
    """``h = 16*f(z)`` per sample."""
    acc = _w((theta[None, :] * X).sum(axis=1), cfg.wide)
    if kind == "g":
        return activate_int(kind, acc, cfg)
    return activate_int(kind, _w(acc, cfg.width), cfg)


def lr_step_int(theta, X, y16, kind, cfg: ScaleConfig):
    m = len(X)
    h = lr_forward_int(theta, X, kind, cfg)
    e = _w(h - y16, cfg.width)
    grad = _w((e[:, None] * X).sum(axis=0), cfg.wide)
    num = shr_int(_w(grad * cfg.alpha, cfg.wide), act.OUT_BITS, cfg, cfg.wide)
    delta = C.div_oracle(num, m, cfg.width)
    return _w(theta - delta, cfg.width)


def lr_forward_enc(theta_w: C.EncWord, X_w: C.EncWord, kind, cfg: ScaleConfig) -> C.EncWord:
    prod = C.mk_mul(theta_w, X_w)
    acc = C.sum_lanes(prod, axis=1)
    z = acc if kind == "g" else C.narrow(acc, cfg.width)
    return activate_enc(kind, z, cfg)


def lr_step_enc(theta_w, X_w, y16_w, kind, cfg: ScaleConfig):
    m = X_w.shape[0]
    be = theta_w.backend
    h = lr_forward_enc(theta_w, X_w, kind, cfg)
    e = C.mk_sub(h, y16_w)
    ex = C.mk_mul(e.reshape((m, 1)), X_w)
    grad = C.sum_lanes(ex, axis=0)
    num = shr_enc(C.mul_const(grad, cfg.alpha, cfg.wide), act.OUT_BITS, cfg, cfg.wide)
    delta = C.mk_div(num, C.trivial_word(m, cfg.width, be))
    return C.mk_sub(theta_w, delta)


def train_lr(X, y, cfg: ScaleConfig, kind: str = "g", mode: str = "int", iters: int = 20,
             backend: Backend | None = None, owners=None, track: bool = True) -> LRModel:
    """Full-batch gradient descent from zero coefficients.

    ``X`` must already contain the bias column. In ``int``/``enc`` modes it
    must be integral and fit ``cfg.width``.
    """
    y = np.asarray(y, dtype=np.int64)
    d = X.shape[1]
    if mode == "float":
        lr = cfg.alpha / cfg.q
        theta = np.zeros(d)
        hist = []
        for _ in range(iters):
            h = lr_forward_float(theta, X, kind)
            theta = theta - lr * ((h - y)[:, None] * X).mean(axis=0)
            if track:
                hist.append(theta.copy())
        return LRModel(theta, mode, kind, cfg, hist)
    X = np.asarray(X, dtype=np.int64)
    y16 = y * act.OUT_SCALE
    if mode == "int":
        theta = np.zeros(d, dtype=np.int64)
        hist = []
        for _ in range(iters):
            theta = lr_step_int(theta, X, y16, kind, cfg)
            if track:
                hist.append(theta.copy())
        return LRModel(theta, mode, kind, cfg, hist)
    if mode != "enc":
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if backend is None:
        raise ValueError("enc mode needs a backend")
    X_w = encrypt_rows(X, cfg.width, backend, owners)
    y_w = encrypt_rows(y16, cfg.width, backend, owners)
    theta_w = C.trivial_word(0, cfg.width, backend, (d,))
    hist = []
    for _ in range(iters):
        theta_w = lr_step_enc(theta_w, X_w, y_w, kind, cfg)
        if track:
            hist.append(C.decode_word(theta_w))
    return LRModel(np.asarray(C.decode_word(theta_w)), mode, kind, cfg, hist, words=theta_w)


def predict_lr(model: LRModel, X, backend: Backend | None = None) -> np.ndarray:
    """Class 1 iff the activation reaches the midpoint (0.5, or 8 at x16)."""
    if model.mode == "float":
        return (lr_forward_float(model.theta, X, model.kind) >= 0.5).astype(np.int64)
    X = np.asarray(X, dtype=np.int64)
    if model.mode == "enc" and backend is not None:
        h = C.decode_word(lr_forward_enc(model.words, encrypt_rows(X, model.cfg.width, backend),
                                         model.kind, model.cfg))
    else:
        h = lr_forward_int(model.theta, X, model.kind, model.cfg)
    return (np.asarray(h) >= act.OUT_SCALE // 2).astype(np.int64)


def lr_loss_float(theta, X, y) -> float:
    p = np.clip(act.sigmoid_clear(X @ theta), 1e-12, 1 - 1e-12)
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


def encrypt_rows(values, width: int, backend: Backend, owners=None) -> C.EncWord:
    """Encrypt an int array; row ``i`` under party ``owners[i]`` (default 1)."""
    values = np.asarray(values, dtype=np.int64)
    if owners is None:
        return C.mk_enc_word(values, width, backend)
    owners = np.asarray(owners)
    parts = [C.mk_enc_word(values[i:i + 1], width, backend, party=int(owners[i]))
             for i in range(len(values))]
    return C.concat_lanes(parts, axis=0)


# -- neural network ----------------------------------------------------------

@dataclass
class NNModel:
    W: np.ndarray
    V: np.ndarray
    dW: np.ndarray
    dV: np.ndarray
    mode: str
    kind: str
    cfg: ScaleConfig
    history: list = field(default_factory=list)
    words: dict | None = None

    @property
    def sizes(self) -> tuple[int, int, int]:
        n, m = self.W.shape
        return m, n, self.V.shape[0]

    def state(self) -> tuple[np.ndarray, ...]:
        return self.W, self.V, self.dW, self.dV


def init_nn(m: int, n: int, p: int, cfg: ScaleConfig, seed: int = 0):
    """Seeded integer weights in ``[-q/4, q/4]``; momenta zero.

    ``V`` has ``n + 1`` columns, the last one weighting a constant hidden
    unit that plays the output bias.
    """
    rng = np.random.default_rng(seed)
    lim = cfg.q // 4
    W = rng.integers(-lim, lim + 1, size=(n, m)).astype(np.int64)
    V = rng.integers(-lim, lim + 1, size=(p, n + 1)).astype(np.int64)
    return W, V, np.zeros_like(W), np.zeros_like(V)


def epoch_order(count: int, epoch: int, seed: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(count)


def nn_hidden_int(W, x, kind, cfg):
    a = shr_int(_w((W * x[None, :]).sum(axis=1), cfg.wide), cfg.shift, cfg)
    o = _out_to_q_int(activate_int(kind, a, cfg), cfg)
    return np.concatenate([o, [cfg.q]])


def nn_forward_int(W, V, x, kind, cfg):
    ob = nn_hidden_int(W, x, kind, cfg)
    yhat = shr_int(_w((V * ob[None, :]).sum(axis=1), cfg.wide), cfg.shift, cfg)
    return ob, yhat


def _momentum_int(prev, grad, beta, cfg):
    mix = _w(_w(prev * beta, cfg.wide) + _w(grad * (cfg.q - beta), cfg.wide), cfg.wide)
    return shr_int(mix, cfg.shift, cfg)


def nn_step_int(state, x, yq, kind, cfg: ScaleConfig):
    W, V, dW, dV = state
    s, l, L = cfg.shift, cfg.width, cfg.wide
    n = W.shape[0]
    ob, yhat = nn_forward_int(W, V, x, kind, cfg)
    o = ob[:n]
    d = _w(yhat - yq, l)
    gv = shr_int(_w(d[:, None] * ob[None, :], L), s, cfg)
    back = shr_int(_w((d[:, None] * V[:, :n]).sum(axis=0), L), s, cfg)
    deriv = shr_int(_w(o * _w(cfg.q - o, l), L), s, cfg)
    t = shr_int(_w(deriv * back, L), s, cfg)
    gw = shr_int(_w(t[:, None] * x[None, :], L), s, cfg)
    dV = _momentum_int(dV, gv, cfg.beta1, cfg)
    dW = _momentum_int(dW, gw, cfg.beta2, cfg)
    V = _w(V - shr_int(_w(dV * cfg.alpha1, L), s, cfg), l)
    W = _w(W - shr_int(_w(dW * cfg.alpha2, L), s, cfg), l)
    return W, V, dW, dV


def nn_step_float(state, x, y, kind, cfg: ScaleConfig):
    W, V, dW, dV = state
    n = W.shape[0]
    o = activate_float(kind, W @ x)
    ob = np.concatenate([o, [1.0]])
    yhat = V @ ob
    d = yhat - y
    gv = d[:, None] * ob[None, :]
    gw = (o * (1 - o) * (d @ V[:, :n]))[:, None] * x[None, :]
    b1, b2 = cfg.beta1 / cfg.q, cfg.beta2 / cfg.q
    dV = b1 * dV + (1 - b1) * gv
    dW = b2 * dW + (1 - b2) * gw
    return W - cfg.alpha2 / cfg.q * dW, V - cfg.alpha1 / cfg.q * dV, dW, dV


def _rows(w: C.EncWord, cfg) -> C.EncWord:
    return shr_enc(w, cfg.shift, cfg)


def _prod_rescale(a: C.EncWord, b: C.EncWord, cfg) -> C.EncWord:
    return _rows(C.mk_mul(a, b), cfg)


def nn_hidden_enc(W_w, x_w, kind, cfg):
    be = W_w.backend
    n, m = W_w.shape
    a = _rows(C.sum_lanes(C.mk_mul(W_w, x_w.reshape((1, m))), axis=1), cfg)
    o = _out_to_q_enc(activate_enc(kind, a, cfg), cfg)
    return C.concat_lanes([o, C.trivial_word(cfg.q, cfg.width, be, (1,))], axis=0)


def nn_forward_enc(W_w, V_w, x_w, kind, cfg):
    ob = nn_hidden_enc(W_w, x_w, kind, cfg)
    p, n1 = V_w.shape
    yhat = _rows(C.sum_lanes(C.mk_mul(V_w, ob.reshape((1, n1))), axis=1), cfg)
    return ob, yhat


def _momentum_enc(prev, grad, beta, cfg):
    mix = C.mk_add(C.mul_const(prev, beta, cfg.wide), C.mul_const(grad, cfg.q - beta, cfg.wide))
    return _rows(mix, cfg)


def nn_step_enc(state, x_w, yq_w, kind, cfg: ScaleConfig):
    W_w, V_w, dW_w, dV_w = state
    be = W_w.backend
    n, m = W_w.shape
    p = V_w.shape[0]
    ob, yhat = nn_forward_enc(W_w, V_w, x_w, kind, cfg)
    o = ob.take(np.arange(n), 0)
    d = C.mk_sub(yhat, yq_w)
    gv = _prod_rescale(d.reshape((p, 1)), ob.reshape((1, n + 1)), cfg)
    Vh = V_w.take(np.arange(n), 1)
    back = _rows(C.sum_lanes(C.mk_mul(d.reshape((p, 1)), Vh), axis=0), cfg)
    deriv = _prod_rescale(o, C.mk_sub(C.trivial_word(cfg.q, cfg.width, be), o), cfg)
    t = _prod_rescale(deriv, back, cfg)
    gw = _prod_rescale(t.reshape((n, 1)), x_w.reshape((1, m)), cfg)
    dV_w = _momentum_enc(dV_w, gv, cfg.beta1, cfg)
    dW_w = _momentum_enc(dW_w, gw, cfg.beta2, cfg)
    V_w = C.mk_sub(V_w, _rows(C.mul_const(dV_w, cfg.alpha1, cfg.wide), cfg))
    W_w = C.mk_sub(W_w, _rows(C.mul_const(dW_w, cfg.alpha2, cfg.wide), cfg))
    return W_w, V_w, dW_w, dV_w


def train_nn(X, Y, cfg: ScaleConfig, hidden: int = 4, kind: str = "g", mode: str = "int",
             epochs: int = 10, seed: int = 0, backend: Backend | None = None,
             track: str = "epoch") -> NNModel:
    """Per-sample GDM over ``epochs`` passes (order reshuffled each epoch).

    ``X`` is integer features at scale q (int/enc) or reals (float); ``Y`` is
    one-hot. ``track`` is ``"epoch"``, ``"step"`` or ``"none"``.
    """
    X = np.asarray(X)
    Y = np.asarray(Y, dtype=np.int64)
    m, p = X.shape[1], Y.shape[1]
    init = init_nn(m, hidden, p, cfg, seed)
    hist = []

    def record(state, decode):
        hist.append(tuple(np.array(decode(a)) for a in state))

    if mode == "float":
        state = tuple(a / cfg.q for a in init)
        for ep in range(epochs):
            for i in epoch_order(len(X), ep, seed):
                state = nn_step_float(state, X[i], Y[i], kind, cfg)
                if track == "step":
                    record(state, np.copy)
            if track == "epoch":
                record(state, np.copy)
        return NNModel(*state, mode, kind, cfg, hist)
    X = X.astype(np.int64)
    Yq = Y * cfg.q
    if mode == "int":
        state = init
        for ep in range(epochs):
            for i in epoch_order(len(X), ep, seed):
                state = nn_step_int(state, X[i], Yq[i], kind, cfg)
                if track == "step":
                    record(state, np.copy)
            if track == "epoch":
                record(state, np.copy)
        return NNModel(*state, mode, kind, cfg, hist)
    if mode != "enc":
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if backend is None:
        raise ValueError("enc mode needs a backend")
    X_w = C.mk_enc_word(X, cfg.width, backend)
    Y_w = C.mk_enc_word(Yq, cfg.width, backend)
    state = tuple(C.trivial_word(a, cfg.width, backend, a.shape) for a in init)
    for ep in range(epochs):
        for i in epoch_order(len(X), ep, seed):
            state = nn_step_enc(state, X_w.take(i, 0), Y_w.take(i, 0), kind, cfg)
            if track == "step":
                record(state, C.decode_word)
        if track == "epoch":
            record(state, C.decode_word)
    arrays = [np.asarray(C.decode_word(w)) for w in state]
    return NNModel(*arrays, mode, kind, cfg, hist,
                   words=dict(zip(("W", "V", "dW", "dV"), state)))


def nn_outputs(model: NNModel, X) -> np.ndarray:
    if model.mode == "float":
        o = activate_float(model.kind, X @ model.W.T)
        ob = np.hstack([o, np.ones((len(X), 1))])
        return ob @ model.V.T
    X = np.asarray(X, dtype=np.int64)
    return np.stack([nn_forward_int(model.W, model.V, x, model.kind, model.cfg)[1] for x in X])


def predict_nn(model: NNModel, X) -> np.ndarray:
    return np.argmax(nn_outputs(model, X), axis=1)
