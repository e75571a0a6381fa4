"""Single-layer LSTM with a ReLU input transform and constant dropout masks.

Arrays are time-major: inputs ``(T, B, n_in)``, outputs ``(T, B, n_out)``.
Weight matrices follow the column-vector convention ``W @ x`` so their
shapes read (out, in); batched products use ``x @ W.T``.

Dropout masks act on the gate pre-activation products only; the cell
update itself is never masked.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import NumericError, ShapeError, StateError
from .numerics import SeededRng, bernoulli_mask, sigmoid

GATES = ("g", "i", "f", "o")
MASK_KEYS = tuple(f"{g}{side}" for g in GATES for side in ("x", "h"))


@dataclass
class LstmWeights:
    W_I: np.ndarray
    b_I: np.ndarray
    W_gx: np.ndarray
    W_gh: np.ndarray
    b_g: np.ndarray
    W_ix: np.ndarray
    W_ih: np.ndarray
    b_i: np.ndarray
    W_fx: np.ndarray
    W_fh: np.ndarray
    b_f: np.ndarray
    W_ox: np.ndarray
    W_oh: np.ndarray
    b_o: np.ndarray
    W_hy: np.ndarray
    b_y: np.ndarray

    @property
    def hidden(self) -> int:
        return self.W_gh.shape[0]

    @property
    def n_in(self) -> int:
        return self.W_I.shape[1]

    @property
    def n_conv(self) -> int:
        return self.W_gx.shape[1] - self.W_I.shape[0]

    @property
    def n_out(self) -> int:
        return self.W_hy.shape[0]

    def names(self) -> list[str]:
        return [f.name for f in fields(self)]

    def items(self):
        return [(n, getattr(self, n)) for n in self.names()]

    def copy(self) -> "LstmWeights":
        return LstmWeights(**{n: a.copy() for n, a in self.items()})

    def zeros_like(self) -> "LstmWeights":
        return LstmWeights(**{n: np.zeros_like(a) for n, a in self.items()})

    def check(self):
        H, nx = self.hidden, self.W_gx.shape[1]
        expect = {
            "b_I": (self.W_I.shape[0],),
            "W_hy": (self.n_out, H),
            "b_y": (self.n_out,),
        }
        for g in GATES:
            expect[f"W_{g}x"] = (H, nx)
            expect[f"W_{g}h"] = (H, H)
            expect[f"b_{g}"] = (H,)
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if nx < self.W_I.shape[0]:
            raise ShapeError("gate input width smaller than the input transform width")
        for name, a in self.items():
            if not np.all(np.isfinite(a)):
                raise NumericError(f"non-finite entries in {name}")

    # stacked gate parameters, order g, i, f, o
    def stacked(self):
        Wx = np.concatenate([self.W_gx, self.W_ix, self.W_fx, self.W_ox])
        Wh = np.concatenate([self.W_gh, self.W_ih, self.W_fh, self.W_oh])
        b = np.concatenate([self.b_g, self.b_i, self.b_f, self.b_o])
        return Wx, Wh, b


def init_weights(
    n_in: int, hidden: int, rng: SeededRng, n_out: int = 1, n_conv: int = 0
) -> LstmWeights:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights and zero biases."""
    if min(n_in, hidden, n_out) < 1 or n_conv < 0:
        raise ShapeError("dimensions must be positive")
    bound = 1.0 / np.sqrt(hidden)
    nx = hidden + n_conv

    def u(*shape):
        return rng.uniform(-bound, bound, size=shape)

    kw = {"W_I": u(hidden, n_in), "b_I": np.zeros(hidden)}
    for g in GATES:
        kw[f"W_{g}x"] = u(hidden, nx)
        kw[f"W_{g}h"] = u(hidden, hidden)
        kw[f"b_{g}"] = np.zeros(hidden)
    kw["W_hy"] = u(n_out, hidden)
    kw["b_y"] = np.zeros(n_out)
    return LstmWeights(**kw)


DropoutMasks = dict  # MASK_KEYS -> (B, H) arrays


def make_masks(rng: SeededRng, batch: int, hidden: int, keep_prob: float) -> DropoutMasks:
    """One mask per masked product; each stays fixed for the whole sequence."""
    return {k: bernoulli_mask(rng, batch, hidden, keep_prob) for k in MASK_KEYS}


def _stack_masks(masks, B, H):
    if masks is None:
        return None, None
    for k in MASK_KEYS:
        if masks[k].shape != (B, H):
            raise ShapeError(f"mask {k} has shape {masks[k].shape}, expected {(B, H)}")
    mx = np.concatenate([masks[f"{g}x"] for g in GATES], axis=1)
    mh = np.concatenate([masks[f"{g}h"] for g in GATES], axis=1)
    return mx, mh


@dataclass
class ForwardCache:
    I: np.ndarray
    a: np.ndarray  # pre-ReLU input transform
    x: np.ndarray  # gate input: [relu(a), conv features]
    g: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    s: np.ndarray
    h: np.ndarray
    y: np.ndarray
    masks: DropoutMasks | None
    shapes: tuple


def _as_seq(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, None, :]
    if a.ndim != 3:
        raise ShapeError(f"{name} must be (T, B, n) or (T, n), got {a.shape}")
    return a


def forward(inputs, w: LstmWeights, masks: DropoutMasks | None = None, conv_features=None):
    """Run the network over a sequence from zero initial states.

    Returns ``(y, cache)`` with ``y`` of shape ``(T, B, n_out)``.
    """
    I = _as_seq(inputs, "inputs")
    T, B, n_in = I.shape
    H = w.hidden
    if n_in != w.n_in:
        raise ShapeError(f"inputs have {n_in} features, weights expect {w.n_in}")
    a = I @ w.W_I.T + w.b_I
    x = np.maximum(a, 0.0)
    if w.n_conv:
        if conv_features is None:
            raise ShapeError(f"weights expect {w.n_conv} conv features, none given")
        cf = _as_seq(conv_features, "conv_features")
        if cf.shape != (T, B, w.n_conv):
            raise ShapeError(f"conv features {cf.shape}, expected {(T, B, w.n_conv)}")
        x = np.concatenate([x, cf], axis=2)
    elif conv_features is not None and np.size(conv_features):
        raise ShapeError("conv features given but weights have no conv inputs")

    Wx, Wh, b = w.stacked()
    mx, mh = _stack_masks(masks, B, H)
    zx = x @ Wx.T
    if mx is not None:
        zx = zx * mx
    zx += b

    gates = np.empty((T, B, 4 * H))
    ss, hs = np.empty((T, B, H)), np.empty((T, B, H))
    h = np.zeros((B, H))
    s = np.zeros((B, H))
    WhT = Wh.T
    # sigmoid(x) = (1 + tanh(x / 2)) / 2, so one tanh call covers all four gates
    scale = np.concatenate([np.ones(H), np.full(3 * H, 0.5)])
    for t in range(T):
        zh = h @ WhT
        if mh is not None:
            zh *= mh
        z = np.tanh((zx[t] + zh) * scale)
        z[:, H:] += 1.0
        z[:, H:] *= 0.5
        gates[t] = z
        s = z[:, :H] * z[:, H : 2 * H] + s * z[:, 2 * H : 3 * H]
        h = np.tanh(s) * z[:, 3 * H :]
        ss[t], hs[t] = s, h
    gs, is_, fs, os_ = (gates[:, :, k * H : (k + 1) * H] for k in range(4))
    if not np.all(np.isfinite(ss)):
        bad = int(np.argmax(~np.all(np.isfinite(ss), axis=(1, 2))))
        raise NumericError(f"non-finite cell state at step {bad}")
    y = hs @ w.W_hy.T + w.b_y
    cache = ForwardCache(I, a, x, gs, is_, fs, os_, ss, hs, y, masks, (T, B, n_in, H, w.n_conv))
    return y, cache


def _outer_sum(a, b):
    """sum over (t, b) of outer(a[t, b], b[t, b]) as one BLAS product."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def backward(cache: ForwardCache, w: LstmWeights, dy, masks: DropoutMasks | None = None):
    """Backpropagation through time.

    Returns ``(grads, d_conv)``: ``grads`` mirrors ``w`` and ``d_conv`` is the
    gradient with respect to the conv features (``None`` without them).
    """
    T, B, n_in, H, n_conv = cache.shapes
    if (w.n_in, w.hidden, w.n_conv) != (n_in, H, n_conv):
        raise StateError("cache was produced with differently shaped weights")
    if masks is not None and masks is not cache.masks:
        same = cache.masks is not None and all(np.array_equal(masks[k], cache.masks[k]) for k in MASK_KEYS)
        if not same:
            raise StateError("masks differ from those used in the forward pass")
    dy = _as_seq(dy, "dy")
    if dy.shape != cache.y.shape:
        raise ShapeError(f"dy has shape {dy.shape}, expected {cache.y.shape}")

    Wx, Wh, _ = w.stacked()
    mx, mh = _stack_masks(cache.masks, B, H)
    grads = w.zeros_like()
    grads.W_hy = _outer_sum(dy, cache.h)
    grads.b_y = dy.sum(axis=(0, 1))
    dH = dy @ w.W_hy

    # step-local derivative factors, computed for all steps at once
    th = np.tanh(cache.s)
    s_prev = np.concatenate([np.zeros((1, B, H)), cache.s[:-1]])
    k_ds = cache.o * (1.0 - th * th)
    k_gif = np.stack(
        [cache.i * (1.0 - cache.g**2), cache.g * cache.i * (1.0 - cache.i),
         s_prev * cache.f * (1.0 - cache.f)], axis=2)
    k_o = th * cache.o * (1.0 - cache.o)

    dpre_all = np.empty((T, B, 4, H))
    dh_next = np.zeros((B, H))
    ds_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dH[t] + dh_next
        ds = dh * k_ds[t] + ds_next
        dpre = dpre_all[t]
        np.multiply(ds[:, None, :], k_gif[t], out=dpre[:, :3])
        np.multiply(dh, k_o[t], out=dpre[:, 3])
        ds_next = ds * cache.f[t]
        flat = dpre.reshape(B, 4 * H)
        dh_next = (flat * mh if mh is not None else flat) @ Wh
    dpre_all = dpre_all.reshape(T, B, 4 * H)
    # recurrent weight gradient needs h_{t-1}
    h_prev = np.concatenate([np.zeros((1, B, H)), cache.h[:-1]])
    dzh_all = dpre_all * mh if mh is not None else dpre_all
    dWh = _outer_sum(dzh_all, h_prev)
    dzx_all = dpre_all * mx if mx is not None else dpre_all
    dWx = _outer_sum(dzx_all, cache.x)
    db = dpre_all.sum(axis=(0, 1))
    dx = dzx_all @ Wx

    for k, gname in enumerate(GATES):
        sl = slice(k * H, (k + 1) * H)
        setattr(grads, f"W_{gname}x", dWx[sl])
        setattr(grads, f"W_{gname}h", dWh[sl])
        setattr(grads, f"b_{gname}", db[sl])
    nI = w.W_I.shape[0]
    da = dx[:, :, :nI] * (cache.a > 0)
    grads.W_I = _outer_sum(da, cache.I)
    grads.b_I = da.sum(axis=(0, 1))
    d_conv = dx[:, :, nI:] if n_conv else None
    return grads, d_conv


@dataclass
class LstmState:
    h: np.ndarray
    s: np.ndarray


def zero_state(batch: int, hidden: int) -> LstmState:
    return LstmState(np.zeros((batch, hidden)), np.zeros((batch, hidden)))


def step(I_t, state: LstmState, w: LstmWeights, conv_t=None):
    """One inference step (no dropout); used for closed-loop forecasting."""
    I_t = np.atleast_2d(np.asarray(I_t, dtype=np.float64))
    x = np.maximum(I_t @ w.W_I.T + w.b_I, 0.0)
    if w.n_conv:
        x = np.concatenate([x, np.atleast_2d(conv_t)], axis=1)
    Wx, Wh, b = w.stacked()
    H = w.hidden
    pre = x @ Wx.T + state.h @ Wh.T + b
    g = np.tanh(pre[:, :H])
    ifo = sigmoid(pre[:, H:])
    s = g * ifo[:, :H] + state.s * ifo[:, H : 2 * H]
    h = np.tanh(s) * ifo[:, 2 * H :]
    y = h @ w.W_hy.T + w.b_y
    return y, LstmState(h, s)
