"""1-D convolutional reduction of a long observation window to a few features."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError, StateError
from .numerics import SeededRng


@dataclass(frozen=True)
class ConvLayer:
    kernel: int
    channels: int
    stride: int = 1

    @property
    def pad(self) -> int:
        return self.kernel // 2

    def out_length(self, n: int) -> int:
        return (n + 2 * self.pad - self.kernel) // self.stride + 1


@dataclass(frozen=True)
class ConvConfig:
    """Conv stack -> ReLU -> adaptive average pooling -> optional linear head.

    Without a head the pooled activations are the features, so
    ``output_width`` must equal ``channels * pool_bins`` of the last layer.
    """

    input_length: int
    layers: tuple[ConvLayer, ...] = field(default_factory=tuple)
    pool_bins: int = 4
    output_width: int = 3
    head: bool = True

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, ConvLayer) else ConvLayer(**l) for l in self.layers))
        if not self.layers:
            raise ParameterError("conv config needs at least one layer")
        n = self.input_length
        for layer in self.layers:
            if min(layer.kernel, layer.channels, layer.stride) < 1:
                raise ParameterError(f"invalid layer {layer}")
            n = layer.out_length(n)
            if n < 1:
                raise ParameterError(f"input length {self.input_length} too short for layers")
        if not 1 <= self.pool_bins <= n:
            raise ParameterError(f"pool_bins={self.pool_bins} must be in [1, {n}]")
        if not self.head and self.output_width != self.pooled_width:
            raise ParameterError(
                f"without a head output_width must be {self.pooled_width}, got {self.output_width}"
            )

    @property
    def lengths(self) -> list[int]:
        n = [self.input_length]
        for layer in self.layers:
            n.append(layer.out_length(n[-1]))
        return n

    @property
    def pooled_width(self) -> int:
        return self.layers[-1].channels * self.pool_bins

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ConvConfig":
        d = dict(d)
        d["layers"] = tuple(ConvLayer(**l) for l in d["layers"])
        return cls(**d)


def default_conv_config(input_length: int) -> ConvConfig:
    """Kernel 7 then 5, 8 channels, stride 2; 100 days -> 3 features, 365 -> 10."""
    layers = (ConvLayer(7, 8, 2), ConvLayer(5, 8, 2))
    n = input_length
    for layer in layers:
        n = layer.out_length(n)
    width = int(min(10, max(3, round(input_length / 36))))
    return ConvConfig(input_length, layers, pool_bins=min(4, n), output_width=width)


def init_conv_weights(cfg: ConvConfig, rng: SeededRng) -> dict[str, np.ndarray]:
    w = {}
    c_in = 1
    for k, layer in enumerate(cfg.layers):
        bound = 1.0 / np.sqrt(c_in * layer.kernel)
        w[f"K{k}"] = rng.uniform(-bound, bound, size=(layer.channels, c_in, layer.kernel))
        w[f"c{k}"] = np.zeros(layer.channels)
        c_in = layer.channels
    if cfg.head:
        bound = 1.0 / np.sqrt(cfg.pooled_width)
        w["W_head"] = rng.uniform(-bound, bound, size=(cfg.output_width, cfg.pooled_width))
        w["b_head"] = np.zeros(cfg.output_width)
    return w


def _pool_edges(n: int, bins: int) -> list[tuple[int, int]]:
    return [(i * n // bins, -((-(i + 1) * n) // bins)) for i in range(bins)]


@dataclass
class ConvCache:
    patches: list
    pre: list
    pooled: np.ndarray
    cfg: ConvConfig
    n_windows: int


def _patches(xp, k, stride, n_out):
    """``(M, n_out, k, C)`` view of channels-last padded input ``xp (M, n, C)``."""
    M, _, C = xp.shape
    s0, s1, s2 = xp.strides
    return np.lib.stride_tricks.as_strided(xp, (M, n_out, k, C), (s0, stride * s1, s1, s2), writeable=False)


def _kernel_matrix(K):
    """``(out, in, k)`` kernel as a ``(k * in, out)`` matrix matching patch rows."""
    o, c, k = K.shape
    return K.transpose(2, 1, 0).reshape(k * c, o)


def conv_forward(windows, w: dict, cfg: ConvConfig):
    """Features ``(M, output_width)`` for windows ``(M, input_length)``.

    Activations are kept channels-last so every layer is one matrix product.
    """
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != cfg.input_length:
        raise ShapeError(f"window length {x.shape[-1]}, expected {cfg.input_length}")
    M = x.shape[0]
    a = x[:, :, None]
    patches, pres = [], []
    lengths = cfg.lengths
    for k, layer in enumerate(cfg.layers):
        xp = np.pad(a, ((0, 0), (layer.pad, layer.pad), (0, 0)))
        n_out = lengths[k + 1]
        P = _patches(xp, layer.kernel, layer.stride, n_out).reshape(M * n_out, -1)
        pre = (P @ _kernel_matrix(w[f"K{k}"]) + w[f"c{k}"]).reshape(M, n_out, -1)
        patches.append(P)
        pres.append(pre)
        a = np.maximum(pre, 0.0)
    edges = _pool_edges(a.shape[1], cfg.pool_bins)
    # (M, C, bins) flattened channel-major
    pooled = np.stack([a[:, s:e, :].mean(axis=1) for s, e in edges], axis=2).reshape(M, -1)
    out = pooled @ w["W_head"].T + w["b_head"] if cfg.head else pooled
    return out, ConvCache(patches, pres, pooled, cfg, M)


def conv_backward(cache: ConvCache, w: dict, dout, input_grad: bool = True):
    """Returns ``(grads, d_windows)`` for upstream gradient ``dout (M, width)``.

    With ``input_grad=False`` the window gradient is skipped and returned as ``None``.
    """
    cfg = cache.cfg
    dout = np.asarray(dout, dtype=np.float64)
    if dout.ndim == 1:
        dout = dout[None, :]
    if dout.shape != (cache.n_windows, cfg.output_width):
        raise StateError(f"upstream gradient {dout.shape} does not match cached forward")
    if any(w[f"K{k}"].shape[0] != l.channels for k, l in enumerate(cfg.layers)):
        raise StateError("weights do not match the cached configuration")
    grads = {}
    M = cache.n_windows
    if cfg.head:
        grads["W_head"] = dout.T @ cache.pooled
        grads["b_head"] = dout.sum(axis=0)
        dpooled = dout @ w["W_head"]
    else:
        dpooled = dout
    C = cfg.layers[-1].channels
    dpooled = dpooled.reshape(M, C, cfg.pool_bins)
    lengths = cfg.lengths
    da = np.zeros((M, lengths[-1], C))
    for b, (s, e) in enumerate(_pool_edges(lengths[-1], cfg.pool_bins)):
        da[:, s:e, :] += dpooled[:, None, :, b] / (e - s)
    for k in range(len(cfg.layers) - 1, -1, -1):
        layer = cfg.layers[k]
        K = w[f"K{k}"]
        o, c_in, ker = K.shape
        n_out, n_in = lengths[k + 1], lengths[k]
        dpre = (da * (cache.pre[k] > 0)).reshape(M * n_out, o)
        grads[f"K{k}"] = (cache.patches[k].T @ dpre).reshape(ker, c_in, o).transpose(2, 1, 0)
        grads[f"c{k}"] = dpre.sum(axis=0)
        if k == 0 and not input_grad:
            return grads, None
        dP = (dpre @ _kernel_matrix(K).T).reshape(M, n_out, ker, c_in)
        dxp = np.zeros((M, n_in + 2 * layer.pad, c_in))
        span = layer.stride * (n_out - 1) + 1
        for r in range(ker):
            dxp[:, r : r + span : layer.stride, :] += dP[:, :, r, :]
        da = dxp[:, layer.pad : layer.pad + n_in, :]
    return grads, da[:, :, 0]
