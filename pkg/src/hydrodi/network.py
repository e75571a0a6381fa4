"""The trainable forecaster: LSTM plus the optional conv reduction unit.

All parameters live in one flat ``dict`` keyed ``lstm.<name>`` and
``conv.<name>`` so the optimizer and checkpoints treat them uniformly.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import convnet, lstm
from .convnet import ConvConfig
from .errors import StateError
from .numerics import SeededRng

CHECKPOINT_VERSION = 1


@dataclass
class Network:
    params: dict
    conv_cfg: ConvConfig | None = None

    @property
    def lstm_weights(self) -> lstm.LstmWeights:
        return lstm.LstmWeights(
            **{k[5:]: v for k, v in self.params.items() if k.startswith("lstm.")}
        )

    @property
    def conv_weights(self) -> dict:
        return {k[5:]: v for k, v in self.params.items() if k.startswith("conv.")}

    @property
    def hidden(self) -> int:
        return self.params["lstm.W_gh"].shape[0]

    @property
    def n_in(self) -> int:
        return self.params["lstm.W_I"].shape[1]

    def copy(self) -> "Network":
        return Network({k: v.copy() for k, v in self.params.items()}, self.conv_cfg)


def init_network(n_in: int, hidden: int, rng: SeededRng, conv_cfg: ConvConfig | None = None) -> Network:
    n_conv = conv_cfg.output_width if conv_cfg is not None else 0
    w = lstm.init_weights(n_in, hidden, rng, n_out=1, n_conv=n_conv)
    params = {f"lstm.{k}": v for k, v in w.items()}
    if conv_cfg is not None:
        params.update({f"conv.{k}": v for k, v in convnet.init_conv_weights(conv_cfg, rng).items()})
    return Network(params, conv_cfg)


@dataclass
class NetCache:
    lstm_cache: lstm.ForwardCache
    conv_cache: convnet.ConvCache | None
    T: int
    B: int


def net_forward(net: Network, inputs, windows=None, masks=None):
    """``inputs (T, B, n_in)``, ``windows (T, B, L)`` -> ``y (T, B)``."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 2:
        inputs = inputs[:, None, :]
        if windows is not None:
            windows = np.asarray(windows)[:, None, :]
    T, B = inputs.shape[:2]
    conv_cache = None
    feats = None
    if net.conv_cfg is not None:
        if windows is None:
            raise StateError("network has a conv unit but no observation windows were given")
        flat, conv_cache = convnet.conv_forward(
            np.asarray(windows, dtype=np.float64).reshape(T * B, -1), net.conv_weights, net.conv_cfg
        )
        feats = flat.reshape(T, B, -1)
    y, cache = lstm.forward(inputs, net.lstm_weights, masks, conv_features=feats)
    return y[..., 0], NetCache(cache, conv_cache, T, B)


def net_backward(net: Network, cache: NetCache, dy) -> dict:
    dy = np.asarray(dy, dtype=np.float64).reshape(cache.T, cache.B, 1)
    g, d_conv = lstm.backward(cache.lstm_cache, net.lstm_weights, dy)
    grads = {f"lstm.{k}": v for k, v in g.items()}
    if net.conv_cfg is not None:
        cg, _ = convnet.conv_backward(
            cache.conv_cache, net.conv_weights, d_conv.reshape(cache.T * cache.B, -1), input_grad=False
        )
        grads.update({f"conv.{k}": v for k, v in cg.items()})
    return grads


def save_network(net: Network, path, meta: dict | None = None) -> None:
    """npz archive: one float64 array per parameter plus a JSON ``__meta__`` entry.

    Each array is stored in the ``.npy`` layout (shape header followed by the
    row-major payload), so a save/load roundtrip is bit-exact.
    """
    info = {
        "version": CHECKPOINT_VERSION,
        "conv_cfg": net.conv_cfg.to_dict() if net.conv_cfg else None,
        "meta": meta or {},
    }
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.array(json.dumps(info, sort_keys=True)), **net.params)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def load_network(path) -> tuple[Network, dict]:
    with np.load(path, allow_pickle=False) as z:
        info = json.loads(str(z["__meta__"]))
        params = {k: z[k].copy() for k in z.files if k != "__meta__"}
    if info.get("version") != CHECKPOINT_VERSION:
        raise StateError(f"unsupported checkpoint version {info.get('version')}")
    cfg = ConvConfig.from_dict(info["conv_cfg"]) if info["conv_cfg"] else None
    return Network(params, cfg), info["meta"]
