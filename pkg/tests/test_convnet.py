import numpy as np
import pytest

from hydrodi.convnet import (
    ConvConfig,
    ConvLayer,
    _pool_edges,
    conv_backward,
    conv_forward,
    default_conv_config,
    init_conv_weights,
)
from hydrodi.errors import ParameterError, StateError


def reference_conv(windows, w, cfg):
    """Direct loops: zero-padded strided correlation, relu, adaptive mean pool, linear head."""
    out = []
    for series in windows:
        a = series[None, :]
        for li, layer in enumerate(cfg.layers):
            K, c = w[f"K{li}"], w[f"c{li}"]
            p = layer.pad
            padded = np.concatenate([np.zeros((a.shape[0], p)), a, np.zeros((a.shape[0], p))], axis=1)
            n_out = layer.out_length(a.shape[1])
            nxt = np.zeros((layer.channels, n_out))
            for ch in range(layer.channels):
                for j in range(n_out):
                    s = j * layer.stride
                    nxt[ch, j] = np.sum(K[ch] * padded[:, s : s + layer.kernel]) + c[ch]
            a = np.maximum(nxt, 0)
        n = a.shape[1]
        bins = cfg.pool_bins
        pooled = []
        for ch in range(a.shape[0]):
            for b in range(bins):
                lo = (b * n) // bins
                hi = -((-(b + 1) * n) // bins)
                pooled.append(a[ch, lo:hi].mean())
        feat = np.array(pooled)
        out.append(w["W_head"] @ feat + w["b_head"] if cfg.head else feat)
    return np.array(out)


def test_default_config_widths():
    assert default_conv_config(100).output_width == 3
    assert default_conv_config(365).output_width == 10
    assert default_conv_config(30).output_width == 3
    assert default_conv_config(100).lengths == [100, 50, 25]


def test_forward_matches_loops(rng):
    cfg = default_conv_config(37)
    w = init_conv_weights(cfg, rng)
    for v in w.values():
        v += 0.1 * rng.normal(size=v.shape)
    win = rng.normal(size=(5, 37))
    out, _ = conv_forward(win, w, cfg)
    assert np.allclose(out, reference_conv(win, w, cfg), atol=1e-12)


def test_headless_config(rng):
    cfg = ConvConfig(10, (ConvLayer(3, 2, 1),), pool_bins=2, output_width=4, head=False)
    w = init_conv_weights(cfg, rng)
    out, _ = conv_forward(rng.normal(size=(3, 10)), w, cfg)
    assert out.shape == (3, 4)
    with pytest.raises(ParameterError):
        ConvConfig(10, (ConvLayer(3, 2, 1),), pool_bins=2, output_width=3, head=False)


@pytest.mark.parametrize("kw", [
    {"input_length": 4, "layers": (ConvLayer(7, 8, 8), ConvLayer(5, 8, 8)), "pool_bins": 2},
    {"input_length": 10, "layers": ()},
    {"input_length": 10, "layers": (ConvLayer(3, 0, 1),)},
])
def test_invalid_configs(kw):
    with pytest.raises(ParameterError):
        ConvConfig(**kw)


def test_pool_edges_cover_everything():
    for n in range(1, 30):
        for bins in range(1, n + 1):
            edges = _pool_edges(n, bins)
            assert edges[0][0] == 0 and edges[-1][1] == n
            assert all(lo < hi for lo, hi in edges)


def test_config_dict_roundtrip():
    cfg = default_conv_config(99)
    assert ConvConfig.from_dict(cfg.to_dict()) == cfg


def test_backward_state_checks(rng):
    cfg = default_conv_config(20)
    w = init_conv_weights(cfg, rng)
    out, cache = conv_forward(rng.normal(size=(2, 20)), w, cfg)
    with pytest.raises(StateError):
        conv_backward(cache, w, np.ones((3, out.shape[1])))
