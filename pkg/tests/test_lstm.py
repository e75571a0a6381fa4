import numpy as np
import pytest

from hydrodi import lstm
from hydrodi.acceptance import _grad_errors, gradient_report
from hydrodi.errors import NumericError, ShapeError, StateError
from hydrodi.numerics import make_rng


def reference_forward(I, w, masks=None):
    """Step-by-step cell written from the gate equations, one gate at a time."""
    T, B, _ = I.shape
    H = w.hidden
    one = np.ones((B, H))
    m = masks or {k: one for k in lstm.MASK_KEYS}
    h, s = np.zeros((B, H)), np.zeros((B, H))
    sig = lambda z: 1 / (1 + np.exp(-z))
    ys = []
    for t in range(T):
        x = np.maximum(I[t] @ w.W_I.T + w.b_I, 0)
        g = np.tanh(m["gx"] * (x @ w.W_gx.T) + m["gh"] * (h @ w.W_gh.T) + w.b_g)
        i = sig(m["ix"] * (x @ w.W_ix.T) + m["ih"] * (h @ w.W_ih.T) + w.b_i)
        f = sig(m["fx"] * (x @ w.W_fx.T) + m["fh"] * (h @ w.W_fh.T) + w.b_f)
        o = sig(m["ox"] * (x @ w.W_ox.T) + m["oh"] * (h @ w.W_oh.T) + w.b_o)
        s = g * i + s * f
        h = np.tanh(s) * o
        ys.append(h @ w.W_hy.T + w.b_y)
    return np.stack(ys)


@pytest.fixture
def setup(rng):
    w = lstm.init_weights(3, 6, rng)
    for _, a in w.items():
        a += 0.2 * rng.normal(size=a.shape)
    return w, rng.normal(size=(9, 4, 3))


@pytest.mark.parametrize("keep", [1.0, 0.5])
def test_forward_matches_reference(setup, rng, keep):
    w, I = setup
    masks = lstm.make_masks(rng, 4, 6, keep) if keep < 1 else None
    y, _ = lstm.forward(I, w, masks)
    assert np.allclose(y, reference_forward(I, w, masks), atol=1e-12)


def test_step_matches_forward(setup):
    w, I = setup
    y, _ = lstm.forward(I, w)
    state = lstm.zero_state(4, 6)
    for t in range(I.shape[0]):
        yt, state = lstm.step(I[t], state, w)
        assert np.allclose(yt, y[t], atol=1e-12)


def test_zero_initial_state_and_causality(setup):
    w, I = setup
    y, _ = lstm.forward(I, w)
    J = I.copy()
    J[5:] += 10.0
    y2, _ = lstm.forward(J, w)
    assert np.array_equal(y[:5], y2[:5])
    assert not np.allclose(y[5:], y2[5:])


def test_init_ranges(rng):
    w = lstm.init_weights(5, 16, rng)
    for name, a in w.items():
        if name.startswith("b"):
            assert not a.any()
        else:
            assert np.abs(a).max() <= 0.25
    w.check()


def test_check_catches_bad_shapes(rng):
    w = lstm.init_weights(2, 4, rng)
    w.b_f = np.zeros(5)
    with pytest.raises(ShapeError):
        w.check()


def test_nonfinite_input_raises(setup):
    w, I = setup
    I = I.copy()
    I[3, 1, 0] = np.inf
    with pytest.raises(NumericError, match="step 3"):
        lstm.forward(I, w)


def test_backward_rejects_foreign_masks(setup, rng):
    w, I = setup
    masks = lstm.make_masks(rng, 4, 6, 0.5)
    y, cache = lstm.forward(I, w, masks)
    other = lstm.make_masks(rng, 4, 6, 0.5)
    with pytest.raises(StateError):
        lstm.backward(cache, w, np.ones_like(y), other)
    with pytest.raises(StateError):
        lstm.backward(cache, lstm.init_weights(3, 5, rng), np.ones_like(y))


def test_masks_fixed_over_sequence(rng):
    """With identical inputs at every step, the dropped units stay dropped."""
    w = lstm.init_weights(1, 8, rng)
    masks = lstm.make_masks(rng, 1, 8, 0.5)
    masks = {k: (v if k == "ox" else np.ones_like(v)) for k, v in masks.items()}
    w.b_o[:] = -50.0  # output gate shut unless the x-product survives
    w.W_ox[:] = 0.0
    _, cache = lstm.forward(np.ones((20, 1, 1)), w, masks)
    assert np.all(cache.o < 1e-15)


def test_gradients_small_network():
    rep = gradient_report(seed=1)
    for tag, (worst, bad) in rep.items():
        assert bad == 0, (tag, worst)


def test_gradients_with_conv_features(rng):
    w = lstm.init_weights(2, 3, rng, n_conv=2)
    I = rng.normal(size=(4, 2, 2))
    conv = rng.normal(size=(4, 2, 2))
    dy = rng.normal(size=(4, 2, 1))
    _, cache = lstm.forward(I, w, conv_features=conv)
    g, dconv = lstm.backward(cache, w, dy)
    params = dict(w.items())
    params["conv"] = conv
    grads = dict(g.items())
    grads["conv"] = dconv
    loss = lambda: float((lstm.forward(I, w, conv_features=conv)[0] * dy).sum())
    _, bad = _grad_errors(params, loss, grads)
    assert bad == 0
