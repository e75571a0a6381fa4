import math

import numpy as np
import pytest

from hydrodi.acceptance import adadelta_first_step
from hydrodi.dataset import prepare_dataset
from hydrodi.errors import ConfigError, NumericError, ShapeError
from hydrodi.integrate import DiScheme
from hydrodi.numerics import make_rng
from hydrodi.train import (
    AdadeltaState,
    TrainConfig,
    adadelta_step,
    batch_loss_and_grad,
    ensemble_mean,
    forecast,
    masked_rmse,
    predict,
    sample_minibatch,
    train_model,
)

from conftest import split_periods

TINY = dict(batch_size=3, hidden_size=6, rho=30, epochs=3, batches_per_epoch=2, seeds=(0,))


def test_masked_rmse_examples():
    assert masked_rmse([1.0, 2.0], [1.0, 4.0], [1, 1]) == (pytest.approx(math.sqrt(2)), False)
    assert masked_rmse([1.0, 2.0], [1.0, np.nan], [1, 0]) == (0.0, False)
    assert masked_rmse([1.0], [np.nan], [0]) == (0.0, True)
    with pytest.raises(ShapeError):
        masked_rmse([1.0], [1.0, 2.0], [1, 1])


def test_batch_loss_gradient(rng):
    pred = rng.normal(size=(7, 3))
    target = rng.normal(size=(7, 3))
    mask = (rng.random((7, 3)) > 0.3).astype(float)
    mask[:, 2] = 0  # an instance with no targets is ignored
    loss, grad = batch_loss_and_grad(pred, target, mask)
    per = [masked_rmse(pred[:, j], target[:, j], mask[:, j])[0] for j in range(2)]
    assert loss == pytest.approx(np.mean(per))
    eps = 1e-6
    for idx in np.ndindex(pred.shape):
        p = pred.copy()
        p[idx] += eps
        up = batch_loss_and_grad(p, target, mask)[0]
        p[idx] -= 2 * eps
        dn = batch_loss_and_grad(p, target, mask)[0]
        assert (up - dn) / (2 * eps) == pytest.approx(grad[idx], abs=1e-8)


def test_adadelta_hand_example():
    assert adadelta_first_step() == pytest.approx(-1e-3 / math.sqrt(0.100001), abs=1e-12)


def test_adadelta_second_step_by_hand():
    params = {"x": np.zeros(1)}
    st = AdadeltaState(decay=0.9, eps=1e-6)
    adadelta_step(params, {"x": np.ones(1)}, st)
    dx1 = params["x"][0]
    adadelta_step(params, {"x": np.full(1, 0.5)}, st)
    eg = 0.9 * 0.1 + 0.1 * 0.25
    ed = 0.1 * dx1**2
    dx2 = -math.sqrt(ed + 1e-6) / math.sqrt(eg + 1e-6) * 0.5
    assert params["x"][0] == pytest.approx(dx1 + dx2, abs=1e-15)


def test_adadelta_rejects_nonfinite():
    with pytest.raises(NumericError):
        adadelta_step({"x": np.zeros(2)}, {"x": np.array([1.0, np.nan])}, AdadeltaState())


@pytest.mark.parametrize("kw", [{"batch_size": 0}, {"keep_prob": 0}, {"keep_prob": 1.2},
                                {"loss_space": "log"}, {"seeds": ()}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_minibatch_windows_stay_in_training_period(small_dataset):
    cfg = TrainConfig(**{**TINY, "batch_size": 16})
    batch = sample_minibatch(small_dataset, make_rng(0), cfg, DiScheme.parse("DI(1)"))
    assert batch.inputs.shape == (30, 16, small_dataset.n_features + 1)
    for k, s in zip(batch.basins, batch.starts):
        a, b = small_dataset.basins[k].train
        assert a <= s and s + 30 <= b


def test_training_is_deterministic(small_dataset):
    cfg = TrainConfig(**TINY)
    a = train_model(small_dataset, DiScheme.parse("DI(1)"), cfg)
    b = train_model(small_dataset, DiScheme.parse("DI(1)"), cfg)
    assert a.history == b.history
    for k in a.net.params:
        assert np.array_equal(a.net.params[k], b.net.params[k])


def test_test_period_discharge_never_used_in_training(small_records):
    recs, _ = small_records
    train, test = split_periods(recs[0].dates, 365)
    cfg = TrainConfig(**{**TINY, "keep_prob": 0.5})
    ref = train_model(prepare_dataset(recs, train, test), DiScheme.parse("DI(3)-A"), cfg)
    poisoned = []
    for r in recs:
        q = r.discharge.copy()
        q[365:] = 1e6
        poisoned.append(type(r)(r.basin_id, r.dates, r.forcing, q, r.attributes, r.sim, r.twsa, r.extra))
    got = train_model(prepare_dataset(poisoned, train, test), DiScheme.parse("DI(3)-A"), cfg)
    for k in ref.net.params:
        assert np.array_equal(ref.net.params[k], got.net.params[k])


def _train_rmse(model, ds):
    errs = []
    for k, b in enumerate(ds.basins):
        a, e = b.train
        d = predict(model, ds, k, a, e, warmup=0) - b.target[a:e]
        errs.append(d[np.isfinite(d)])
    return float(np.sqrt(np.mean(np.concatenate(errs) ** 2)))


def test_training_reduces_error(small_dataset):
    cfg = TrainConfig(batch_size=8, hidden_size=8, rho=60, epochs=80, batches_per_epoch=1, keep_prob=1.0, seeds=(0,))
    untrained = train_model(small_dataset, DiScheme.parse("DI(1)"), TrainConfig(**{**TINY, "hidden_size": 8, "epochs": 0}))
    trained = train_model(small_dataset, DiScheme.parse("DI(1)"), cfg)
    assert _train_rmse(trained, small_dataset) < 0.6 * _train_rmse(untrained, small_dataset)


def test_cnn_scheme_trains(small_dataset):
    m = train_model(small_dataset, DiScheme.parse("CNN-DI(1,20)"), TrainConfig(**TINY))
    assert m.net.conv_cfg is not None and all(np.isfinite(m.history))


def test_closed_loop_equals_open_loop_without_gaps(small_dataset):
    m = train_model(small_dataset, DiScheme.parse("DI(2)"), TrainConfig(**TINY))
    b = small_dataset.basins[0]
    a, e = b.test
    # pick a gap-free stretch of the test period
    ok = np.isfinite(b.target)
    start = next(t for t in range(a + 40, e - 60) if ok[t - 40 : t + 60].all())
    open_ = predict(m, small_dataset, 0, start, start + 60, warmup=40)
    closed = predict(m, small_dataset, 0, start, start + 60, warmup=40, closed_loop=True)
    assert np.allclose(open_, closed, atol=1e-10)


def test_forecast_native_units_and_ensemble(small_dataset):
    cfg = TrainConfig(**TINY)
    b = small_dataset.basins[1]
    a, e = b.test
    f = [forecast(train_model(small_dataset, DiScheme.parse("DI(1)"), cfg, seed=s), small_dataset, 1, a, e)
         for s in (0, 1)]
    assert f[0].shape == (e - a,) and np.all(f[0] >= 0)
    assert np.allclose(ensemble_mean(f), (f[0] + f[1]) / 2)
