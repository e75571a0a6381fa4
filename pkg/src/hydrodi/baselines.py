"""Reference forecasters: autoregression with exogenous forcings and a small ANN."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import PreparedDataset
from .errors import FitError, NumericError, ShapeError
from .integrate import DiScheme
from .numerics import SeededRng, make_rng
from .train import AdadeltaState, TrainConfig, adadelta_step, masked_rmse, model_inputs

log = logging.getLogger(__name__)


@dataclass
class ArModel:
    order: int
    alpha: np.ndarray  # lag coefficients, alpha[i] multiplies y[t - 1 - i]
    beta: np.ndarray  # forcing (and exogenous-model) coefficients
    intercept: float
    resid_var: float
    columns: list = field(default_factory=list)
    n_obs: int = 0


def ar_design(y, X=None, p: int = 1, exog=None):
    """Regression rows ``[1, y[t-1..t-p], X[t], exog[t]]`` for ``t >= p`` and targets ``y[t]``."""
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    X = np.zeros((n, 0)) if X is None else np.asarray(X, dtype=np.float64).reshape(n, -1)
    cols = [np.ones(n - p)]
    names = ["intercept"]
    for i in range(1, p + 1):
        cols.append(y[p - i : n - i])
        names.append(f"lag{i}")
    for j in range(X.shape[1]):
        cols.append(X[p:, j])
        names.append(f"x{j}")
    if exog is not None:
        cols.append(np.asarray(exog, dtype=np.float64)[p:])
        names.append("exog")
    return np.column_stack(cols), y[p:], names


def _collinear(D: np.ndarray, names) -> list[str]:
    kept, bad = [], []
    rank = 0
    for j in range(D.shape[1]):
        r = np.linalg.matrix_rank(D[:, kept + [j]])
        if r > rank:
            kept.append(j)
            rank = r
        else:
            bad.append(names[j])
    return bad


def _ols(D, target, names, p) -> ArModel:
    ok = np.all(np.isfinite(D), axis=1) & np.isfinite(target)
    D, target = D[ok], target[ok]
    if target.size <= D.shape[1]:
        raise FitError(f"{target.size} usable rows for {D.shape[1]} regressors")
    bad = _collinear(D, names)
    if bad:
        forcing_bad = [b for b in bad if not (b == "intercept" or b.startswith("lag"))]
        if forcing_bad:
            raise FitError(f"collinear regressor columns: {', '.join(forcing_bad)}")
        log.warning("lag columns %s are collinear with the intercept; using minimum-norm fit", bad)
    coef, *_ = np.linalg.lstsq(D, target, rcond=None)
    resid = target - D @ coef
    dof = max(target.size - D.shape[1], 1)
    return ArModel(p, coef[1 : p + 1].copy(), coef[p + 1 :].copy(), float(coef[0]),
                   float(resid @ resid / dof), names, int(target.size))


def fit_ar(y, X=None, p: int = 1, exog=None) -> ArModel:
    """Ordinary least squares fit of an AR(p) model with exogenous regressors.

    Rows with any missing value are dropped. Collinearity among the forcing
    or exogenous columns is an error; a degenerate lag/intercept pair (a
    constant series) falls back to the minimum-norm solution.
    """
    if p < 1:
        raise FitError("AR order must be >= 1")
    D, target, names = ar_design(y, X, p, exog)
    return _ols(D, target, names, p)


def predict_ar(model: ArModel, y_lags, x_t=None, exog_t=None) -> float:
    """``c + sum(alpha_i y[t-i]) + sum(beta_j x[j, t])``; missing lags count as zero."""
    lags = np.nan_to_num(np.asarray(y_lags, dtype=np.float64).ravel())
    if lags.size != model.order:
        raise ShapeError(f"need {model.order} lags, got {lags.size}")
    regs = [] if x_t is None else list(np.asarray(x_t, dtype=np.float64).ravel())
    if exog_t is not None:
        regs.append(float(exog_t))
    regs = np.asarray(regs)
    if regs.size != model.beta.size:
        raise ShapeError(f"need {model.beta.size} regressors, got {regs.size}")
    return float(model.intercept + model.alpha @ lags + model.beta @ regs)


def ar_forecast(model: ArModel, y, X=None, exog=None, start: int | None = None, stop: int | None = None):
    """One-step-ahead forecasts on ``[start, stop)`` from observed (zero-filled) lags."""
    y = np.nan_to_num(np.asarray(y, dtype=np.float64))
    n = y.size
    start = model.order if start is None else max(start, model.order)
    stop = n if stop is None else stop
    X = np.zeros((n, 0)) if X is None else np.asarray(X, dtype=np.float64).reshape(n, -1)
    t = np.arange(start, stop)
    lags = np.column_stack([y[t - i] for i in range(1, model.order + 1)])
    regs = X[t]
    if exog is not None:
        regs = np.column_stack([regs, np.asarray(exog, dtype=np.float64)[t]])
    return model.intercept + lags @ model.alpha + regs @ model.beta


def fit_ar_pooled(series, p: int = 1) -> ArModel:
    """One AR model over several basins; ``series`` is a list of ``(y, X, exog)``."""
    designs = [ar_design(y, X, p, exog) for y, X, exog in series]
    D = np.concatenate([d[0] for d in designs])
    target = np.concatenate([d[1] for d in designs])
    return _ols(D, target, designs[0][2], p)


# --- feedforward network ---------------------------------------------------------


@dataclass
class AnnModel:
    params: dict
    widths: tuple
    seed: int = 0
    history: list = field(default_factory=list)


def init_ann(n_in: int, widths, rng: SeededRng) -> dict:
    params = {}
    sizes = [n_in, *widths, 1]
    for k in range(len(sizes) - 1):
        bound = 1.0 / math.sqrt(sizes[k])
        params[f"W{k + 1}"] = rng.uniform(-bound, bound, size=(sizes[k + 1], sizes[k]))
        params[f"b{k + 1}"] = np.zeros(sizes[k + 1])
    return params


def ann_forward(params: dict, X):
    """``S_k = relu(W_k S_{k-1} + b_k)`` for the hidden layers, linear output."""
    S = np.asarray(X, dtype=np.float64)
    n_layers = len(params) // 2
    acts, pres = [S], []
    for k in range(1, n_layers + 1):
        pre = S @ params[f"W{k}"].T + params[f"b{k}"]
        pres.append(pre)
        S = np.maximum(pre, 0.0) if k < n_layers else pre
        acts.append(S)
    return S[:, 0], (acts, pres)


def ann_backward(params: dict, cache, dy) -> dict:
    acts, pres = cache
    n_layers = len(params) // 2
    grads = {}
    d = np.asarray(dy, dtype=np.float64).reshape(-1, 1)
    for k in range(n_layers, 0, -1):
        if k < n_layers:
            d = d * (pres[k - 1] > 0)
        grads[f"W{k}"] = d.T @ acts[k - 1]
        grads[f"b{k}"] = d.sum(axis=0)
        d = d @ params[f"W{k}"]
    return grads


ANN_SCHEME = DiScheme.parse("DI(1)")


def _ann_rows(ds: PreparedDataset, k: int, training: bool, start: int, stop: int):
    x, _ = model_inputs(ds, k, ANN_SCHEME, training, start, stop)
    return x


def ann_train(ds: PreparedDataset, cfg: TrainConfig, widths=(256, 256), seed: int | None = None) -> AnnModel:
    """Train on random (basin, training day) samples with the same inputs as DI(1).

    Each minibatch holds ``batch_size * rho`` days so one step sees as many
    targets as an LSTM step.
    """
    seed = cfg.seeds[0] if seed is None else seed
    rng = make_rng(seed)
    params = init_ann(ds.n_features + 1, widths, rng)
    model = AnnModel(params, tuple(widths), seed)
    pools = [(k, b.train) for k, b in enumerate(ds.basins) if b.train[1] > b.train[0]]
    rows = {k: _ann_rows(ds, k, True, 0, len(ds.basins[k].dates)) for k, _ in pools}
    state = AdadeltaState(decay=cfg.adadelta_rho, eps=cfg.adadelta_eps, lr=cfg.lr)
    n = cfg.batch_size * min(cfg.rho, 32)
    for epoch in range(cfg.epochs):
        losses = []
        for _ in range(cfg.batches_per_epoch):
            pick = rng.integers(len(pools), size=n)
            X, tgt = [], []
            for j in pick:
                k, (a, b) = pools[j]
                t = int(rng.integers(a, b))
                X.append(rows[k][t])
                tgt.append(ds.basins[k].target[t])
            X, tgt = np.array(X), np.array(tgt)
            mask = np.isfinite(tgt).astype(np.float64)
            y, cache = ann_forward(params, X)
            loss, skipped = masked_rmse(y, tgt, mask)
            if skipped:
                continue
            if not math.isfinite(loss):
                raise NumericError(f"ANN loss diverged in epoch {epoch}")
            d = np.where(mask > 0, y - np.nan_to_num(tgt), 0.0)
            dy = d / (mask.sum() * loss) if loss > 0 else np.zeros_like(d)
            adadelta_step(params, ann_backward(params, cache, dy), state)
            losses.append(loss)
        model.history.append(float(np.mean(losses)) if losses else 0.0)
    return model


def ann_predict(model: AnnModel, ds: PreparedDataset, k: int, start: int, stop: int) -> np.ndarray:
    """Native-unit one-step forecasts for basin ``k`` on ``[start, stop)``."""
    X = _ann_rows(ds, k, False, start, stop)
    y, _ = ann_forward(model.params, X)
    return ds.to_native(y, ds.basins[k])
