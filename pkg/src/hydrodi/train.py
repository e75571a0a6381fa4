"""Masked-RMSE training with Adadelta on random basin windows, and forecasting."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import lstm
from .convnet import default_conv_config
from .dataset import LOSS_SPACES, PreparedDataset
from .errors import ConfigError, DataError, NumericError, ShapeError
from .integrate import CNN_DI, DiScheme, assemble_padded, gather_p2
from .network import Network, init_network, net_backward, net_forward
from .numerics import SeededRng, make_rng

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 100
    hidden_size: int = 256
    rho: int = 365
    epochs: int = 50
    batches_per_epoch: int = 50
    keep_prob: float = 0.5
    seeds: tuple = (0, 1, 2, 3, 4, 5)
    loss_space: str = "transformed"
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    lr: float = 1.0

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        for name in ("batch_size", "hidden_size", "rho", "batches_per_epoch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not 0 < self.keep_prob <= 1:
            raise ConfigError("keep_prob must be in (0, 1]")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.loss_space not in LOSS_SPACES:
            raise ConfigError(f"loss_space must be one of {LOSS_SPACES}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


# --- loss -------------------------------------------------------------------


def masked_rmse(pred, target, mask) -> tuple[float, bool]:
    """``sqrt(sum(mask (pred - target)^2) / sum(mask))``; returns ``(loss, skipped)``.

    An all-zero mask gives ``(0.0, True)``. Masked-out targets may be NaN.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if not pred.shape == target.shape == mask.shape:
        raise ShapeError(f"shapes differ: {pred.shape}, {target.shape}, {mask.shape}")
    n = mask.sum()
    if n == 0:
        return 0.0, True
    d = np.where(mask > 0, pred - np.nan_to_num(target), 0.0)
    return float(math.sqrt(np.sum(d * d) / n)), False


def batch_loss_and_grad(pred, target, mask):
    """Mean over instances (columns) of each instance's masked RMSE, and d/d pred."""
    mask = np.asarray(mask, dtype=np.float64)
    d = np.where(mask > 0, pred - np.nan_to_num(target), 0.0)
    n = mask.sum(axis=0)
    used = n > 0
    rmse = np.sqrt(np.sum(d * d, axis=0) / np.where(used, n, 1.0))
    k = max(int(used.sum()), 1)
    loss = float(rmse[used].sum() / k)
    scale = np.where(used & (rmse > 0), 1.0 / (k * np.where(n > 0, n, 1.0) * np.where(rmse > 0, rmse, 1.0)), 0.0)
    return loss, d * scale


# --- optimizer ----------------------------------------------------------------


@dataclass
class AdadeltaState:
    sq_grad: dict = field(default_factory=dict)
    sq_update: dict = field(default_factory=dict)
    decay: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0


def adadelta_step(params: dict, grads: dict, state: AdadeltaState) -> dict:
    """In-place Adadelta update; returns ``params``.

    ``E[g^2] <- r E[g^2] + (1-r) g^2``,
    ``dx = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g``,
    ``E[dx^2] <- r E[dx^2] + (1-r) dx^2``, ``x <- x + lr dx``.
    """
    r = state.decay
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
        eg = state.sq_grad.setdefault(name, np.zeros_like(p))
        ed = state.sq_update.setdefault(name, np.zeros_like(p))
        eg *= r
        eg += (1 - r) * g * g
        dx = -np.sqrt(ed + state.eps) / np.sqrt(eg + state.eps) * g
        ed *= r
        ed += (1 - r) * dx * dx
        p += state.lr * dx
    return params


# --- batches --------------------------------------------------------------------


@dataclass
class Batch:
    inputs: np.ndarray  # (rho, B, n_in)
    windows: np.ndarray | None  # (rho, B, N - p1) for CNN-DI
    target: np.ndarray  # (rho, B)
    mask: np.ndarray  # (rho, B)
    basins: np.ndarray
    starts: np.ndarray


def model_inputs(ds: PreparedDataset, k: int, scheme: DiScheme, training: bool, start: int, stop: int):
    """Network inputs and conv windows for basin ``k`` over steps ``[start, stop)``."""
    basin = ds.basins[k]
    y1, obs = basin.channels(scheme, training)
    x = np.concatenate([basin.inputs[start:stop], y1[start:stop]], axis=1)
    win = gather_p2(obs, scheme, np.arange(start, stop)) if scheme.variant == CNN_DI else None
    return x, win


def eligible_basins(ds: PreparedDataset, rho: int) -> list[int]:
    return [k for k, b in enumerate(ds.basins) if b.train[1] - b.train[0] >= rho]


def sample_minibatch(ds: PreparedDataset, rng: SeededRng, cfg: TrainConfig, scheme: DiScheme) -> Batch:
    """``batch_size`` windows of ``rho`` days, basin then start drawn uniformly."""
    pool = eligible_basins(ds, cfg.rho)
    if not pool:
        raise DataError(f"no basin has {cfg.rho} training days")
    B, rho = cfg.batch_size, cfg.rho
    basins = np.array([pool[i] for i in rng.integers(len(pool), size=B)])
    starts = np.empty(B, dtype=int)
    xs, ws, ts = [], [], []
    for j, k in enumerate(basins):
        a, b = ds.basins[k].train
        s = int(rng.integers(a, b - rho + 1))
        starts[j] = s
        x, w = model_inputs(ds, k, scheme, True, s, s + rho)
        xs.append(x)
        ws.append(w)
        ts.append(ds.basins[k].target[s : s + rho])
    target = np.stack(ts, axis=1)
    mask = np.isfinite(target).astype(np.float64)
    windows = np.stack(ws, axis=1) if scheme.variant == CNN_DI else None
    return Batch(np.stack(xs, axis=1), windows, np.where(mask > 0, target, 0.0), mask, basins, starts)


# --- training -------------------------------------------------------------------


@dataclass
class TrainedModel:
    net: Network
    scheme: DiScheme
    seed: int
    history: list = field(default_factory=list)


def build_network(ds: PreparedDataset, scheme: DiScheme, cfg: TrainConfig, rng: SeededRng) -> Network:
    conv = default_conv_config(scheme.p2_size) if scheme.variant == CNN_DI and scheme.p2_size else None
    return init_network(ds.n_features + scheme.p1_size, cfg.hidden_size, rng, conv)


def train_model(ds: PreparedDataset, scheme: DiScheme, cfg: TrainConfig, seed: int | None = None,
                net: Network | None = None, on_batch=None) -> TrainedModel:
    """Fit one network; fully determined by ``(ds, scheme, cfg, seed)``.

    ``on_batch(step, loss, net)`` is called before each update, while ``net``
    still holds the weights that produced ``loss``.
    """
    seed = cfg.seeds[0] if seed is None else seed
    rng = make_rng(seed)
    if net is None:
        net = build_network(ds, scheme, cfg, rng)
    state = AdadeltaState(decay=cfg.adadelta_rho, eps=cfg.adadelta_eps, lr=cfg.lr)
    model = TrainedModel(net, scheme, seed)
    for epoch in range(cfg.epochs):
        losses = []
        for _ in range(cfg.batches_per_epoch):
            batch = sample_minibatch(ds, rng, cfg, scheme)
            masks = (lstm.make_masks(rng, cfg.batch_size, net.hidden, cfg.keep_prob)
                     if cfg.keep_prob < 1 else None)
            y, cache = net_forward(net, batch.inputs, batch.windows, masks)
            loss, dy = batch_loss_and_grad(y, batch.target, batch.mask)
            if not math.isfinite(loss):
                err = NumericError(f"loss diverged in epoch {epoch}")
                err.history = model.history
                raise err
            if on_batch is not None:
                on_batch(len(model.history) * cfg.batches_per_epoch + len(losses), loss, net)
            adadelta_step(net.params, net_backward(net, cache, dy), state)
            losses.append(loss)
        model.history.append(float(np.mean(losses)))
        log.debug("%s seed %d epoch %d loss %.5f", scheme.tag, seed, epoch, model.history[-1])
    return model


def train_ensemble(ds: PreparedDataset, scheme: DiScheme, cfg: TrainConfig) -> list[TrainedModel]:
    return [train_model(ds, scheme, cfg, seed) for seed in cfg.seeds]


# --- forecasting -----------------------------------------------------------------


def predict(model: TrainedModel, ds: PreparedDataset, k: int, start: int, stop: int,
            warmup: int = 365, closed_loop: bool = False) -> np.ndarray:
    """Loss-space predictions for basin ``k`` on steps ``[start, stop)``.

    The network is spun up from ``start - warmup`` with zero states.
    Observation channels use every observation before each step; with
    ``closed_loop`` missing observations are replaced by the model's own
    earlier predictions instead of zeros.
    """
    s0 = max(0, start - warmup)
    scheme, net = model.scheme, model.net
    if not closed_loop or not scheme.uses_observations:
        x, w = model_inputs(ds, k, scheme, False, s0, stop)
        y, _ = net_forward(net, x, w)
        return y[start - s0 :, 0]
    basin = ds.basins[k]
    obs, present = basin.observations(False)
    work = obs.copy()
    w = net.lstm_weights
    state = lstm.zero_state(1, w.hidden)
    out = np.empty(stop - s0)
    for t in range(s0, stop):
        win = assemble_padded(scheme, work, t)
        x = np.concatenate([basin.inputs[t], win.y_p1])[None, :]
        conv = None
        if net.conv_cfg is not None:
            from .convnet import conv_forward

            conv, _ = conv_forward(win.y_p2[None, :], net.conv_weights, net.conv_cfg)
        y, state = lstm.step(x, state, w, conv)
        out[t - s0] = y[0, 0]
        if not present[t]:
            work[t] = y[0, 0]
    return out[start - s0 :]


def forecast(model: TrainedModel, ds: PreparedDataset, k: int, start: int, stop: int,
             warmup: int = 365, closed_loop: bool = False) -> np.ndarray:
    """Native-unit discharge forecast."""
    return ds.to_native(predict(model, ds, k, start, stop, warmup, closed_loop), ds.basins[k])


def ensemble_mean(forecasts) -> np.ndarray:
    return np.mean(np.stack([np.asarray(f, dtype=np.float64) for f in forecasts]), axis=0)


def ensemble_mean_forecast(models, ds: PreparedDataset, k: int, start: int, stop: int,
                           warmup: int = 365, closed_loop: bool = False) -> np.ndarray:
    """Members are averaged in physical units, after the inverse transform."""
    return ensemble_mean([forecast(m, ds, k, start, stop, warmup, closed_loop) for m in models])
