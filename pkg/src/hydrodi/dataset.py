"""Turn basin records into standardized model inputs and targets.

Everything that is fitted (scalers, category codes, per-basin mean
precipitation) uses the training period only, so test-period values can
change without changing the preprocessing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ATTRIBUTE_NAMES, CATEGORICAL, FORCING_NAMES, BasinRecord
from .errors import ConfigError, DataError
from .integrate import CNN_DI, DiScheme, assemble_series, fill_missing, lagged_matrix
from .preprocess import (
    NormalizationContext,
    ScalerStats,
    apply_scaler,
    dimensionless_to_discharge,
    discharge_to_dimensionless,
    fit_scaler,
    gamma_inverse,
    gamma_transform,
)

LOSS_SPACES = ("transformed", "physical")


def period_slice(dates: np.ndarray, period) -> tuple[int, int]:
    """Index range ``[i0, i1)`` of ``dates`` inside the inclusive ``(start, end)`` period."""
    start, end = (np.datetime64(p, "D") for p in period)
    if end < start:
        raise ConfigError(f"period ends before it starts: {period}")
    i0 = int(np.searchsorted(dates, start, side="left"))
    i1 = int(np.searchsorted(dates, end, side="right"))
    return i0, i1


@dataclass
class Preprocessing:
    """Fitted state needed to rebuild inputs for new data."""

    forcing: ScalerStats
    attributes: ScalerStats
    target: ScalerStats
    categories: dict
    mean_precip: dict  # basin_id -> training-period mean PRCP (mm/day)
    loss_space: str = "transformed"

    def to_dict(self) -> dict:
        return {
            "forcing": self.forcing.to_dict(),
            "attributes": self.attributes.to_dict(),
            "target": self.target.to_dict(),
            "categories": self.categories,
            "mean_precip": self.mean_precip,
            "loss_space": self.loss_space,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessing":
        return cls(
            ScalerStats.from_dict(d["forcing"]),
            ScalerStats.from_dict(d["attributes"]),
            ScalerStats.from_dict(d["target"]),
            d["categories"],
            d["mean_precip"],
            d.get("loss_space", "transformed"),
        )


@dataclass
class BasinData:
    basin_id: str
    dates: np.ndarray
    inputs: np.ndarray  # (T, n_features) standardized forcings + attributes
    target: np.ndarray  # (T,) in loss space, NaN where missing
    ctx: NormalizationContext
    q_native: np.ndarray
    train: tuple[int, int]
    test: tuple[int, int]
    record: BasinRecord | None = None
    _channels: dict = field(default_factory=dict, repr=False)

    def observations(self, training: bool) -> tuple[np.ndarray, np.ndarray]:
        """Zero-filled observation series and its presence mask.

        With ``training=True`` everything outside the training period is
        blanked, so training never touches other periods' discharge.
        """
        obs = self.target.copy()
        if training:
            a, b = self.train
            obs[:a] = np.nan
            obs[b:] = np.nan
        return fill_missing(obs)

    def channels(self, scheme: DiScheme, training: bool, cycle_anchor: int = 0):
        """``(y_p1 (T, p1), filled obs)`` for ``scheme``; cached."""
        key = (scheme, training, cycle_anchor)
        if key not in self._channels:
            obs, _ = self.observations(training)
            if scheme.variant == CNN_DI:
                # conv windows are gathered per batch instead of materialized here
                y1 = lagged_matrix(obs, range(scheme.p1, 0, -1))
            else:
                y1, _ = assemble_series(scheme, obs, cycle_anchor)
            self._channels[key] = (y1, obs)
        return self._channels[key]


@dataclass
class PreparedDataset:
    basins: list[BasinData]
    prep: Preprocessing
    feature_names: list[str]

    @property
    def loss_space(self) -> str:
        return self.prep.loss_space

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def index(self, basin_id: str) -> int:
        for k, b in enumerate(self.basins):
            if b.basin_id == basin_id:
                return k
        raise KeyError(basin_id)

    def to_target_space(self, q_native, basin: BasinData) -> np.ndarray:
        r = discharge_to_dimensionless(q_native, basin.ctx)
        if self.loss_space == "physical":
            return r
        z = gamma_transform(np.where(np.isfinite(r), np.maximum(r, 0.0), np.nan))
        return (z - self.prep.target.mean[0]) / self.prep.target.std[0]

    def to_native(self, pred, basin: BasinData) -> np.ndarray:
        pred = np.asarray(pred, dtype=np.float64)
        if self.loss_space == "physical":
            r = pred
        else:
            r = gamma_inverse(pred * self.prep.target.std[0] + self.prep.target.mean[0])
        return dimensionless_to_discharge(r, basin.ctx)


def _encode_attributes(records, categories) -> np.ndarray:
    rows = []
    for r in records:
        row = []
        for name in ATTRIBUTE_NAMES:
            v = r.attributes[name]
            if name in CATEGORICAL:
                cats = categories[name]
                row.append(float(cats.index(v)) if v in cats else float(len(cats)))
            else:
                row.append(float(v))
        rows.append(row)
    return np.array(rows, dtype=np.float64)


def _transformed_forcing(forcing: np.ndarray) -> np.ndarray:
    f = forcing.copy()
    f[:, 0] = gamma_transform(np.maximum(f[:, 0], 0.0))
    return f


def fit_preprocessing(records, train_period, loss_space: str = "transformed") -> Preprocessing:
    if loss_space not in LOSS_SPACES:
        raise ConfigError(f"loss_space must be one of {LOSS_SPACES}")
    categories = {
        name: sorted({str(r.attributes[name]) for r in records}) for name in CATEGORICAL
    }
    f_rows, t_vals, mean_precip = [], [], {}
    for r in records:
        a, b = period_slice(r.dates, train_period)
        if b - a < 1:
            raise DataError(f"basin {r.basin_id} has no data in the training period")
        mp = float(np.mean(r.forcing[a:b, 0]))
        mean_precip[r.basin_id] = mp
        f_rows.append(_transformed_forcing(r.forcing[a:b]))
        ctx = NormalizationContext(r.area, mp)
        dim = discharge_to_dimensionless(r.discharge[a:b], ctx)
        t_vals.append(dim[np.isfinite(dim)])
    forcing = fit_scaler(np.concatenate(f_rows), FORCING_NAMES, "training period")
    attrs = fit_scaler(_encode_attributes(records, categories), ATTRIBUTE_NAMES, "training basins")
    if loss_space == "transformed":
        t = gamma_transform(np.maximum(np.concatenate(t_vals), 0.0))
        target = fit_scaler(t[:, None], ["discharge"], "training period")
    else:
        target = ScalerStats(["discharge"], np.zeros(1), np.ones(1), "identity")
    return Preprocessing(forcing, attrs, target, categories, mean_precip, loss_space)


def prepare_dataset(records, train_period, test_period, loss_space: str = "transformed",
                    prep: Preprocessing | None = None) -> PreparedDataset:
    """Standardize records; ``prep`` reuses previously fitted preprocessing."""
    if prep is None:
        prep = fit_preprocessing(records, train_period, loss_space)
    attrs = apply_scaler(_encode_attributes(records, prep.categories), prep.attributes)
    features = prep.forcing.kept + prep.attributes.kept
    ds = PreparedDataset([], prep, features)
    for r, a_row in zip(records, attrs):
        f = apply_scaler(_transformed_forcing(r.forcing), prep.forcing)
        inputs = np.concatenate([f, np.broadcast_to(a_row, (len(r), a_row.size))], axis=1)
        mp = prep.mean_precip.get(r.basin_id)
        if mp is None:
            a, b = period_slice(r.dates, train_period)
            mp = float(np.mean(r.forcing[a:b, 0]))
        ctx = NormalizationContext(r.area, mp)
        basin = BasinData(
            r.basin_id, r.dates, np.ascontiguousarray(inputs), np.empty(0), ctx,
            r.discharge.copy(), period_slice(r.dates, train_period),
            period_slice(r.dates, test_period), r,
        )
        basin.target = ds.to_target_space(r.discharge, basin)
        ds.basins.append(basin)
    return ds
