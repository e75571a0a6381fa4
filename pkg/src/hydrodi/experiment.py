"""Experiment configuration and the train -> forecast -> evaluate pipeline.

An experiment directory holds::

    config.json             the resolved configuration
    preprocessing.json      fitted scalers and category codes
    checkpoints/            one file per ensemble member
    loss/<seed>.csv         epoch,loss
    forecasts/<basin>.csv   date,obs,ensemble,member_<seed>...   (test period)
    metrics.csv             one row per basin, ensemble-mean forecast
    metrics_members.csv     one row per (basin, member)
    aggregate.csv           medians and defined/undefined counts
    cdf/<metric>.csv        value,fraction
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, metrics
from .data import BasinRecord, ingest
from .dataset import PreparedDataset, Preprocessing, prepare_dataset
from .errors import ConfigError, DataError
from .integrate import DiScheme
from .network import load_network, save_network
from .synth import synth_generate
from .train import TrainConfig, TrainedModel, ensemble_mean, forecast, train_model

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PAPER_TRAIN = ("1985-10-01", "1995-09-30")
PAPER_TEST = ("1995-10-01", "2005-09-30")

_AR_RE = re.compile(r"^AR(B|BS)?\((\d+)\)$")


def model_kind(tag: str) -> tuple[str, int | DiScheme]:
    """``('lstm', scheme)``, ``('ar_basin' | 'ar_pooled' | 'ar_basin_sim', order)`` or ``('ann', 1)``."""
    t = tag.replace("_", "").replace("^", "").replace(" ", "")
    m = _AR_RE.match(t)
    if m:
        kind = {None: "ar_pooled", "B": "ar_basin", "BS": "ar_basin_sim"}[m.group(1)]
        return kind, int(m.group(2))
    if t.upper() == "ANN(1)":
        return "ann", 1
    return "lstm", DiScheme.parse(tag)


@dataclass
class ExperimentConfig:
    scheme: str = "projection"
    train_period: tuple = PAPER_TRAIN
    test_period: tuple = PAPER_TEST
    train: TrainConfig = field(default_factory=TrainConfig)
    basins: list | None = None
    data_root: str | None = None
    synthetic: dict | None = None
    out_dir: str = "runs/experiment"
    closed_loop: bool = False
    warmup: int = 365
    ar_space: str = "raw"
    ann_widths: tuple = (256, 256)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.train_period = tuple(self.train_period)
        self.test_period = tuple(self.test_period)
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        self.ann_widths = tuple(self.ann_widths)
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {self.schema_version}")
        model_kind(self.scheme)  # validates the tag
        tr = [np.datetime64(d, "D") for d in self.train_period]
        te = [np.datetime64(d, "D") for d in self.test_period]
        if tr[1] < tr[0] or te[1] < te[0]:
            raise ConfigError("periods must end after they start")
        if not (tr[1] < te[0] or te[1] < tr[0]):
            raise ConfigError("train and test periods overlap")
        if self.ar_space not in ("raw", "transformed"):
            raise ConfigError("ar_space must be 'raw' or 'transformed'")
        if self.data_root is None and self.synthetic is None:
            raise ConfigError("config needs data_root or synthetic")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        d["train_period"] = list(self.train_period)
        d["test_period"] = list(self.test_period)
        d["ann_widths"] = list(self.ann_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        train = dict(d.pop("train", {}))
        if "loss_space" in d:
            train["loss_space"] = d.pop("loss_space")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(train=TrainConfig(**train), **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return ExperimentConfig.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def load_records(cfg: ExperimentConfig) -> list[BasinRecord]:
    if cfg.data_root is not None:
        return ingest(cfg.data_root, cfg.basins)
    records, _ = synth_generate(**cfg.synthetic)
    if cfg.basins is not None:
        keep = set(map(str, cfg.basins))
        records = [r for r in records if r.basin_id in keep]
    return records


# --- small IO helpers --------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    return "NaN" if math.isnan(v) else repr(v)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing artifact {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


# --- stages -----------------------------------------------------------------------


def _dataset(cfg: ExperimentConfig, records, prep: Preprocessing | None = None) -> PreparedDataset:
    return prepare_dataset(records, cfg.train_period, cfg.test_period, cfg.train.loss_space, prep)


def _ar_series(ds: PreparedDataset, k: int, space: str, with_sim: bool):
    """Dimensionless (optionally transformed) discharge, raw forcings, optional simulation."""
    from .preprocess import discharge_to_dimensionless, gamma_transform

    b = ds.basins[k]
    y = discharge_to_dimensionless(b.q_native, b.ctx)
    X = b.record.forcing
    sim = None
    if with_sim:
        if b.record.sim is None:
            raise DataError(f"basin {b.basin_id} has no exogenous simulation for ARBS")
        sim = discharge_to_dimensionless(b.record.sim, b.ctx)
    if space == "transformed":
        y = gamma_transform(np.where(np.isfinite(y), np.maximum(y, 0), np.nan))
        if sim is not None:
            sim = gamma_transform(np.maximum(sim, 0))
    return y, X, sim


def _ar_back(pred, ds: PreparedDataset, k: int, space: str):
    from .preprocess import dimensionless_to_discharge, gamma_inverse

    r = gamma_inverse(pred) if space == "transformed" else pred
    return dimensionless_to_discharge(r, ds.basins[k].ctx)


def train_stage(cfg: ExperimentConfig, records=None) -> Path:
    """Fit preprocessing and every ensemble member; write checkpoints and loss curves."""
    out = Path(cfg.out_dir)
    records = load_records(cfg) if records is None else records
    ds = _dataset(cfg, records)
    _write_json(out / "config.json", cfg.to_dict())
    _write_json(out / "preprocessing.json", ds.prep.to_dict())
    kind, arg = model_kind(cfg.scheme)
    ckpt = out / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    if kind == "lstm":
        for seed in cfg.train.seeds:
            m = train_model(ds, arg, cfg.train, seed)
            save_network(m.net, ckpt / f"member_{seed}.npz", {"scheme": arg.tag, "seed": seed})
            write_csv(out / "loss" / f"{seed}.csv", ["epoch", "loss"], enumerate(m.history))
    elif kind == "ann":
        for seed in cfg.train.seeds:
            m = baselines.ann_train(ds, cfg.train, cfg.ann_widths, seed)
            np.savez(ckpt / f"member_{seed}.npz", **m.params)
            write_csv(out / "loss" / f"{seed}.csv", ["epoch", "loss"], enumerate(m.history))
    else:
        coeffs = {}
        with_sim = kind == "ar_basin_sim"
        if kind == "ar_pooled":
            series = []
            for k, b in enumerate(ds.basins):
                y, X, sim = _ar_series(ds, k, cfg.ar_space, False)
                a, e = b.train
                series.append((y[a:e], X[a:e], None))
            model = baselines.fit_ar_pooled(series, arg)
            coeffs = {b.basin_id: model for b in ds.basins}
        else:
            for k, b in enumerate(ds.basins):
                y, X, sim = _ar_series(ds, k, cfg.ar_space, with_sim)
                a, e = b.train
                coeffs[b.basin_id] = baselines.fit_ar(
                    y[a:e], X[a:e], arg, None if sim is None else sim[a:e])
        _write_json(ckpt / "ar.json", {
            bid: {"order": m.order, "alpha": list(m.alpha), "beta": list(m.beta),
                  "intercept": m.intercept, "resid_var": m.resid_var}
            for bid, m in coeffs.items()})
    return out


def _load_members(out: Path, kind: str) -> list:
    ckpt = out / "checkpoints"
    files = sorted(ckpt.glob("member_*.npz"), key=lambda p: int(p.stem.split("_")[1]))
    if not files:
        raise DataError(f"no checkpoints under {ckpt}")
    members = []
    for f in files:
        seed = int(f.stem.split("_")[1])
        if kind == "lstm":
            net, meta = load_network(f)
            members.append(TrainedModel(net, DiScheme.parse(meta["scheme"]), seed))
        else:
            with np.load(f) as z:
                params = {k: z[k].copy() for k in z.files}
            members.append(baselines.AnnModel(params, (), seed))
    return members


def forecast_stage(cfg: ExperimentConfig, records=None) -> Path:
    """Test-period forecasts for every basin, per member and ensemble mean."""
    out = Path(cfg.out_dir)
    records = load_records(cfg) if records is None else records
    prep_path = out / "preprocessing.json"
    if not prep_path.exists():
        raise DataError(f"missing {prep_path}; run the train stage first")
    prep = Preprocessing.from_dict(json.loads(prep_path.read_text()))
    ds = _dataset(cfg, records, prep)
    kind, arg = model_kind(cfg.scheme)
    if kind in ("lstm", "ann"):
        members = _load_members(out, kind)
        labels = [f"member_{m.seed}" for m in members]
    else:
        table = json.loads((out / "checkpoints" / "ar.json").read_text())
        labels = ["member_0"]
    for k, b in enumerate(ds.basins):
        a, e = b.test
        if e <= a:
            log.warning("basin %s has no test-period data", b.basin_id)
            continue
        if kind == "lstm":
            preds = [forecast(m, ds, k, a, e, cfg.warmup, cfg.closed_loop) for m in members]
        elif kind == "ann":
            preds = [baselines.ann_predict(m, ds, k, a, e) for m in members]
        else:
            c = table[b.basin_id]
            model = baselines.ArModel(c["order"], np.array(c["alpha"]), np.array(c["beta"]),
                                      c["intercept"], c["resid_var"])
            y, X, sim = _ar_series(ds, k, cfg.ar_space, kind == "ar_basin_sim")
            pred = np.full(e - a, np.nan)
            s = max(a, model.order)
            pred[s - a :] = baselines.ar_forecast(model, y, X, sim, s, e)
            preds = [_ar_back(pred, ds, k, cfg.ar_space)]
        ens = ensemble_mean(preds)
        rows = zip([str(d) for d in b.dates[a:e]], b.q_native[a:e], ens, *preds)
        write_csv(out / "forecasts" / f"{b.basin_id}.csv", ["date", "obs", "ensemble", *labels], rows)
    return out


def basin_signatures(record: BasinRecord, test: tuple[int, int]) -> dict:
    a, e = test
    q = record.discharge[a:e]
    tmean = 0.5 * (record.forcing[:, 2] + record.forcing[:, 3])
    sig = {"acf1": metrics.acf1(q), "bfi": metrics.baseflow_index(q)}
    try:
        sig["xi"] = metrics.seasonality_xi(record.forcing[:, 0], tmean)
    except Exception:  # shorter than a year
        sig["xi"] = math.nan
    sig["gamma"] = math.nan
    if record.twsa is not None and record.twsa[1].size >= 36:
        sig["gamma"] = metrics.twsa_gamma(record.twsa[1])
    return sig


METRIC_HEADER = ["basin_id", *metrics.METRICS, *metrics.SIGNATURES, "undefined"]


def evaluate_stage(cfg: ExperimentConfig, records=None) -> Path:
    """Metrics per basin (ensemble mean and each member), aggregates and CDFs."""
    out = Path(cfg.out_dir)
    records = load_records(cfg) if records is None else records
    by_id = {r.basin_id: r for r in records}
    reports, rows, member_rows = [], [], []
    for f in sorted((out / "forecasts").glob("*.csv")):
        bid = f.stem
        header, body = read_csv(f)
        cols = np.array([[float(x) for x in row[1:]] for row in body]).reshape(-1, len(header) - 1)
        obs, ens = cols[:, 0], cols[:, 1]
        rep = metrics.evaluate(obs, ens)
        if bid in by_id:
            from .dataset import period_slice

            rec = by_id[bid]
            rep.signatures = basin_signatures(rec, period_slice(rec.dates, cfg.test_period))
        reports.append(rep)
        d = rep.as_dict()
        rows.append([bid, *[d.get(m, math.nan) for m in METRIC_HEADER[1:-1]], ";".join(rep.undefined)])
        for j, label in enumerate(header[3:]):
            mrep = metrics.evaluate(obs, cols[:, 2 + j])
            member_rows.append([bid, label, *[getattr(mrep, m) for m in metrics.METRICS]])
    if not reports:
        raise DataError(f"no forecasts under {out / 'forecasts'}")
    write_csv(out / "metrics.csv", METRIC_HEADER, rows)
    write_csv(out / "metrics_members.csv", ["basin_id", "member", *metrics.METRICS], member_rows)
    agg = metrics.aggregate(reports, list(metrics.METRICS) + list(metrics.SIGNATURES))
    write_csv(out / "aggregate.csv", ["metric", "median", "n_defined", "n_undefined"],
              [[m, agg.median[m], str(agg.n_defined[m]), str(agg.n_undefined[m])] for m in agg.median])
    for m, table in agg.cdf.items():
        write_csv(out / "cdf" / f"{m}.csv", ["value", "fraction"], table.tolist())
    return out


def run_experiment(cfg: ExperimentConfig, records=None) -> Path:
    records = load_records(cfg) if records is None else records
    train_stage(cfg, records)
    forecast_stage(cfg, records)
    return evaluate_stage(cfg, records)
