"""Per-basin skill scores, hydrologic signatures and cross-basin summaries.

Metrics that cannot be computed (zero variance, zero flow in a segment,
too few points) come back as NaN and are listed in
``MetricReport.undefined``; they are never replaced by a made-up value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError

METRICS = ("bias", "nse", "flv", "fhv", "corr", "kge")
SIGNATURES = ("acf1", "bfi", "xi", "gamma")

NAN = float("nan")


def _paired(obs, sim):
    obs = np.asarray(obs, dtype=np.float64).ravel()
    sim = np.asarray(sim, dtype=np.float64).ravel()
    if obs.shape != sim.shape:
        raise ShapeError(f"obs has {obs.size} values, sim has {sim.size}")
    ok = np.isfinite(obs) & np.isfinite(sim)
    return obs[ok], sim[ok]


def nse(obs, sim) -> float:
    obs, sim = _paired(obs, sim)
    if obs.size < 2:
        return NAN
    denom = np.sum((obs - obs.mean()) ** 2)
    if denom == 0:
        return NAN
    return float(1.0 - np.sum((sim - obs) ** 2) / denom)


def _pct_bias(obs, sim) -> float:
    total = obs.sum()
    if obs.size == 0 or total == 0:
        return NAN
    return float(100.0 * (sim - obs).sum() / total)


def bias_pct(obs, sim) -> float:
    return _pct_bias(*_paired(obs, sim))


def high_flow_segment(obs, frac: float = 0.02) -> np.ndarray:
    """Boolean selector of days whose observed flow is in the top ``frac`` (ties kept)."""
    obs = np.asarray(obs, dtype=np.float64)
    return obs >= np.quantile(obs, 1.0 - frac)


def low_flow_segment(obs, frac: float = 0.30) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    return obs <= np.quantile(obs, frac)


def fhv(obs, sim, min_points: int = 50) -> float:
    """Percent bias over the top-2% observed flows."""
    obs, sim = _paired(obs, sim)
    if obs.size < min_points:
        return NAN
    sel = high_flow_segment(obs)
    return _pct_bias(obs[sel], sim[sel])


def flv(obs, sim, min_points: int = 50) -> float:
    """Percent bias over the bottom-30% observed flows, in linear space."""
    obs, sim = _paired(obs, sim)
    if obs.size < min_points:
        return NAN
    sel = low_flow_segment(obs)
    return _pct_bias(obs[sel], sim[sel])


def corr(obs, sim) -> float:
    obs, sim = _paired(obs, sim)
    if obs.size < 2:
        return NAN
    do, ds = obs - obs.mean(), sim - sim.mean()
    denom = math.sqrt(np.sum(do * do) * np.sum(ds * ds))
    if denom == 0:
        return NAN
    return float(np.clip(np.sum(do * ds) / denom, -1.0, 1.0))


def kge(obs, sim) -> float:
    obs, sim = _paired(obs, sim)
    r = corr(obs, sim)
    mu_o = obs.mean() if obs.size else 0.0
    if math.isnan(r) or mu_o == 0:
        return NAN
    alpha = sim.std() / obs.std()
    beta = sim.mean() / mu_o
    return float(1.0 - math.sqrt((r - 1) ** 2 + (alpha - 1) ** 2 + (beta - 1) ** 2))


def acf1(series) -> float:
    x = np.asarray(series, dtype=np.float64)
    x = x[np.isfinite(x)]
    if x.size < 3:
        return NAN
    d = x - x.mean()
    denom = np.sum(d * d)
    if denom == 0:
        return NAN
    return float(np.sum(d[:-1] * d[1:]) / denom)


def lyne_hollick(q, alpha: float = 0.925, passes: int = 3, reflect: int = 30) -> np.ndarray:
    """Baseflow from the forward/backward/forward Lyne-Hollick filter.

    The record is padded at both ends with ``reflect`` mirrored values, which
    are stripped again afterwards, so the filter warm-up falls outside the
    record. Quickflow starts at zero on every pass and is kept within
    ``[0, flow]``.
    """
    q = np.asarray(q, dtype=np.float64)
    if np.any(q < 0):
        raise DomainError("baseflow filter needs nonnegative flow")
    r = min(reflect, q.size - 1)
    x = np.concatenate([q[1 : r + 1][::-1], q, q[-r - 1 : -1][::-1]]) if r > 0 else q.copy()
    c = (1.0 + alpha) / 2.0
    for p in range(passes):
        seq = x if p % 2 == 0 else x[::-1]
        bf = seq.copy()
        qf = 0.0
        for i in range(1, seq.size):
            qf = alpha * qf + c * (seq[i] - seq[i - 1])
            qf = min(max(qf, 0.0), seq[i])
            bf[i] = seq[i] - qf
        x = bf if p % 2 == 0 else bf[::-1]
    return x[r : r + q.size]


def baseflow_index(q, alpha: float = 0.925) -> float:
    q = np.asarray(q, dtype=np.float64)
    q = q[np.isfinite(q)]
    if q.size < 2 or q.sum() == 0:
        return NAN
    bf = lyne_hollick(q, alpha)
    return float(np.clip(bf.sum() / q.sum(), 0.0, 1.0))


def _annual_harmonic(y, t, period: float = 365.0):
    """Least-squares fit ``y ~ m + b sin(wt) + c cos(wt)``; returns (m, amplitude, shift)."""
    w = 2.0 * np.pi / period
    A = np.column_stack([np.ones_like(t), np.sin(w * t), np.cos(w * t)])
    (m, b, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    amp = math.hypot(b, c)
    # b sin(wt) + c cos(wt) = amp * sin(w (t - s))
    shift = math.atan2(-c, b) / w
    return m, amp, shift


def seasonality_xi(precip, temperature, day=None, period: float = 365.0) -> float:
    """Phase agreement between precipitation and temperature annual cycles.

    Fits ``P(t) = Pm (1 + dP sin(2pi (t - sP)/365))`` and the analogous
    temperature cycle, and returns ``dP cos(2pi (sP - sT)/365)`` clipped to
    [-1, 1]. Positive when wet season and warm season coincide.
    """
    p = np.asarray(precip, dtype=np.float64)
    tmp = np.asarray(temperature, dtype=np.float64)
    if p.shape != tmp.shape:
        raise ShapeError("precipitation and temperature must be the same length")
    t = np.arange(p.size, dtype=np.float64) if day is None else np.asarray(day, dtype=np.float64)
    ok = np.isfinite(p) & np.isfinite(tmp)
    p, tmp, t = p[ok], tmp[ok], t[ok]
    if p.size < period:
        raise ShapeError("need at least one full year of data")
    pm, pa, ps = _annual_harmonic(p, t, period)
    if pm <= 0 or pa <= 1e-12 * max(abs(pm), 1.0):
        return 0.0
    _, ta, ts = _annual_harmonic(tmp, t, period)
    if ta == 0:
        return NAN
    delta = pa / pm
    return float(np.clip(delta * math.cos(2.0 * np.pi * (ps - ts) / period), -1.0, 1.0))


def twsa_gamma(monthly) -> float:
    """Inter-annual over intra-annual variance of monthly storage anomalies."""
    x = np.asarray(monthly, dtype=np.float64)
    years = x.size // 12
    if years < 3:
        raise ShapeError("need at least three complete years of monthly values")
    x = x[: years * 12].reshape(years, 12)
    annual = x.mean(axis=1)
    intra = ((x - annual[:, None]) ** 2).mean(axis=1).mean()
    if intra == 0:
        return NAN
    return float(annual.var() / intra)


@dataclass
class MetricReport:
    bias: float = NAN
    nse: float = NAN
    flv: float = NAN
    fhv: float = NAN
    corr: float = NAN
    kge: float = NAN
    signatures: dict = field(default_factory=dict)

    @property
    def undefined(self) -> list[str]:
        return [m for m in METRICS if math.isnan(getattr(self, m))]

    def as_dict(self) -> dict:
        d = {m: getattr(self, m) for m in METRICS}
        d.update(self.signatures)
        return d


def evaluate(obs, sim) -> MetricReport:
    return MetricReport(
        bias=bias_pct(obs, sim),
        nse=nse(obs, sim),
        flv=flv(obs, sim),
        fhv=fhv(obs, sim),
        corr=corr(obs, sim),
        kge=kge(obs, sim),
    )


@dataclass
class Aggregate:
    median: dict
    n_defined: dict
    n_undefined: dict
    cdf: dict  # metric -> (k, 2) array of (value, fraction of all basins <= value)


def empirical_cdf(values) -> np.ndarray:
    """Sorted ``(value, k / n_total)`` pairs; NaN values count toward ``n_total`` only."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    d = np.sort(v[np.isfinite(v)])
    if n == 0:
        return np.zeros((0, 2))
    return np.column_stack([d, np.arange(1, d.size + 1) / n])


def aggregate(reports, metrics=None) -> Aggregate:
    """Median and CDF per metric over basins.

    ``reports`` is a sequence of :class:`MetricReport` or plain dicts.
    """
    rows = [r.as_dict() if isinstance(r, MetricReport) else dict(r) for r in reports]
    if metrics is None:
        metrics = [m for m in rows[0]] if rows else list(METRICS)
    med, nd, nu, cdf = {}, {}, {}, {}
    for m in metrics:
        v = np.array([r.get(m, NAN) for r in rows], dtype=np.float64)
        ok = np.isfinite(v)
        nd[m], nu[m] = int(ok.sum()), int((~ok).sum())
        med[m] = float(np.median(v[ok])) if ok.any() else NAN
        cdf[m] = empirical_cdf(v)
    return Aggregate(med, nd, nu, cdf)
