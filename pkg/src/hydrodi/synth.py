"""Synthetic basins from a small conceptual water-balance model.

Each day: precipitation falls as snow below 0 degC (degree-day melt), rain
and melt fill a soil bucket that loses water to evapotranspiration and
percolation and spills its excess to a fast linear reservoir; percolation
feeds a slow groundwater reservoir that also receives an unobserved
regional exchange flux. Discharge is the sum of both reservoir outflows
with multiplicative gauge noise.

The forcing handed to models is a perturbed copy of the true precipitation,
so a model that sees only forcings cannot recover the storage state
exactly. Regimes set the reservoir constants:

``high_acf``  slow groundwater dominates, lag-1 autocorrelation above 0.95
``flashy``    fast reservoir dominates, lag-1 autocorrelation below 0.5
``snowy``     cold climate with a seasonal snowpack
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import BasinRecord
from .errors import ParameterError
from .numerics import SeededRng, make_rng
from .preprocess import CFS_TO_M3_PER_DAY

REGIMES = ("high_acf", "flashy", "snowy")
LAND_COVER = ("Evergreen Needleleaf Forest", "Deciduous Broadleaf Forest", "Grasslands", "Croplands")
GEOLOGY = ("Siliciclastic sedimentary rocks", "Carbonate sedimentary rocks",
           "Unconsolidated sediments", "Metamorphics")


@dataclass
class GeneratorParams:
    area: float  # km^2
    latitude: float
    t_mean: float  # degC
    t_amp: float
    wet_prob: float
    wet_seasonality: float  # relative amplitude of wet-day probability
    wet_phase: float  # day of year of peak wet-day probability
    rain_mean: float  # mm per wet day
    soil_capacity: float  # mm
    percolation: float  # 1/day, fraction of soil water
    k_fast: float  # 1/day
    k_slow: float  # 1/day
    melt_factor: float  # mm/degC/day
    pet_factor: float  # mm/degC/day
    exchange_sd: float  # mm/day, regional groundwater exchange amplitude
    forcing_error: float  # log-sd of the precipitation perturbation
    gauge_noise: float  # log-sd of discharge observation noise
    missing_rate: float


def sample_params(rng: SeededRng, regime: str) -> GeneratorParams:
    if regime not in REGIMES:
        raise ParameterError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    u = rng.uniform
    p = GeneratorParams(
        area=float(np.exp(u(np.log(50), np.log(2000)))),
        latitude=u(30, 48),
        t_mean=u(6, 16),
        t_amp=u(8, 14),
        wet_prob=u(0.25, 0.45),
        wet_seasonality=u(-0.6, 0.6),
        wet_phase=u(0, 365),
        rain_mean=u(6, 14),
        soil_capacity=u(80, 250),
        percolation=u(0.04, 0.1),
        k_fast=u(0.3, 0.6),
        k_slow=u(0.005, 0.03),
        melt_factor=u(2, 4),
        pet_factor=u(0.12, 0.2),
        exchange_sd=u(0.1, 0.25),
        forcing_error=u(0.25, 0.4),
        gauge_noise=0.03,
        missing_rate=0.005,
    )
    if regime == "high_acf":
        p.soil_capacity = u(250, 400)
        p.percolation = u(0.06, 0.12)
        p.k_fast = u(0.1, 0.2)
    elif regime == "flashy":
        p.soil_capacity = u(5, 20)
        p.wet_seasonality = u(-0.2, 0.2)
        p.percolation = u(0.005, 0.02)
        p.k_fast = u(0.85, 0.98)
        p.k_slow = u(0.1, 0.2)
        p.t_mean = u(14, 20)  # rain-fed, no melt season
        p.exchange_sd = u(0.0, 0.05)
    else:
        p.t_mean = u(-4, 3)
        p.t_amp = u(12, 16)
    return p


def day_length(latitude: float, doy: np.ndarray) -> np.ndarray:
    """Daylight seconds from latitude (degrees) and day of year."""
    decl = 0.409 * np.sin(2 * np.pi * doy / 365 - 1.39)
    x = np.clip(-np.tan(np.radians(latitude)) * np.tan(decl), -1, 1)
    return 24 * 3600 * np.arccos(x) / np.pi


def simulate_basin(precip, temp, p: GeneratorParams, exchange=None, state=None) -> dict:
    """Run the water balance; returns discharge (mm/day) and storages.

    ``state`` optionally sets initial ``(snow, soil, fast, slow)`` in mm.
    """
    T = len(precip)
    exchange = np.zeros(T) if exchange is None else exchange
    snow, soil, fast, slow = (0.0, 0.5 * p.soil_capacity, 0.0, 50.0) if state is None else state
    q = np.empty(T)
    storage = np.empty(T)
    for t in range(T):
        tm = temp[t]
        if tm < 0:
            snow += precip[t]
            water = 0.0
        else:
            water = precip[t]
        melt = min(snow, p.melt_factor * max(tm, 0.0))
        snow -= melt
        soil += water + melt
        spill = max(soil - p.soil_capacity, 0.0)
        soil -= spill
        et = min(soil, p.pet_factor * max(tm, 0.0) * soil / p.soil_capacity * 4.0)
        soil -= et
        perc = p.percolation * soil
        soil -= perc
        fast += spill
        slow = max(slow + perc + exchange[t], 0.0)
        qf = p.k_fast * fast
        qs = p.k_slow * slow
        fast -= qf
        slow -= qs
        q[t] = qf + qs
        storage[t] = snow + soil + fast + slow
    return {"q": q, "storage": storage}


def _monthly_means(dates, x):
    months = dates.astype("datetime64[M]")
    keys, inv = np.unique(months, return_inverse=True)
    sums = np.bincount(inv, weights=x)
    counts = np.bincount(inv)
    return keys.astype("datetime64[D]"), sums / counts


def _attributes(p: GeneratorParams, rng: SeededRng) -> dict:
    forest = float(np.clip(0.2 + 0.02 * p.t_mean + rng.normal(0, 0.1), 0, 1))
    return {
        "elev_mean": 1500.0 - 80.0 * p.t_mean + rng.normal(0, 20),
        "slope_mean": 5.0 + 60.0 * p.k_fast + rng.normal(0, 1),
        "area_gages2": p.area,
        "frac_forest": forest,
        "lai_max": 1.0 + 4.0 * forest,
        "lai_diff": 0.5 + 2.0 * rng.uniform(),
        "dom_land_cover_frac": rng.uniform(0.4, 1.0),
        "dom_land_cover": LAND_COVER[int(rng.integers(len(LAND_COVER)))],
        "root_depth_50": 0.1 + 0.001 * p.soil_capacity,
        "soil_depth_statsgo": p.soil_capacity / 200.0,
        "soil_porosity": rng.uniform(0.35, 0.5),
        "soil_conductivity": 20.0 * p.percolation + rng.normal(0, 0.05),
        "max_water_content": p.soil_capacity / 1000.0,
        "geol_class_1st": GEOLOGY[int(rng.integers(len(GEOLOGY)))],
        "geol_class_2nd": GEOLOGY[int(rng.integers(len(GEOLOGY)))],
        "geol_porosity": rng.uniform(0.05, 0.2),
        "geol_permeability": -15.0 + 30.0 * p.k_slow + rng.normal(0, 0.05),
    }


def generate_basin(basin_id: str, p: GeneratorParams, rng: SeededRng, start, n_days: int) -> BasinRecord:
    dates = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n_days)
    doy = (dates - dates.astype("datetime64[Y]")).astype(int) + 1
    phase = 2 * np.pi * (doy - 105) / 365
    temp_noise = np.zeros(n_days)
    eps = rng.normal(0, 2.0, n_days)
    for t in range(1, n_days):
        temp_noise[t] = 0.7 * temp_noise[t - 1] + eps[t]
    tmean = p.t_mean + p.t_amp * np.sin(phase) + temp_noise
    wet_p = np.clip(p.wet_prob * (1 + p.wet_seasonality * np.sin(2 * np.pi * (doy - p.wet_phase + 91) / 365)), 0.02, 0.95)
    wet = rng.random(n_days) < wet_p
    precip = np.where(wet, rng.gamma(0.7, p.rain_mean / 0.7, n_days), 0.0)

    # slowly varying regional groundwater exchange (not visible in any forcing)
    ex = np.zeros(n_days)
    shocks = rng.normal(0, p.exchange_sd * np.sqrt(1 - 0.995**2), n_days)
    for t in range(1, n_days):
        ex[t] = 0.995 * ex[t - 1] + shocks[t]

    sim = simulate_basin(precip, tmean, p, exchange=ex)
    q_mm = sim["q"] * np.exp(rng.normal(0, p.gauge_noise, n_days))
    depth_factor = CFS_TO_M3_PER_DAY / (p.area * 1e6) * 1000.0
    q = q_mm / depth_factor
    q[rng.random(n_days) < p.missing_rate] = np.nan

    # the model sees a perturbed precipitation series
    log_err = np.zeros(n_days)
    e = rng.normal(0, p.forcing_error, n_days)
    for t in range(1, n_days):
        log_err[t] = 0.5 * log_err[t - 1] + e[t]
    prcp_obs = precip * np.exp(log_err - 0.5 * p.forcing_error**2)

    tmax = tmean + 5 + rng.normal(0, 1, n_days)
    tmin = tmean - 5 + rng.normal(0, 1, n_days)
    dayl = day_length(p.latitude, doy)
    srad = (120 + 180 * dayl / 86400 * (1 + 0.3 * np.sin(phase))) * np.where(wet, 0.6, 1.0)
    vp = 611.0 * np.exp(17.27 * tmin / (tmin + 237.3))
    forcing = np.column_stack([prcp_obs, srad, tmax, tmin, vp, dayl])

    storage = sim["storage"]
    months, twsa = _monthly_means(dates, storage - storage.mean())
    return BasinRecord(
        basin_id, dates, forcing, q, _attributes(p, rng), twsa=(months, twsa),
        extra={"true_precip": precip, "true_q_mm": sim["q"], "exchange": ex},
    )


def synth_generate(
    n_basins: int, seed: int = 0, regime: str = "high_acf", start: str = "2000-01-01",
    n_days: int = 5 * 365,
) -> tuple[list[BasinRecord], list[dict]]:
    """``n_basins`` synthetic basins plus the generator parameters of each."""
    if n_basins < 1:
        raise ParameterError("n_basins must be >= 1")
    rng = make_rng(seed)
    records, truth = [], []
    for k in range(n_basins):
        p = sample_params(rng, regime)
        records.append(generate_basin(f"{regime[:4]}{k:04d}", p, rng, start, n_days))
        truth.append({"regime": regime, **asdict(p)})
    return records, truth
