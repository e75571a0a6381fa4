"""Discharge normalization, the log-sqrt distribution transform and scaling."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError

log = logging.getLogger(__name__)

#: cubic feet per second -> cubic metres per day
CFS_TO_M3_PER_DAY = 0.0283168 * 86400.0


@dataclass(frozen=True)
class NormalizationContext:
    """Per-basin constants that turn native discharge into a dimensionless ratio.

    ``unit_conversion`` converts one native discharge unit into m^3/day
    (cubic feet per second by default); dividing by the basin area then
    yields a depth in mm/day.
    """

    basin_area: float  # km^2
    mean_annual_precip: float  # mm/day over the training period
    unit_conversion: float = CFS_TO_M3_PER_DAY

    def __post_init__(self):
        if not self.basin_area > 0:
            raise ParameterError(f"basin area must be positive, got {self.basin_area}")
        if not self.mean_annual_precip > 0:
            raise ParameterError(
                f"mean annual precipitation must be positive, got {self.mean_annual_precip}"
            )

    @property
    def depth_factor(self) -> float:
        """mm/day per native discharge unit."""
        return self.unit_conversion / (self.basin_area * 1e6) * 1000.0


def discharge_to_depth(q, ctx: NormalizationContext) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) * ctx.depth_factor


def discharge_to_dimensionless(q, ctx: NormalizationContext) -> np.ndarray:
    """Runoff depth divided by mean precipitation. NaN (missing) stays NaN."""
    return discharge_to_depth(q, ctx) / ctx.mean_annual_precip


def dimensionless_to_discharge(r, ctx: NormalizationContext) -> np.ndarray:
    return np.asarray(r, dtype=np.float64) * ctx.mean_annual_precip / ctx.depth_factor


def gamma_transform(v) -> np.ndarray:
    """``log10(sqrt(v) + 0.1)``, pulling Gamma-like data toward a Gaussian shape."""
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise DomainError("gamma_transform requires nonnegative values")
    return np.log10(np.sqrt(v) + 0.1)


def gamma_inverse(v_star) -> np.ndarray:
    v_star = np.asarray(v_star, dtype=np.float64)
    return np.maximum(10.0**v_star - 0.1, 0.0) ** 2


@dataclass
class ScalerStats:
    names: list[str]
    mean: np.ndarray
    std: np.ndarray
    fitted_on: str = ""
    dropped: list[str] = field(default_factory=list)

    @property
    def kept(self) -> list[str]:
        return [n for n in self.names if n not in self.dropped]

    @property
    def keep_index(self) -> np.ndarray:
        return np.array([i for i, n in enumerate(self.names) if n not in self.dropped], dtype=int)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "mean": [float(x) for x in self.mean],
            "std": [float(x) for x in self.std],
            "fitted_on": self.fitted_on,
            "dropped": list(self.dropped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerStats":
        return cls(
            names=list(d["names"]),
            mean=np.asarray(d["mean"], dtype=np.float64),
            std=np.asarray(d["std"], dtype=np.float64),
            fitted_on=d.get("fitted_on", ""),
            dropped=list(d.get("dropped", [])),
        )


def fit_scaler(x, names, fitted_on: str = "", rtol: float = 1e-12) -> ScalerStats:
    """Column means and population standard deviations, ignoring NaN.

    Columns with (numerically) zero variance are listed in ``dropped`` and
    removed by :func:`apply_scaler`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    names = list(names)
    if x.shape[1] != len(names):
        raise ParameterError(f"{x.shape[1]} columns but {len(names)} names")
    mean = np.nanmean(x, axis=0)
    std = np.nanstd(x, axis=0)
    dropped = []
    for i, name in enumerate(names):
        if not np.isfinite(std[i]) or std[i] <= rtol * max(1.0, abs(mean[i])):
            log.warning("dropping zero-variance input %r", name)
            dropped.append(name)
            std[i] = 1.0
    return ScalerStats(names, mean, std, fitted_on, dropped)


def apply_scaler(x, stats: ScalerStats) -> np.ndarray:
    """Standardize the trailing axis of ``x`` (columns in ``stats.names`` order)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != len(stats.names):
        raise ParameterError(f"expected {len(stats.names)} columns, got {x.shape[-1]}")
    z = (x - stats.mean) / stats.std
    return z[..., stats.keep_index]
