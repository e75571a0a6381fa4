"""Observation channels for each data-integration (DI) variant.

Every variant turns a daily observation series into per-step input values
that only look at days strictly before the step being forecast.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, WindowError

PROJECTION = "Projection"
LAG = "Lag"
MOVING_AVG = "MovingAvg"
REGULAR_SNAPSHOT = "RegularSnapshot"
REGULAR_AVG = "RegularAvg"
ALL_LAGS = "AllLags"
CNN_DI = "CnnDi"

VARIANTS = (PROJECTION, LAG, MOVING_AVG, REGULAR_SNAPSHOT, REGULAR_AVG, ALL_LAGS, CNN_DI)

# short tags used in configs, file names and reports
_SUFFIX = {LAG: "", MOVING_AVG: "-M", REGULAR_SNAPSHOT: "-Rs", REGULAR_AVG: "-Ra", ALL_LAGS: "-A"}
_TAG_RE = re.compile(r"^DI\((\d+)\)(-M|-Rs|-Ra|-A)?$")
_CNN_RE = re.compile(r"^CNN-DI\((\d+),\s*(\d+)\)$")


@dataclass(frozen=True)
class DiScheme:
    variant: str = PROJECTION
    n: int = 0
    p1: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown DI variant {self.variant!r}")
        if self.variant == PROJECTION:
            if self.n or self.p1:
                raise ParameterError("projection scheme takes no window parameters")
            return
        if self.n < 1:
            raise ParameterError(f"{self.variant} needs N >= 1, got {self.n}")
        if self.variant == CNN_DI:
            if not 0 <= self.p1 < self.n:
                raise ParameterError(f"CNN-DI needs 0 <= p1 < N, got p1={self.p1}, N={self.n}")
        elif self.p1:
            raise ParameterError("p1 only applies to CNN-DI")

    @classmethod
    def parse(cls, tag: str) -> "DiScheme":
        """Accepts ``projection``, ``DI(N)``, ``DI(N)-M|-Rs|-Ra|-A`` and ``CNN-DI(p1,N)``."""
        tag = tag.strip()
        if tag.lower() in ("projection", "lstm"):
            return cls()
        m = _TAG_RE.match(tag)
        if m:
            inverse = {v: k for k, v in _SUFFIX.items()}
            return cls(inverse[m.group(2) or ""], int(m.group(1)))
        m = _CNN_RE.match(tag)
        if m:
            return cls(CNN_DI, int(m.group(2)), int(m.group(1)))
        raise ParameterError(f"cannot parse DI scheme {tag!r}")

    @property
    def tag(self) -> str:
        if self.variant == PROJECTION:
            return "projection"
        if self.variant == CNN_DI:
            return f"CNN-DI({self.p1},{self.n})"
        return f"DI({self.n}){_SUFFIX[self.variant]}"

    @property
    def p1_size(self) -> int:
        if self.variant == PROJECTION:
            return 0
        if self.variant == ALL_LAGS:
            return self.n
        if self.variant == CNN_DI:
            return self.p1
        return 1

    @property
    def p2_size(self) -> int:
        return self.n - self.p1 if self.variant == CNN_DI else 0

    @property
    def uses_observations(self) -> bool:
        return self.variant != PROJECTION

    def __str__(self):
        return self.tag


@dataclass
class ObservationWindow:
    y_p1: np.ndarray
    y_p2: np.ndarray
    validity: np.ndarray  # one flag per y_p1 entry


def fill_missing(obs) -> tuple[np.ndarray, np.ndarray]:
    """Replace NaN with 0 and return the 0/1 presence mask alongside."""
    obs = np.asarray(obs, dtype=np.float64)
    mask = np.isfinite(obs)
    return np.where(mask, obs, 0.0), mask.astype(np.float64)


def _snapshot_index(t: int, n: int, anchor: int) -> int | None:
    if t - 1 < anchor:
        return None
    return anchor + ((t - 1 - anchor) // n) * n


def _last_cycle(t: int, n: int, anchor: int) -> tuple[int, int] | None:
    k = (t - anchor) // n - 1
    if k < 0:
        return None
    start = anchor + k * n
    return start, start + n


def assemble(scheme: DiScheme, obs, t: int, cycle_anchor: int = 0, mask=None) -> ObservationWindow:
    """Observation inputs for forecasting day ``t`` from a gap-filled series."""
    obs = np.asarray(obs, dtype=np.float64)
    present = np.ones(obs.shape) if mask is None else np.asarray(mask, dtype=np.float64)
    v, n = scheme.variant, scheme.n
    empty = np.zeros(0)
    if v == PROJECTION:
        return ObservationWindow(empty, empty, np.zeros(0, dtype=bool))
    if cycle_anchor > t:
        raise WindowError(f"cycle anchor {cycle_anchor} lies after step {t}")
    if t > len(obs):
        raise WindowError(f"step {t} beyond series of length {len(obs)}")
    if v in (LAG, MOVING_AVG, ALL_LAGS, CNN_DI) and t < n:
        raise WindowError(f"{scheme.tag} needs t >= {n}, got t={t}")

    if v == LAG:
        return ObservationWindow(obs[[t - n]], empty, present[[t - n]] > 0)
    if v == MOVING_AVG:
        seg = slice(t - n, t)
        return ObservationWindow(np.array([obs[seg].mean()]), empty, np.array([present[seg].any()]))
    if v == ALL_LAGS:
        seg = slice(t - n, t)
        return ObservationWindow(obs[seg].copy(), empty, present[seg] > 0)
    if v == CNN_DI:
        p1 = scheme.p1
        return ObservationWindow(
            obs[t - p1 : t].copy(), obs[t - n : t - p1].copy(), present[t - p1 : t] > 0
        )
    if v == REGULAR_SNAPSHOT:
        s = _snapshot_index(t, n, cycle_anchor)
        if s is None:
            return ObservationWindow(np.zeros(1), empty, np.zeros(1, dtype=bool))
        return ObservationWindow(obs[[s]], empty, present[[s]] > 0)
    # REGULAR_AVG
    cyc = _last_cycle(t, n, cycle_anchor)
    if cyc is None:
        return ObservationWindow(np.zeros(1), empty, np.zeros(1, dtype=bool))
    a, b = cyc
    return ObservationWindow(np.array([obs[a:b].mean()]), empty, np.array([present[a:b].any()]))


def lagged_matrix(obs: np.ndarray, lags: range) -> np.ndarray:
    """Column k holds obs[t - lags[k]] with zeros before the record start."""
    T = len(obs)
    padded = np.concatenate([np.zeros(max(lags, default=0)), obs])
    off = max(lags, default=0)
    idx = np.arange(T)[:, None] - np.asarray(list(lags), dtype=int)[None, :] + off
    return padded[idx]


def assemble_series(scheme: DiScheme, obs, cycle_anchor: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Observation inputs for every step of a series at once.

    Returns ``(y_p1, y_p2)`` with shapes ``(T, p1_size)`` and ``(T, p2_size)``.
    Days before the start of the record count as zero-filled observations.
    For ``t >= N`` row ``t`` equals :func:`assemble` at ``t``.
    """
    obs = np.asarray(obs, dtype=np.float64)
    T = len(obs)
    v, n = scheme.variant, scheme.n
    y2 = np.zeros((T, scheme.p2_size))
    if v == PROJECTION:
        return np.zeros((T, 0)), y2
    if v == LAG:
        return lagged_matrix(obs, range(n, n + 1)), y2
    if v == MOVING_AVG:
        csum = np.concatenate([np.zeros(n + 1), np.cumsum(obs)])
        t = np.arange(T)
        return ((csum[t + n] - csum[t]) / n)[:, None], y2
    if v == ALL_LAGS:
        return lagged_matrix(obs, range(n, 0, -1)), y2
    if v == CNN_DI:
        y1 = lagged_matrix(obs, range(scheme.p1, 0, -1))
        y2 = lagged_matrix(obs, range(n, scheme.p1, -1))
        return y1, y2
    out = np.zeros((T, 1))
    if v == REGULAR_SNAPSHOT:
        for t in range(T):
            s = _snapshot_index(t, n, cycle_anchor)
            if s is not None:
                out[t, 0] = obs[s]
        return out, y2
    # REGULAR_AVG: mean of each completed cycle, broadcast over the following cycle
    for t in range(T):
        cyc = _last_cycle(t, n, cycle_anchor)
        if cyc is not None:
            out[t, 0] = obs[cyc[0] : cyc[1]].mean()
    return out, y2


def gather_p2(obs, scheme: DiScheme, steps) -> np.ndarray:
    """Conv-unit windows ``obs[t-N .. t-p1-1]`` for each ``t`` in ``steps``, zero before the record."""
    obs = np.asarray(obs, dtype=np.float64)
    n, width = scheme.n, scheme.p2_size
    padded = np.concatenate([np.zeros(n), obs])
    steps = np.asarray(steps, dtype=int)
    return padded[steps[..., None] + np.arange(width)]


def assemble_padded(scheme: DiScheme, obs, t: int, cycle_anchor: int = 0) -> ObservationWindow:
    """:func:`assemble` that treats days before the record as zero-filled."""
    pad = scheme.n
    padded = np.concatenate([np.zeros(pad), np.asarray(obs, dtype=np.float64)])
    return assemble(scheme, padded, t + pad, cycle_anchor + pad)
