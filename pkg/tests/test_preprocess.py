import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hydrodi.errors import DomainError, ParameterError
from hydrodi.preprocess import (
    CFS_TO_M3_PER_DAY,
    NormalizationContext,
    ScalerStats,
    apply_scaler,
    dimensionless_to_discharge,
    discharge_to_depth,
    discharge_to_dimensionless,
    fit_scaler,
    gamma_inverse,
    gamma_transform,
)


def test_one_cfs_over_one_km2_in_mm_per_day():
    ctx = NormalizationContext(1.0, 1.0)
    # 0.0283168 m3/s * 86400 s spread over 1e6 m2, in mm
    assert discharge_to_depth(1.0, ctx) == pytest.approx(0.0283168 * 86400 / 1e6 * 1000, rel=1e-15)
    assert CFS_TO_M3_PER_DAY == pytest.approx(2446.57152)


def test_dimensionless_ratio_and_inverse():
    ctx = NormalizationContext(250.0, 3.2)
    q = np.array([0.0, 12.5, 700.0, np.nan])
    r = discharge_to_dimensionless(q, ctx)
    assert r[1] == pytest.approx(12.5 * CFS_TO_M3_PER_DAY / 250e6 * 1000 / 3.2)
    assert np.isnan(r[3])
    assert np.allclose(dimensionless_to_discharge(r, ctx)[:3], q[:3], rtol=1e-14)


@pytest.mark.parametrize("area, precip", [(0.0, 1.0), (-5.0, 1.0), (10.0, 0.0)])
def test_context_rejects_nonpositive(area, precip):
    with pytest.raises(ParameterError):
        NormalizationContext(area, precip)


def test_gamma_transform_known_values():
    assert gamma_transform(0.0) == pytest.approx(-1.0)
    assert gamma_transform(0.81) == pytest.approx(0.0)
    assert gamma_transform(98.01) == pytest.approx(1.0)


def test_gamma_transform_rejects_negative():
    with pytest.raises(DomainError):
        gamma_transform(np.array([1.0, -1e-9]))


@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(0, 1e4)))
def test_gamma_roundtrip(v):
    back = gamma_inverse(gamma_transform(v))
    assert np.all(np.abs(back - v) <= 1e-12 * np.maximum(1.0, v))


@given(st.floats(-1.0, 5.0))
def test_gamma_inverse_clamps_and_is_monotone(x):
    y = gamma_inverse(x)
    assert y >= 0
    assert gamma_inverse(x + 0.1) >= y


def test_scaler_population_std_and_nan():
    x = np.array([[1.0, 5.0], [3.0, np.nan], [5.0, 7.0]])
    s = fit_scaler(x, ["a", "b"])
    assert np.allclose(s.mean, [3.0, 6.0])
    assert np.allclose(s.std, [math.sqrt(8 / 3), 1.0])
    z = apply_scaler(x, s)
    assert np.allclose(np.nanmean(z, axis=0), 0.0)


def test_scaler_drops_constant_columns(caplog):
    x = np.column_stack([np.arange(5.0), np.full(5, 2.0)])
    s = fit_scaler(x, ["a", "const"])
    assert s.dropped == ["const"] and s.kept == ["a"]
    assert "const" in caplog.text
    assert apply_scaler(x, s).shape == (5, 1)


def test_scaler_roundtrip_dict():
    s = fit_scaler(np.random.default_rng(0).normal(size=(20, 3)), ["x", "y", "z"], "train")
    t = ScalerStats.from_dict(s.to_dict())
    assert np.array_equal(s.mean, t.mean) and np.array_equal(s.std, t.std) and t.fitted_on == "train"


def test_scaler_column_mismatch():
    s = fit_scaler(np.ones((3, 2)) * [[1], [2], [3]], ["a", "b"])
    with pytest.raises(ParameterError):
        apply_scaler(np.ones((3, 3)), s)
