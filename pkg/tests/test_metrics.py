import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hydrodi import metrics
from hydrodi.acceptance import _ref_metrics, _same, metric_pairs
from hydrodi.errors import DomainError, ShapeError


def test_brute_force_equivalence():
    for obs, sim in metric_pairs(seed=3, n=40):
        ref = _ref_metrics(obs, sim)
        rep = metrics.evaluate(obs, sim)
        for m in metrics.METRICS:
            assert _same(getattr(rep, m), ref[m], 1e-10), m
        assert _same(metrics.acf1(obs), ref["acf1"], 1e-10)


def test_hand_values():
    obs = np.array([1.0, 2.0, 3.0, 4.0])
    sim = np.array([1.0, 2.0, 3.0, 6.0])
    assert metrics.nse(obs, sim) == pytest.approx(1 - 4 / 5)
    assert metrics.bias_pct(obs, sim) == pytest.approx(20.0)
    assert metrics.nse(obs, obs) == 1.0
    assert metrics.kge(obs, obs) == pytest.approx(1.0)
    assert metrics.nse(obs, np.full(4, 2.5)) == 0.0


def test_missing_pairs_are_dropped():
    obs = np.array([1.0, np.nan, 3.0, 4.0, 2.0])
    sim = np.array([1.0, 5.0, np.nan, 4.0, 2.0])
    assert metrics.nse(obs, sim) == metrics.nse([1.0, 4.0, 2.0], [1.0, 4.0, 2.0])


def test_undefined_flags():
    rep = metrics.evaluate(np.full(100, 3.0), np.arange(100.0))
    assert {"nse", "corr", "kge"} <= set(rep.undefined)
    short = metrics.evaluate(np.arange(1.0, 11.0), np.arange(1.0, 11.0))
    assert {"fhv", "flv"} <= set(short.undefined)
    with pytest.raises(ShapeError):
        metrics.nse(np.ones(3), np.ones(4))


@given(arrays(np.float64, 60, elements=st.floats(0.01, 100)), arrays(np.float64, 60, elements=st.floats(0.01, 100)))
def test_corr_bounds_and_nse_upper_bound(o, s):
    c = metrics.corr(o, s)
    assert math.isnan(c) or -1 <= c <= 1
    n = metrics.nse(o, s)
    assert math.isnan(n) or n <= 1


def test_acf1_of_ar_process():
    rng = np.random.default_rng(0)
    x = np.zeros(20000)
    for t in range(1, x.size):
        x[t] = 0.8 * x[t - 1] + rng.normal()
    assert metrics.acf1(x) == pytest.approx(0.8, abs=0.02)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(2, 200), elements=st.floats(0, 1e3)))
def test_baseflow_bounded_by_flow(q):
    bf = metrics.lyne_hollick(q)
    assert np.all(bf >= -1e-9) and np.all(bf <= q + 1e-9)


def test_baseflow_constant_flow_is_all_baseflow():
    assert metrics.baseflow_index(np.full(100, 4.0)) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        metrics.lyne_hollick(np.array([1.0, -1.0]))


def test_baseflow_flashy_is_lower_than_smooth():
    t = np.arange(730)
    smooth = 5 + np.sin(2 * np.pi * t / 365)
    flashy = 1 + 20 * (t % 17 == 0)
    assert metrics.baseflow_index(flashy) < metrics.baseflow_index(smooth)


def test_xi_recovers_phase():
    t = np.arange(3 * 365)
    w = 2 * np.pi / 365
    temp = 10 + 8 * np.sin(w * (t - 100))
    for shift, expect in ((100, 0.5), (100 + 182.5, -0.5)):
        p = 2 * (1 + 0.5 * np.sin(w * (t - shift)))
        assert metrics.seasonality_xi(p, temp) == pytest.approx(expect, abs=1e-9)
    assert metrics.seasonality_xi(np.full(t.size, 2.0), temp) == 0.0


def test_gamma_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(5, 12))
    annual = [row.mean() for row in x]
    mean_a = sum(annual) / 5
    inter = sum((a - mean_a) ** 2 for a in annual) / 5
    intra = sum(sum((v - row.mean()) ** 2 for v in row) / 12 for row in x) / 5
    assert metrics.twsa_gamma(x.ravel()) == pytest.approx(inter / intra, rel=1e-12)
    with pytest.raises(ShapeError):
        metrics.twsa_gamma(np.ones(30))


def test_cdf_final_fraction_counts_undefined():
    vals = [0.3, math.nan, 0.9, 0.1, math.nan]
    cdf = metrics.empirical_cdf(vals)
    assert cdf[:, 0].tolist() == [0.1, 0.3, 0.9]
    assert cdf[-1, 1] == pytest.approx(3 / 5)


def test_aggregate_medians():
    reps = [metrics.MetricReport(nse=v) for v in (0.2, 0.8, math.nan, 0.5)]
    agg = metrics.aggregate(reps, ["nse"])
    assert agg.median["nse"] == 0.5
    assert agg.n_defined["nse"] == 3 and agg.n_undefined["nse"] == 1
