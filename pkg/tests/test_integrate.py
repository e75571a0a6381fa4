import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydrodi.acceptance import TABLE_SCHEMES, enumerate_window
from hydrodi.errors import ParameterError, WindowError
from hydrodi.integrate import (
    CNN_DI,
    DiScheme,
    assemble,
    assemble_padded,
    assemble_series,
    fill_missing,
    gather_p2,
    lagged_matrix,
)
from hydrodi.numerics import make_rng


@pytest.mark.parametrize("tag", TABLE_SCHEMES)
def test_tags_roundtrip(tag):
    s = DiScheme.parse(tag)
    assert DiScheme.parse(s.tag) == s


@pytest.mark.parametrize("bad", ["DI(0)", "DI(3)-X", "CNN-DI(5,5)", "CNN-DI(6,5)", "foo", "DI()"])
def test_bad_tags(bad):
    with pytest.raises(ParameterError):
        DiScheme.parse(bad)


def test_sizes():
    assert DiScheme.parse("projection").p1_size == 0
    assert DiScheme.parse("DI(7)-A").p1_size == 7
    s = DiScheme.parse("CNN-DI(1,100)")
    assert (s.p1_size, s.p2_size) == (1, 99)


def test_lag_example():
    obs = np.arange(10.0)
    assert assemble(DiScheme.parse("DI(1)"), obs, 5).y_p1.tolist() == [4.0]
    assert assemble(DiScheme.parse("DI(3)-M"), obs, 5).y_p1.tolist() == [3.0]
    assert assemble(DiScheme.parse("DI(3)-A"), obs, 5).y_p1.tolist() == [2.0, 3.0, 4.0]


def test_regular_schemes_hold_over_cycle():
    obs = np.arange(20.0)
    rs, ra = DiScheme.parse("DI(5)-Rs"), DiScheme.parse("DI(5)-Ra")
    snap = [assemble(rs, obs, t).y_p1[0] for t in range(6, 11)]
    assert snap == [5.0] * 5
    avg = [assemble(ra, obs, t).y_p1[0] for t in range(10, 15)]
    assert avg == [7.0] * 5  # mean of days 5..9


def test_short_history_raises():
    with pytest.raises(WindowError):
        assemble(DiScheme.parse("DI(7)"), np.ones(20), 3)
    padded = assemble_padded(DiScheme.parse("DI(7)"), np.ones(20), 3)
    assert padded.y_p1.tolist() == [0.0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(TABLE_SCHEMES), st.integers(0, 6))
def test_series_matches_enumeration(seed, tag, anchor):
    obs = make_rng(seed).normal(size=60)
    s = DiScheme.parse(tag)
    y1, y2 = assemble_series(s, obs, anchor)
    for t in range(anchor, 60):
        e1, e2 = enumerate_window(s, obs, t, anchor)
        assert np.allclose(y1[t], e1, atol=1e-12) and np.allclose(y2[t], e2, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(TABLE_SCHEMES), st.integers(1, 59))
def test_future_poisoning(seed, tag, t):
    obs = make_rng(seed).normal(size=60)
    s = DiScheme.parse(tag)
    ref = assemble_series(s, obs)
    poisoned = obs.copy()
    poisoned[t:] = np.nan
    got = assemble_series(s, np.nan_to_num(poisoned, nan=1e9))
    for a, b in zip(ref, got):
        assert np.array_equal(a[: t + 1], b[: t + 1])


def test_fill_missing():
    filled, mask = fill_missing(np.array([1.0, np.nan, 3.0]))
    assert filled.tolist() == [1.0, 0.0, 3.0] and mask.tolist() == [1, 0, 1]


def test_lagged_matrix_and_gather():
    obs = np.arange(1.0, 6.0)
    m = lagged_matrix(obs, range(2, 0, -1))
    assert m.tolist() == [[0, 0], [0, 1], [1, 2], [2, 3], [3, 4]]
    s = DiScheme(CNN_DI, 4, 1)
    w = gather_p2(obs, s, np.arange(5))
    _, y2 = assemble_series(s, obs)
    assert np.array_equal(w, y2)
