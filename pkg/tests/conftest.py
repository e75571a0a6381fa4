import numpy as np
import pytest

from hydrodi.dataset import prepare_dataset
from hydrodi.numerics import make_rng
from hydrodi.synth import synth_generate


@pytest.fixture
def rng():
    return make_rng(12345)


def split_periods(dates, train_days):
    return (str(dates[0]), str(dates[train_days - 1])), (str(dates[train_days]), str(dates[-1]))


@pytest.fixture(scope="session")
def small_records():
    recs, truth = synth_generate(3, 5, "high_acf", n_days=2 * 365)
    return recs, truth


@pytest.fixture(scope="session")
def small_dataset(small_records):
    recs, _ = small_records
    train, test = split_periods(recs[0].dates, 365)
    return prepare_dataset(recs, train, test)
