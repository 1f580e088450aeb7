import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from tamperwood import Knowledge, SplitSpec, TrainParams, gen_synthetic, load_csv, split

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(scope="session")
def iris():
    return load_csv(os.path.join(DATA_DIR, "iris.csv"), "species")


@pytest.fixture(scope="session")
def iris_splits(iris):
    """(train, val, test) at the verified reference seed."""
    return split(iris, SplitSpec(seed=3))


@pytest.fixture(scope="session")
def iris_knowledge():
    """sepal_width = 2.5 AND petal_width = 0.7 => versicolor."""
    return Knowledge({1: (2.5, 2.5), 3: (0.7, 0.7)}, target=1)


@pytest.fixture(scope="session")
def synth():
    return gen_synthetic(800, 8, 2, seed=3)


@pytest.fixture(scope="session")
def synth_splits(synth):
    return split(synth, SplitSpec(seed=7))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_params(**kw):
    defaults = dict(criterion="gini", max_depth=6, min_samples_leaf=1, seed=7)
    defaults.update(kw)
    return TrainParams(**defaults)
