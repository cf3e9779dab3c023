import warnings

import numpy as np
import pytest

from erple.model import Catalog, SiteResonance, table1_catalog


@pytest.fixture(scope="session")
def table1():
    return table1_catalog()


@pytest.fixture
def single_line():
    return Catalog((SiteResonance(1527.565, 1.43e9, 25.0, 0.807e-3),))


@pytest.fixture(autouse=True)
def _quiet_overflow():
    # trial steps of the fitter may overflow exponentials; those steps are rejected
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", category=RuntimeWarning)
        yield


def rng(seed):
    return np.random.default_rng(seed)
