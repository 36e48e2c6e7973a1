import math
import warnings

import pytest

from ftrlink.ftr_model import FtrParams, TruncationWarning


@pytest.fixture(autouse=True)
def _quiet_truncation():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        yield


@pytest.fixture
def table_hop():
    """Hop law of the first truncation-table row."""
    return FtrParams(m=5, K=3, delta=0.5, sigma2=0.5)


@pytest.fixture
def other_hop():
    return FtrParams(m=10, K=7, delta=0.7, sigma2=0.3)


@pytest.fixture
def phase_example_hops():
    """Per-element laws of the three-element phase example (both hops equal)."""
    return [
        FtrParams.from_upsilon(10, 3, 0.5, 10),
        FtrParams.from_upsilon(5, 5, 0.5, 20),
        FtrParams.from_upsilon(15, 1, 0.3, 10),
    ]


@pytest.fixture
def phase_example_thetas():
    return (math.pi / 4, math.pi / 2, math.pi / 8)

