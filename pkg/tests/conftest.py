import numpy as np
import pytest

from carnot_rearrange.fields import build_field, grid_field
from carnot_rearrange.gauges import get_gauge
from carnot_rearrange.groups import get_group


@pytest.fixture(scope="session")
def R1():
    return get_group("euclidean1")


@pytest.fixture(scope="session")
def R2():
    return get_group("euclidean2")


@pytest.fixture(scope="session")
def H1():
    return get_group("heisenberg1")


@pytest.fixture(scope="session")
def koranyi(H1):
    return get_gauge("koranyi", H1)


@pytest.fixture(scope="session")
def carnot(H1):
    return get_gauge("carnot", H1)


def tent(g, nodes=257, half=1.5):
    """max(0, 1 - |x|) on [-half, half]."""
    return grid_field(g, [(-half, half)], (nodes,), lambda p: np.maximum(0.0, 1 - np.abs(p[..., 0])))


@pytest.fixture
def tent_field(R1):
    return tent(R1)


@pytest.fixture(scope="session")
def cone_field(H1, koranyi):
    return build_field("cone", H1, 64, gauge=koranyi)


@pytest.fixture(scope="session")
def two_bump_field(H1, koranyi):
    return build_field("two_bump", H1, 64, gauge=koranyi)
