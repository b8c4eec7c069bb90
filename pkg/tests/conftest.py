import numpy as np
import pytest

from conelab.nets import build_grid_net, build_net
from conelab.spaces import (
    circle_rotation_action,
    identity_action,
    make_space,
    sl2_torus_action,
    su2_action,
)
from conelab.spectral import build_markov
from conelab.warped import build_level_graph


@pytest.fixture(scope="session")
def sl2():
    return sl2_torus_action()


@pytest.fixture(scope="session")
def su2():
    return su2_action()


@pytest.fixture(scope="session")
def torus():
    return make_space("torus2")


@pytest.fixture(scope="session")
def circle():
    return make_space("circle")


@pytest.fixture(scope="session")
def sphere():
    return make_space("sphere3")


@pytest.fixture(scope="session")
def sl2_net32(sl2):
    return build_grid_net(sl2.space, 32, seed=7, jitter=0.3, adapt_to=sl2)


@pytest.fixture(scope="session")
def sl2_op32(sl2, sl2_net32):
    return build_markov(sl2_net32, sl2)


@pytest.fixture(scope="session")
def sl2_graph32(sl2, sl2_net32):
    return build_level_graph(sl2_net32, sl2, 32.0, 3.0)


@pytest.fixture(scope="session")
def sphere_net(su2):
    return build_net(su2.space, 0.2, seed=11)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240915)
