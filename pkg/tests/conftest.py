import numpy as np
import pytest

from socialtrend.config import bundled_config_path, parse_config
from socialtrend.network import Topology, build_metropolis


@pytest.fixture(scope="session")
def fig3():
    return parse_config(bundled_config_path("fig3"))


@pytest.fixture(scope="session")
def fig4():
    return parse_config(bundled_config_path("fig4"))


@pytest.fixture
def ring4():
    return build_metropolis(Topology.undirected(4, [(0, 1), (1, 2), (2, 3), (3, 0)]))


def random_left_stochastic(rng, K, density=0.6):
    """Random primitive-looking matrix: ring plus random edges, self-loops everywhere."""
    support = rng.random((K, K)) < density
    support |= np.eye(K, dtype=bool)
    for k in range(K):
        support[k, (k + 1) % K] = True
    A = np.where(support, rng.random((K, K)) + 0.05, 0.0)
    return A / A.sum(axis=0, keepdims=True)
