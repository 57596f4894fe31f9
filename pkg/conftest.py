import numpy as np
import pytest

from settings import Settings
from tn_core import Graph, Tensor, TensorNetwork


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch):
    """Run every test against the built-in defaults, whatever a local .env says."""
    for key in Settings.DEFAULTS:
        monkeypatch.delenv(key, raising=False)


@pytest.fixture
def make_network():
    """Factory for networks with seeded random tensors on a given graph."""
    def build(graph, d, seed=0, nonnegative=False, scale=1.0):
        gen = np.random.default_rng(seed)
        tensors = []
        for deg in graph.degrees:
            shape = (d,) * deg
            if nonnegative:
                data = np.abs(gen.standard_normal(shape))
            else:
                data = gen.standard_normal(shape) + 1j * gen.standard_normal(shape)
            tensors.append(Tensor(d, scale * data))
        return TensorNetwork(graph, tuple(tensors), d)
    return build


@pytest.fixture
def triangle_graph():
    """Three vertices in a cycle, plus a self-loop on 0 and a second 1-2 edge."""
    return Graph(3, (
        ((0, 0), (1, 0)),
        ((1, 1), (2, 0)),
        ((2, 1), (0, 1)),
        ((0, 2), (0, 3)),
        ((1, 2), (2, 2)),
    ))
