import numpy as np
import pytest

from msgen.graph import MsgGraph, MsgVertex


def random_graph(rng: np.random.Generator, k: int = 8, edge_prob: float = 0.35,
                 max_capacity: int = 20) -> MsgGraph:
    """A random valid graph; may contain isolated or degree-1 vertices."""
    locs = rng.standard_normal((k, 3)) * 2.0
    caps = rng.integers(1, max_capacity + 1, size=k)
    verts = [MsgVertex(i, locs[i], int(caps[i])) for i in range(k)]
    edges = set()
    for i in range(k):
        for j in range(i + 1, k):
            if rng.random() < edge_prob:
                edges.add((i, j))
    return MsgGraph.make(verts, edges)


def generic_graph(rng: np.random.Generator, k: int = 10,
                  max_capacity: int = 20) -> MsgGraph:
    """A random graph whose every vertex has >= 3 edges (to its nearest
    neighbors), so all canonical frames are fully pinned by two
    non-collinear principal edges (random locations make collinear ties a
    measure-zero event)."""
    locs = rng.standard_normal((k, 3)) * 2.0
    caps = rng.integers(1, max_capacity + 1, size=k)
    d = ((locs[:, None] - locs[None]) ** 2).sum(-1)
    np.fill_diagonal(d, np.inf)
    edges = set()
    for i in range(k):
        for j in np.argsort(d[i])[:3]:
            edges.add((min(i, int(j)), max(i, int(j))))
    return MsgGraph.make([MsgVertex(i, locs[i], int(caps[i])) for i in range(k)],
                         edges)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
