"""Non-learned reference generators over structure graphs.

``graph_interpolation`` distributes the capacity budget over the edges
proportionally to their lengths and spaces points evenly along each edge;
``graph_gaussian`` draws an isotropic Gaussian blob around each vertex whose
spread follows the vertex's scale factor. Both respect the total-capacity
point count and both transform covariantly with the graph (the Gaussian one
pointwise for scaling/translation, in distribution for rotation).
"""
from __future__ import annotations

import numpy as np

from .frames import FrameSet
from .geometry import PointCloud
from .graph import MsgGraph, total_capacity


def graph_interpolation(g: MsgGraph, seed: int | None = None) -> PointCloud:
    """Evenly spaced points along the edges, allotted by edge length.

    Isolated vertices emit capacity-many copies of their location. The
    remaining budget goes to edges via largest-remainder rounding (ties by
    edge order); a budget of m points on one edge lands at parameters
    (k + 0.5) / m. Deterministic; the seed is accepted for interface
    uniformity but unused.
    """
    del seed
    locs = {v.id: np.asarray(v.location) for v in g.vertices}
    degree = {v.id: 0 for v in g.vertices}
    edges = sorted(g.edges)
    for u, v in edges:
        degree[u] += 1
        degree[v] += 1

    points: list[np.ndarray] = []
    labels: list[int] = []
    budget = total_capacity(g)
    for v in g.vertices:
        if degree[v.id] == 0:
            points.extend([locs[v.id]] * v.capacity)
            labels.extend([v.id] * v.capacity)
            budget -= v.capacity

    if edges and budget > 0:
        lengths = np.array([np.linalg.norm(locs[v] - locs[u]) for u, v in edges])
        total_len = lengths.sum()
        if total_len == 0:
            quotas = np.zeros(len(edges), dtype=np.int64)
            quotas[0] = budget
        else:
            exact = budget * lengths / total_len
            quotas = np.floor(exact).astype(np.int64)
            remainder = exact - quotas
            short = budget - int(quotas.sum())
            # Largest remainders win the leftover points; ties by edge order.
            order = sorted(range(len(edges)), key=lambda i: (-remainder[i], i))
            for i in order[:short]:
                quotas[i] += 1
        for (u, v), m in zip(edges, quotas):
            a, b = locs[u], locs[v]
            for k in range(int(m)):
                t = (k + 0.5) / m
                points.append(a + t * (b - a))
                labels.append(u if t <= 0.5 else v)
    elif budget > 0:
        # No edges anywhere: every vertex was isolated, budget already spent.
        pass

    return PointCloud(np.asarray(points).reshape(-1, 3),
                      np.asarray(labels, dtype=np.int64))


def graph_gaussian(g: MsgGraph, frames: FrameSet, kappa: float = 0.5,
                   seed: int | None = None) -> PointCloud:
    """Capacity-many isotropic Gaussian draws around each vertex.

    Standard deviation is kappa times the vertex's scale factor; unit draws
    come first and are scaled afterwards, so uniformly scaling the graph
    scales the output pointwise.
    """
    rng = np.random.default_rng(seed)
    points: list[np.ndarray] = []
    labels: list[int] = []
    for v in g.vertices:
        eps = rng.standard_normal((v.capacity, 3))
        sf = frames[v.id].scale_factor
        points.append(np.asarray(v.location) + kappa * sf * eps)
        labels.extend([v.id] * v.capacity)
    return PointCloud(np.concatenate(points, axis=0),
                      np.asarray(labels, dtype=np.int64))
