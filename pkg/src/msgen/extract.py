"""Structure-graph extraction from point clouds.

The extractor clusters the cloud at two precisions (a coarse and a fine
k-means, with k drawn from configurable ranges), keeps a random subset of the
fine centroids, and reassigns every point to its nearest kept centroid. The
random subsetting is what produces clusters of very different sizes, i.e. a
graph that describes some regions coarsely and others finely.

Two mixing modes are exposed:

* ``as_written`` (default): the kept set is the random subset of fine
  centroids only; the coarse clustering is computed but not merged in.
* ``union``: the kept set is the random fine subset plus all coarse
  centroids.

Edges connect vertices closer than ``edge_tau`` times the mean
nearest-other-vertex distance, which keeps the rule invariant to uniform
scaling of the input.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .geometry import PointCloud
from .graph import MsgGraph, MsgVertex

KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class ExtractParams:
    coarse_k_range: tuple[int, int] = (4, 16)
    fine_k_range: tuple[int, int] = (64, 128)
    pick_range: tuple[int, int] = (12, 32)
    edge_tau: float = 1.8
    mix_mode: str = "as_written"
    connect_components: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("coarse_k_range", "fine_k_range", "pick_range"):
            lo, hi = getattr(self, name)
            if not (1 <= lo <= hi):
                raise InvalidInputError(f"{name} must satisfy 1 <= lo <= hi, got ({lo}, {hi})")
            object.__setattr__(self, name, (int(lo), int(hi)))
        if self.edge_tau <= 0:
            raise InvalidInputError(f"edge_tau must be positive, got {self.edge_tau}")
        if self.mix_mode not in ("as_written", "union"):
            raise InvalidInputError(f"mix_mode must be 'as_written' or 'union', got {self.mix_mode!r}")


@dataclass(frozen=True)
class Clustering:
    centroids: np.ndarray   # (k, 3)
    assignment: np.ndarray  # (n,) centroid index per point

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=len(self.centroids))


def _sq_dist_matrix(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return (diff * diff).sum(axis=2)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: centroids drawn proportionally to squared distance."""
    n = len(points)
    centroids = np.empty((k, 3), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    closest_sq = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest_sq.sum()
        if total <= 0:
            # All remaining points coincide with a centroid; any choice works.
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest_sq), r, side="right"))
            idx = min(idx, n - 1)
        centroids[i] = points[idx]
        closest_sq = np.minimum(closest_sq, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def kmeans(cloud: PointCloud, k: int, seed=None, n_init: int = 10) -> Clustering:
    """Lloyd's algorithm with k-means++ seeding, best of ``n_init`` restarts.

    Each restart iterates to an assignment fixpoint (or 100 iterations); the
    run with the lowest within-cluster SSE wins (ties: earliest run).
    Clusters that empty out are re-seeded to the point farthest from its
    current centroid, so the result never contains empty clusters.

    ``seed`` may be an int or an already-instantiated ``numpy`` generator
    (the extractor threads one stream through all of its draws).
    """
    points = cloud.points
    n = len(points)
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must be in [1, {n}], got {k}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    best: Clustering | None = None
    best_sse = np.inf
    for _ in range(max(1, n_init)):
        clustering = _kmeans_single(points, k, rng)
        diff = points - clustering.centroids[clustering.assignment]
        sse = float((diff * diff).sum())
        if sse < best_sse:
            best, best_sse = clustering, sse
    return best


def _kmeans_single(points: np.ndarray, k: int, rng: np.random.Generator) -> Clustering:
    centroids = _kmeans_pp_init(points, k, rng)
    assignment = np.argmin(_sq_dist_matrix(points, centroids), axis=1)
    for _ in range(KMEANS_MAX_ITER):
        for ci in range(k):
            members = assignment == ci
            if members.any():
                centroids[ci] = points[members].mean(axis=0)
            else:
                sq = ((points - centroids[assignment]) ** 2).sum(axis=1)
                far = int(np.argmax(sq))
                centroids[ci] = points[far]
                assignment[far] = ci
        new_assignment = np.argmin(_sq_dist_matrix(points, centroids), axis=1)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
    # On a max-iteration exit the last reassignment may have emptied a
    # cluster; repair with the same farthest-point rule.
    sizes = np.bincount(assignment, minlength=k)
    while np.any(sizes == 0):
        ci = int(np.argmin(sizes))
        sq = ((points - centroids[assignment]) ** 2).sum(axis=1)
        far = int(np.argmax(sq))
        centroids[ci] = points[far]
        assignment[far] = ci
        sizes = np.bincount(assignment, minlength=k)
    return Clustering(centroids, assignment)


def _rand_int_incl(rng: np.random.Generator, lo: int, hi: int) -> int:
    return int(rng.integers(lo, hi + 1))


def mixed_precision_random_kmeans(cloud: PointCloud, p: ExtractParams) -> Clustering:
    """Cluster at mixed precision by subsetting a fine clustering at random."""
    n = len(cloud)
    if n < p.fine_k_range[1]:
        raise InvalidInputError(
            f"cloud has {n} points; need at least {p.fine_k_range[1]}"
        )
    rng = np.random.default_rng(p.seed)
    n_coarse = _rand_int_incl(rng, *p.coarse_k_range)
    n_fine = _rand_int_incl(rng, *p.fine_k_range)
    coarse = kmeans(cloud, n_coarse, rng)
    fine = kmeans(cloud, n_fine, rng)
    n_pick = min(_rand_int_incl(rng, *p.pick_range), n_fine)
    picked = rng.choice(n_fine, size=n_pick, replace=False)
    kept = fine.centroids[np.sort(picked)]
    if p.mix_mode == "union":
        kept = np.concatenate([kept, coarse.centroids], axis=0)

    assignment = np.argmin(_sq_dist_matrix(cloud.points, kept), axis=1)
    # Drop kept centroids that won no points, then re-index the assignment.
    used = np.unique(assignment)
    remap = np.full(len(kept), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return Clustering(kept[used], remap[assignment])


def clusters_to_graph(cloud: PointCloud, c: Clustering, edge_tau: float = 1.8,
                      connect_components: bool = False) -> MsgGraph:
    """One vertex per cluster (gravity centre + size); edges by distance rule.

    Vertices i and j are connected iff ||L_i - L_j|| < edge_tau * dbar, where
    dbar is the mean over vertices of the distance to the nearest other
    vertex.
    """
    sizes = c.sizes()
    if np.any(sizes == 0):
        raise InvalidInputError("clustering contains empty clusters")
    if len(c.assignment) != len(cloud):
        raise InvalidInputError("assignment length does not match cloud")
    k = len(c.centroids)
    locations = np.empty((k, 3), dtype=np.float64)
    for ci in range(k):
        locations[ci] = cloud.points[c.assignment == ci].mean(axis=0)

    vertices = [MsgVertex(i, locations[i], int(sizes[i])) for i in range(k)]
    edges: set[tuple[int, int]] = set()
    if k > 1:
        diff = locations[:, None, :] - locations[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        np.fill_diagonal(dist, np.inf)
        dbar = dist.min(axis=1).mean()
        threshold = edge_tau * dbar
        for i in range(k):
            for j in range(i + 1, k):
                if dist[i, j] < threshold:
                    edges.add((i, j))
        if connect_components:
            edges |= _bridging_edges(locations, edges)
    return MsgGraph.make(vertices, edges)


def _bridging_edges(locations: np.ndarray,
                    edges: set[tuple[int, int]]) -> set[tuple[int, int]]:
    """Minimum-spanning edges between connected components (Prim over components)."""
    k = len(locations)
    parent = list(range(k))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in edges:
        parent[find(u)] = find(v)

    diff = locations[:, None, :] - locations[None, :, :]
    dist = (diff * diff).sum(axis=2)
    candidates = sorted(
        ((dist[i, j], i, j) for i in range(k) for j in range(i + 1, k)),
        key=lambda t: (t[0], t[1], t[2]),
    )
    added: set[tuple[int, int]] = set()
    for _, i, j in candidates:
        if find(i) != find(j):
            parent[find(i)] = find(j)
            added.add((i, j))
    return added


def extract_msg(cloud: PointCloud, p: ExtractParams) -> MsgGraph:
    """Full extraction: mixed-precision clustering, then graph construction."""
    clustering = mixed_precision_random_kmeans(cloud, p)
    return clusters_to_graph(cloud, clustering, p.edge_tau, p.connect_components)


def extract_msg_plain(cloud: PointCloud, k: int, seed=None,
                      edge_tau: float = 1.8) -> MsgGraph:
    """Single-precision extraction: plain k-means with a fixed k.

    This is the evaluation-side convention (test graphs come from one k-means
    with k drawn uniformly from the eval range, not from the mixed-precision
    extractor).
    """
    clustering = kmeans(cloud, k, seed)
    return clusters_to_graph(cloud, clustering, edge_tau)
