import itertools

import numpy as np
import pytest

from msgen.errors import InvalidInputError
from msgen.extract import (Clustering, ExtractParams, clusters_to_graph,
                           extract_msg, extract_msg_plain, kmeans,
                           mixed_precision_random_kmeans)
from msgen.geometry import PointCloud
from msgen.graph import total_capacity, validate


def exhaustive_best_sse(points, k):
    """Oracle: minimum within-cluster SSE over every k-partition."""
    n = len(points)
    best = np.inf
    for assignment in itertools.product(range(k), repeat=n):
        if len(set(assignment)) != k:
            continue
        sse = 0.0
        for c in range(k):
            members = points[np.array(assignment) == c]
            sse += ((members - members.mean(axis=0)) ** 2).sum()
        best = min(best, sse)
    return best


def sse_of(points, clustering):
    total = 0.0
    for c in range(len(clustering.centroids)):
        members = points[clustering.assignment == c]
        total += ((members - members.mean(axis=0)) ** 2).sum()
    return total


class TestKmeans:
    def test_k_equals_n(self, rng):
        pts = rng.standard_normal((6, 3))
        c = kmeans(PointCloud(pts), 6, seed=0)
        assert sorted(c.sizes()) == [1] * 6

    def test_two_separated_pairs(self):
        pts = np.array([[10, 0, 0], [10, 1, 0], [-10, 0, 0], [-10, 1, 0]], dtype=float)
        # Oracle: enumerate 2-partitions; optimum is the two pair means.
        best = exhaustive_best_sse(pts, 2)
        for seed in range(10):
            c = kmeans(PointCloud(pts), 2, seed=seed)
            assert sse_of(pts, c) == pytest.approx(best)
            centroids = sorted(map(tuple, c.centroids))
            np.testing.assert_allclose(centroids, [(-10, 0.5, 0), (10, 0.5, 0)])

    def test_k_one_is_mean(self, rng):
        pts = rng.standard_normal((20, 3))
        c = kmeans(PointCloud(pts), 1, seed=0)
        np.testing.assert_allclose(c.centroids[0], pts.mean(axis=0))

    def test_k_too_large_rejected(self):
        with pytest.raises(InvalidInputError):
            kmeans(PointCloud(np.zeros((3, 3))), 4, seed=0)

    def test_toy_instances_near_optimal(self):
        # Local method: require the exhaustive optimum in >= 95% of runs.
        hits = 0
        runs = 0
        for seed in range(40):
            r = np.random.default_rng(seed)
            n, k = int(r.integers(4, 8)), int(r.integers(2, 4))
            pts = r.standard_normal((n, 3))
            best = exhaustive_best_sse(pts, k)
            got = sse_of(pts, kmeans(PointCloud(pts), k, seed=seed))
            runs += 1
            hits += got <= best * (1 + 1e-9)
        assert hits / runs >= 0.95

    def test_no_empty_clusters(self, rng):
        pts = np.repeat(rng.standard_normal((4, 3)), 5, axis=0)  # duplicates
        c = kmeans(PointCloud(pts), 4, seed=1)
        assert (c.sizes() > 0).all()


class TestMixedPrecision:
    def make_cloud(self, seed=0, n=300):
        return PointCloud(np.random.default_rng(seed).standard_normal((n, 3)))

    def test_partition_property(self):
        cloud = self.make_cloud()
        p = ExtractParams(seed=5)
        c = mixed_precision_random_kmeans(cloud, p)
        assert c.sizes().sum() == len(cloud)
        assert (c.sizes() > 0).all()
        assert len(c.centroids) <= p.pick_range[1]

    def test_degenerate_ranges_match_plain_kmeans(self):
        cloud = self.make_cloud(n=200)
        k = 24
        p = ExtractParams(fine_k_range=(k, k), pick_range=(k, k), seed=3)
        mixed = mixed_precision_random_kmeans(cloud, p)
        assert len(mixed.centroids) == k
        assert mixed.sizes().sum() == len(cloud)

    def test_capacity_spread_exceeds_plain(self):
        # Random subsetting of fine centroids produces uneven cluster sizes.
        cloud = self.make_cloud(n=400)
        spreads_mixed, spreads_plain = [], []
        for seed in range(20):
            p = ExtractParams(seed=seed)
            c = mixed_precision_random_kmeans(cloud, p)
            spreads_mixed.append(c.sizes().max() / c.sizes().min())
            plain = kmeans(cloud, len(c.centroids), seed=seed)
            spreads_plain.append(plain.sizes().max() / plain.sizes().min())
        assert np.mean(spreads_mixed) > np.mean(spreads_plain)

    def test_union_mode_adds_coarse(self):
        cloud = self.make_cloud(n=300)
        c_written = mixed_precision_random_kmeans(cloud, ExtractParams(seed=9))
        c_union = mixed_precision_random_kmeans(
            cloud, ExtractParams(mix_mode="union", seed=9))
        assert len(c_union.centroids) >= len(c_written.centroids)

    def test_too_small_cloud_rejected(self):
        with pytest.raises(InvalidInputError):
            mixed_precision_random_kmeans(self.make_cloud(n=50), ExtractParams())


class TestClustersToGraph:
    def test_two_clusters_connected(self):
        pts = np.array([[0, 0, 0], [0.1, 0, 0], [1, 0, 0], [1.1, 0, 0]])
        c = Clustering(np.array([[0.05, 0, 0], [1.05, 0, 0]]),
                       np.array([0, 0, 1, 1]))
        g = clusters_to_graph(PointCloud(pts), c, edge_tau=1.8)
        assert g.edges == frozenset({(0, 1)})

    def test_three_collinear_thresholding(self):
        # Centers at 0, 1, 10: dbar = (1 + 1 + 9)/3; only the 0-1 edge is
        # below 1.8 * dbar = 6.6.
        pts = np.array([[0, 0, 0], [1, 0, 0], [10, 0, 0]], dtype=float)
        c = Clustering(pts.copy(), np.array([0, 1, 2]))
        g = clusters_to_graph(PointCloud(pts), c, edge_tau=1.8)
        assert g.edges == frozenset({(0, 1)})

    def test_capacities_are_cluster_sizes(self, rng):
        pts = rng.standard_normal((30, 3))
        assignment = rng.integers(0, 3, size=30)
        while len(set(assignment)) < 3:
            assignment = rng.integers(0, 3, size=30)
        centroids = np.stack([pts[assignment == i].mean(axis=0) for i in range(3)])
        g = clusters_to_graph(PointCloud(pts), Clustering(centroids, assignment))
        assert sorted(v.capacity for v in g.vertices) == sorted(
            np.bincount(assignment).tolist())

    def test_locations_are_gravity_centers(self, rng):
        pts = rng.standard_normal((20, 3))
        assignment = np.array([0] * 11 + [1] * 9)
        centroids = np.zeros((2, 3))  # deliberately wrong: recomputed from members
        g = clusters_to_graph(PointCloud(pts), Clustering(centroids, assignment))
        np.testing.assert_allclose(g.vertex(0).location, pts[:11].mean(axis=0))
        np.testing.assert_allclose(g.vertex(1).location, pts[11:].mean(axis=0))

    def test_single_cluster_graph(self, rng):
        pts = rng.standard_normal((10, 3))
        g = clusters_to_graph(PointCloud(pts),
                              Clustering(pts[:1].copy(), np.zeros(10, dtype=int)))
        assert len(g.vertices) == 1 and len(g.edges) == 0

    def test_connect_components_bridges(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [50, 0, 0], [51, 0, 0]], dtype=float)
        c = Clustering(pts.copy(), np.arange(4))
        g = clusters_to_graph(PointCloud(pts), c, edge_tau=1.8,
                              connect_components=True)
        # The two distant pairs get bridged by exactly one extra edge.
        assert (1, 2) in g.edges
        assert len(g.edges) == 3


class TestExtractMsg:
    def test_contract(self):
        cloud = PointCloud(np.random.default_rng(0).standard_normal((256, 3)))
        g = extract_msg(cloud, ExtractParams(seed=2))
        assert validate(g) == []
        assert total_capacity(g) == 256

    def test_determinism(self):
        cloud = PointCloud(np.random.default_rng(1).standard_normal((200, 3)))
        a = extract_msg(cloud, ExtractParams(seed=7))
        b = extract_msg(cloud, ExtractParams(seed=7))
        assert a == b

    def test_vertex_count_in_pick_range(self):
        cloud = PointCloud(np.random.default_rng(3).standard_normal((512, 3)))
        for seed in range(20):
            g = extract_msg(cloud, ExtractParams(seed=seed))
            assert 12 <= len(g.vertices) <= 32

    def test_translation_equivariance(self):
        cloud = PointCloud(np.random.default_rng(5).standard_normal((200, 3)))
        shift = np.array([0.25, -0.5, 0.75])
        moved = PointCloud(cloud.points + shift)
        a = extract_msg(cloud, ExtractParams(seed=11))
        b = extract_msg(moved, ExtractParams(seed=11))
        assert [v.capacity for v in a.vertices] == [v.capacity for v in b.vertices]
        assert a.edges == b.edges
        np.testing.assert_allclose(b.locations(), a.locations() + shift, atol=1e-9)

    def test_plain_extraction_vertex_count(self):
        cloud = PointCloud(np.random.default_rng(8).standard_normal((300, 3)))
        g = extract_msg_plain(cloud, 24, seed=0)
        assert len(g.vertices) == 24
        assert total_capacity(g) == 300
