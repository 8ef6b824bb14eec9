import numpy as np
import pytest

from msgen.baselines import graph_gaussian, graph_interpolation
from msgen.frames import compute_frames
from msgen.geometry import SimilarityTransform, apply_similarity
from msgen.graph import MsgGraph, MsgVertex, total_capacity
from msgen.training import transform_graph
from conftest import generic_graph


def segment_graph(caps=(1, 1)):
    return MsgGraph.make([MsgVertex(0, (0, 0, 0), caps[0]),
                          MsgVertex(1, (1, 0, 0), caps[1])], [(0, 1)])


class TestGraphInterpolation:
    def test_single_edge_two_points(self):
        cloud = graph_interpolation(segment_graph())
        got = sorted(cloud.points[:, 0])
        assert got == pytest.approx([0.25, 0.75])

    def test_isolated_vertex_copies(self):
        g = MsgGraph.make([MsgVertex(0, (2.0, 1.0, 0.0), 3)])
        cloud = graph_interpolation(g)
        np.testing.assert_array_equal(cloud.points, [[2, 1, 0]] * 3)
        np.testing.assert_array_equal(cloud.source_vertex, [0, 0, 0])

    def test_length_proportional_allotment(self):
        # Edge lengths 2:1 with N=3 -> 2 points on the long edge, 1 short.
        verts = [MsgVertex(0, (0, 0, 0), 1), MsgVertex(1, (2, 0, 0), 1),
                 MsgVertex(2, (2, 1, 0), 1)]
        g = MsgGraph.make(verts, [(0, 1), (1, 2)])
        cloud = graph_interpolation(g)
        on_long = np.sum(cloud.points[:, 1] == 0)
        assert on_long == 2 and len(cloud) == 3

    def test_deterministic_and_seed_independent(self):
        g = segment_graph((3, 2))
        a = graph_interpolation(g, seed=0)
        b = graph_interpolation(g, seed=999)
        np.testing.assert_array_equal(a.points, b.points)

    def test_point_count(self, rng):
        g = generic_graph(rng, k=7)
        assert len(graph_interpolation(g)) == total_capacity(g)

    def test_similarity_equivariance(self, rng):
        g = generic_graph(rng, k=6)
        t = SimilarityTransform(scale=2.5, translation=np.array([1.0, -2.0, 0.5]))
        got = graph_interpolation(transform_graph(g, t))
        want = apply_similarity(graph_interpolation(g), t)
        np.testing.assert_allclose(got.points, want.points, atol=1e-9)


class TestGraphGaussian:
    def test_point_count_and_labels(self, rng):
        g = generic_graph(rng, k=5, max_capacity=6)
        cloud = graph_gaussian(g, compute_frames(g), seed=1)
        assert len(cloud) == total_capacity(g)
        counts = {v.id: v.capacity for v in g.vertices}
        for vid, cap in counts.items():
            assert np.sum(cloud.source_vertex == vid) == cap

    def test_kappa_zero_degenerates_to_copies(self, rng):
        g = generic_graph(rng, k=4)
        cloud = graph_gaussian(g, compute_frames(g), kappa=0.0, seed=2)
        from msgen.model import expand_per_point
        np.testing.assert_allclose(cloud.points, expand_per_point(g, g.locations()))

    def test_sample_mean_near_vertex(self):
        g = MsgGraph.make([MsgVertex(0, (3.0, -1.0, 2.0), 1),
                           MsgVertex(1, (4.0, -1.0, 2.0), 1)], [(0, 1)])
        frames = compute_frames(g)
        draws = np.stack([
            graph_gaussian(g, frames, kappa=0.5, seed=s).points[0]
            for s in range(20000)
        ])
        sf = frames[0].scale_factor
        assert np.abs(draws.mean(axis=0) - [3.0, -1.0, 2.0]).max() < 0.01 * sf

    def test_scale_translation_covariance_pointwise(self, rng):
        # Unit draws are scaled after sampling, so scaling + translation
        # commute with generation exactly; rotation only in distribution.
        g = generic_graph(rng, k=5)
        t = SimilarityTransform(scale=3.0, translation=np.array([5.0, 0.0, -2.0]))
        got = graph_gaussian(transform_graph(g, t), compute_frames(transform_graph(g, t)),
                             kappa=0.5, seed=7)
        want = apply_similarity(graph_gaussian(g, compute_frames(g), kappa=0.5, seed=7), t)
        np.testing.assert_allclose(got.points, want.points, atol=1e-9)

    def test_determinism(self, rng):
        g = generic_graph(rng, k=5)
        frames = compute_frames(g)
        a = graph_gaussian(g, frames, seed=3)
        b = graph_gaussian(g, frames, seed=3)
        np.testing.assert_array_equal(a.points, b.points)
