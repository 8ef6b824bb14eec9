import numpy as np
import pytest

from msgen.errors import InvalidInputError
from msgen.extract import ExtractParams
from msgen.geometry import PointCloud, chamfer_distance, weighted_chamfer_distance
from msgen.model import ModelConfig, build_graph_batch, forward_points, init_weights
from msgen.autodiff import Tensor
from msgen.shapes import FAMILIES, default_params, surface_points, synth_shape
from msgen.training import (DatasetSpec, TrainConfig, build_dataset, evaluate,
                            load_checkpoint, load_dataset, make_generator,
                            save_checkpoint, save_dataset, save_loss_csv, train,
                            weighted_chamfer_loss)
from conftest import generic_graph


class TestShapes:
    def test_sphere_radius(self, rng):
        pts = surface_points("sphere", {"radius": 0.8}, 400, rng)
        np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 0.8, atol=1e-9)

    def test_box_points_on_faces(self, rng):
        dims = (1.0, 2.0, 0.5)
        pts = surface_points("box", {"dims": dims}, 500, rng)
        half = np.array(dims) / 2
        on_face = np.isclose(np.abs(pts), half[None, :], atol=1e-12).any(axis=1)
        assert on_face.all()

    def test_table_area_proportional_split(self, rng):
        params = {"top": (1.0, 0.8, 0.06), "leg_side": 0.12, "leg_height": 1.5}
        pts = surface_points("table", params, 2000, rng)
        top_w, top_d, top_t = params["top"]
        leg_h = params["leg_height"]

        def box_area(a, b, c):
            return 2 * (a * b + a * c + b * c)

        top_area = box_area(top_w, top_d, top_t)
        leg_area = 4 * box_area(params["leg_side"], params["leg_side"], leg_h)
        on_top = pts[:, 2] > leg_h - 1e-9
        expected = 2000 * top_area / (top_area + leg_area)
        assert np.sum(on_top) == pytest.approx(expected, abs=3)

    def test_pose_determinism(self):
        params = {"radius": 0.06, "height": 1.9}
        a = synth_shape("cylinder", params, 256, seed=5)
        b = synth_shape("cylinder", params, 256, seed=5)
        np.testing.assert_array_equal(a.points, b.points)

    def test_unit_diagonal_before_pose(self):
        params = {"dims": (1.8, 0.15, 0.15)}
        cloud = synth_shape("box", params, 400, seed=3, pose=False)
        assert cloud.bbox_diagonal() == pytest.approx(1.0, rel=1e-6)

    def test_unknown_family(self, rng):
        with pytest.raises(InvalidInputError):
            surface_points("torus", {}, 10, rng)

    def test_default_params_cover_all_families(self, rng):
        for family in FAMILIES:
            params = default_params(family, rng)
            pts = surface_points(family, params, 200, rng)
            assert pts.shape == (200, 3)


class TestBuildDataset:
    def test_counts_and_structure(self):
        spec = DatasetSpec(counts={"box": 2, "lamp": 1}, points_per_shape=256,
                           msgs_per_shape=3, seed=4,
                           extract=ExtractParams(fine_k_range=(48, 64),
                                                 pick_range=(8, 16)))
        entries = build_dataset(spec)
        assert len(entries) == 3
        assert sum(len(e.graphs) for e in entries) == 9
        for e in entries:
            for g in e.graphs:
                assert sum(v.capacity for v in g.vertices) == 256

    def test_determinism(self):
        spec = DatasetSpec(counts={"cylinder": 2}, seed=8)
        a = build_dataset(spec)
        b = build_dataset(spec)
        for ea, eb in zip(a, b):
            np.testing.assert_array_equal(ea.cloud.points, eb.cloud.points)
            assert ea.graphs == eb.graphs

    def test_too_few_points_rejected(self):
        with pytest.raises(InvalidInputError):
            DatasetSpec(counts={"box": 1}, points_per_shape=64)


class TestLoss:
    def test_matches_reference_metric(self, rng):
        g = generic_graph(rng, k=5, max_capacity=6)
        batch = build_graph_batch(g)
        config = ModelConfig(channels=8, decoder_widths=(16, 8))
        weights = init_weights(config, seed=0)
        eps = rng.standard_normal((batch.num_points, 8))
        points = forward_points(weights.as_tensors(), batch, config, eps)
        gt = rng.standard_normal((30, 3))
        loss = weighted_chamfer_loss(points, gt, batch)
        ge = PointCloud(points.data, source_vertex=batch.point_vertex_ids)
        caps = {v.id: v.capacity for v in g.vertices}
        want = weighted_chamfer_distance(ge, PointCloud(gt), caps,
                                         k=batch.num_vertices)
        assert loss.item() == pytest.approx(want, rel=1e-12)


class TestTrain:
    def small_dataset(self, seed=5):
        return build_dataset(DatasetSpec(
            counts={"table": 1}, points_per_shape=256, msgs_per_shape=1,
            seed=seed, extract=ExtractParams(fine_k_range=(48, 64),
                                             pick_range=(10, 20))))

    def test_overfit_smoke(self):
        # 50 optimization steps on one shape cut the loss by >= 20%.
        ds = self.small_dataset()
        cfg = TrainConfig(epochs=50, batch=1, seed=0,
                          model=ModelConfig(channels=32))
        res = train(ds, cfg)
        assert res.loss_history[-1] < 0.8 * res.loss_history[0]

    def test_zero_epochs_keeps_initialization(self):
        ds = self.small_dataset()
        cfg = TrainConfig(epochs=0, batch=1, seed=3)
        res = train(ds, cfg)
        rng = np.random.default_rng(3)
        expected = init_weights(cfg.model, seed=int(rng.integers(2 ** 63)))
        for name in expected.tensors:
            np.testing.assert_array_equal(res.weights.tensors[name],
                                          expected.tensors[name])

    def test_seed_reproducibility(self):
        ds = self.small_dataset()
        cfg = TrainConfig(epochs=3, batch=2, seed=12, model=ModelConfig(channels=8))
        a = train(ds, cfg)
        b = train(ds, cfg)
        assert a.loss_history == b.loss_history
        for name in a.weights.tensors:
            np.testing.assert_array_equal(a.weights.tensors[name],
                                          b.weights.tensors[name])

    def test_empty_dataset_rejected(self):
        with pytest.raises(InvalidInputError):
            train([], TrainConfig())


class TestEvaluate:
    def test_perfect_generator_scores_zero(self, rng):
        clouds = [PointCloud(rng.standard_normal((128, 3))) for _ in range(3)]
        consumed = []

        def oracle(graph, seed):
            # Return the ground truth itself (labels irrelevant for CD);
            # evaluate() visits clouds in order, one generate call each.
            cloud = clouds[len(consumed)]
            consumed.append(1)
            return cloud

        # k_range small so extraction succeeds on 128 points.
        report = evaluate(oracle, clouds, seed=0, k_range=(8, 16))
        assert report.mean_cd_x1e4 == 0.0

    def test_empty_test_set_rejected(self):
        with pytest.raises(InvalidInputError):
            evaluate(make_generator("interp"), [], seed=0)

    def test_interp_report_structure(self, rng):
        clouds = [PointCloud(rng.standard_normal((128, 3)))]
        report = evaluate(make_generator("interp"), clouds, seed=0, k_range=(8, 12))
        doc = report.to_json()
        assert doc["format_version"] == 1
        assert len(doc["per_shape"]) == 1
        assert doc["mean_cd_x1e4"] > 0

    def test_scaled_variant_scales_cd(self, rng):
        clouds = [PointCloud(rng.standard_normal((128, 3))) for _ in range(2)]
        base = evaluate(make_generator("interp"), clouds, seed=5, k_range=(8, 12))
        scaled = evaluate(make_generator("interp"), clouds, seed=5, k_range=(8, 12),
                          scale=True, scale_range=(1.25, 1.25))
        assert scaled.mean_cd_x1e4 == pytest.approx(1.25 * base.mean_cd_x1e4,
                                                    rel=1e-9)


class TestCheckpointAndFiles:
    def test_checkpoint_round_trip_evaluation(self, tmp_path, rng):
        weights = init_weights(ModelConfig(channels=8, decoder_widths=(16, 8)),
                               seed=1)
        clouds = [PointCloud(rng.standard_normal((128, 3)))]
        before = evaluate(make_generator("checkpoint", weights), clouds,
                          seed=3, k_range=(8, 12))
        path = tmp_path / "ck.json"
        save_checkpoint(weights, path, metadata={"epoch": 0})
        loaded, meta = load_checkpoint(path)
        after = evaluate(make_generator("checkpoint", loaded), clouds,
                         seed=3, k_range=(8, 12))
        assert meta["epoch"] == 0
        assert abs(after.mean_cd_x1e4 - before.mean_cd_x1e4) <= 1e-6

    def test_loss_csv(self, tmp_path):
        path = tmp_path / "loss.csv"
        save_loss_csv([0.5, 0.25], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,mean_wCD"
        assert lines[1].startswith("1,0.5")

    def test_dataset_round_trip(self, tmp_path):
        spec = DatasetSpec(counts={"box": 1}, points_per_shape=256,
                           msgs_per_shape=2, seed=1,
                           extract=ExtractParams(fine_k_range=(48, 64),
                                                 pick_range=(8, 16)))
        entries = build_dataset(spec)
        manifest = save_dataset(entries, tmp_path / "ds")
        loaded = load_dataset(manifest)
        assert len(loaded) == 1
        np.testing.assert_allclose(loaded[0].cloud.points,
                                   entries[0].cloud.points, atol=1e-9)
        assert loaded[0].graphs == entries[0].graphs
