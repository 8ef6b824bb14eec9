import json

import numpy as np
import pytest

from msgen.cli import main
from msgen.geometry import PointCloud, load_cloud, save_cloud
from msgen.graph import load_graph, save_graph, total_capacity
from conftest import generic_graph


@pytest.fixture
def cloud_file(tmp_path):
    pts = np.random.default_rng(0).standard_normal((256, 3))
    path = tmp_path / "cloud.xyz"
    save_cloud(PointCloud(pts), path)
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestExtractCommand:
    def test_byte_identical_across_runs(self, tmp_path, cloud_file):
        out1, out2 = tmp_path / "g1.json", tmp_path / "g2.json"
        args = ["extract", "--in", cloud_file, "--seed", "7",
                "--fine-k", "48:64", "--pick", "8:16"]
        assert run(*args, "--out", out1) == 0
        assert run(*args, "--out", out2) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_graph_is_valid(self, tmp_path, cloud_file):
        out = tmp_path / "g.json"
        assert run("extract", "--in", cloud_file, "--out", out,
                   "--fine-k", "48:64", "--pick", "8:16") == 0
        g = load_graph(out)
        assert total_capacity(g) == 256

    def test_missing_file_is_runtime_error(self, tmp_path, capsys):
        code = run("extract", "--in", tmp_path / "nope.xyz",
                   "--out", tmp_path / "g.json")
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestGenerateCommand:
    def test_interp_line_count(self, tmp_path, rng):
        g = generic_graph(rng, k=6)
        gpath = tmp_path / "g.json"
        save_graph(g, gpath)
        out = tmp_path / "p.xyz"
        assert run("generate", "--graph", gpath, "--method", "interp",
                   "--out", out) == 0
        lines = [l for l in out.read_text().splitlines() if l.strip()]
        assert len(lines) == total_capacity(g)

    def test_gaussian_seeded(self, tmp_path, rng):
        g = generic_graph(rng, k=5)
        gpath = tmp_path / "g.json"
        save_graph(g, gpath)
        a, b = tmp_path / "a.xyz", tmp_path / "b.xyz"
        run("generate", "--graph", gpath, "--method", "gaussian", "--seed", "3",
            "--out", a)
        run("generate", "--graph", gpath, "--method", "gaussian", "--seed", "3",
            "--out", b)
        assert a.read_bytes() == b.read_bytes()


class TestEditCommand:
    def test_apply_edit_list(self, tmp_path, rng):
        g = generic_graph(rng, k=5)
        gpath = tmp_path / "g.json"
        save_graph(g, gpath)
        edits = [
            {"kind": "add_vertex", "id": 99, "location": [0, 0, 5], "capacity": 4},
            {"kind": "add_edge", "edge": [99, 0]},
            {"kind": "set_capacity", "id": 0, "capacity": 17},
        ]
        epath = tmp_path / "edits.json"
        epath.write_text(json.dumps(edits))
        out = tmp_path / "edited.json"
        assert run("edit", "--graph", gpath, "--edits", epath, "--out", out) == 0
        edited = load_graph(out)
        assert edited.vertex(99).capacity == 4
        assert edited.vertex(0).capacity == 17
        assert (0, 99) in edited.edges

    def test_invalid_edit_fails(self, tmp_path, rng, capsys):
        g = generic_graph(rng, k=4)
        gpath = tmp_path / "g.json"
        save_graph(g, gpath)
        epath = tmp_path / "edits.json"
        epath.write_text(json.dumps([{"kind": "set_capacity", "id": 0,
                                      "capacity": 0}]))
        assert run("edit", "--graph", gpath, "--edits", epath,
                   "--out", tmp_path / "x.json") == 1


class TestPipelineCommands:
    def test_synth_train_eval(self, tmp_path):
        ds_dir = tmp_path / "ds"
        assert run("synth", "--families", "box,cylinder", "--count", "1",
                   "--points", "256", "--msgs", "1", "--seed", "3",
                   "--out-dir", ds_dir) == 0
        manifest = ds_dir / "manifest.json"
        assert manifest.exists()
        doc = json.loads(manifest.read_text())
        assert len(doc["entries"]) == 2

        ck = tmp_path / "ck.json"
        csv = tmp_path / "loss.csv"
        assert run("train", "--manifest", manifest, "--out-checkpoint", ck,
                   "--loss-csv", csv, "--epochs", "1", "--batch", "2",
                   "--channels", "8", "--seed", "0") == 0
        assert ck.exists()
        assert csv.read_text().startswith("epoch,mean_wCD")

        report = tmp_path / "report.json"
        assert run("eval", "--manifest", manifest, "--checkpoint", ck,
                   "--k", "8:16", "--seed", "1", "--out", report) == 0
        doc = json.loads(report.read_text())
        assert doc["mean_cd_x1e4"] > 0
        assert len(doc["per_shape"]) == 2

    def test_eval_baseline_method(self, tmp_path):
        ds_dir = tmp_path / "ds"
        run("synth", "--families", "box", "--count", "1", "--points", "256",
            "--msgs", "1", "--seed", "3", "--out-dir", ds_dir)
        report = tmp_path / "r.json"
        assert run("eval", "--manifest", ds_dir / "manifest.json", "--method",
                   "interp", "--k", "8:16", "--out", report) == 0
        assert json.loads(report.read_text())["model"] == "interp"


class TestUsage:
    def test_help_exits_zero(self, capsys):
        for sub in ("synth", "extract", "generate", "train", "eval", "edit",
                    "gradcheck", "serve"):
            with pytest.raises(SystemExit) as exc:
                run(sub, "--help")
            assert exc.value.code == 0
            assert "usage" in capsys.readouterr().out

    def test_unknown_flag_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("extract", "--bogus", "x")
        assert exc.value.code == 2

    def test_gradcheck_small(self, capsys):
        assert run("gradcheck", "--seed", "0") == 0
        out = capsys.readouterr().out
        assert "full-model max relative error" in out
