"""Desk-scale training and evaluation.

Training pairs come from the synthetic corpus: each shape is sampled once
and abstracted into several structure graphs (distinct extraction seeds, to
wash out the extractor's randomness). Each optimization step generates a
cloud with fresh noise, scores it with the capacity-weighted Chamfer loss
against the ground truth, and applies Adam after accumulating gradients over
a small group of samples.

Evaluation follows the opposite convention from training: test graphs come
from a single plain k-means (k drawn uniformly from the eval range), the
metric is the standard (unweighted) Chamfer distance, reported multiplied by
1e4, and the generation seed is fixed for comparability. Rotated/scaled
variants transform the graph and the ground truth together before scoring.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import model as mdl
from . import autodiff as ad
from .autodiff import AdamState, Tensor, adam_step, backward
from .baselines import graph_gaussian, graph_interpolation
from .errors import InvalidInputError, NonFiniteError, ParseError
from .extract import ExtractParams, extract_msg, extract_msg_plain
from .frames import compute_frames
from .geometry import (PointCloud, SimilarityTransform, chamfer_distance,
                       load_cloud, random_rotation, save_cloud)
from .graph import MsgGraph, load_graph, save_graph, total_capacity
from .model import GraphBatch, ModelConfig, ModelWeights, build_graph_batch
from .shapes import FAMILIES, default_params, synth_shape


@dataclass(frozen=True)
class DatasetSpec:
    counts: dict[str, int]                       # shapes per family
    points_per_shape: int = 512
    msgs_per_shape: int = 5
    extract: ExtractParams = field(default_factory=ExtractParams)
    seed: int = 0

    def __post_init__(self):
        for family in self.counts:
            if family not in FAMILIES:
                raise InvalidInputError(f"unknown shape family {family!r}")
        if any(c < 1 for c in self.counts.values()):
            raise InvalidInputError("family counts must be >= 1")
        if self.points_per_shape < self.extract.fine_k_range[1]:
            raise InvalidInputError(
                f"points_per_shape must be >= max fine k "
                f"({self.extract.fine_k_range[1]})"
            )

    @staticmethod
    def uniform(count_per_family: int, **kwargs) -> "DatasetSpec":
        return DatasetSpec(counts={f: count_per_family for f in FAMILIES}, **kwargs)


@dataclass
class DatasetEntry:
    family: str
    cloud: PointCloud
    graphs: list[MsgGraph]


def build_dataset(spec: DatasetSpec) -> list[DatasetEntry]:
    """Per shape: one posed cloud plus msgs_per_shape extractions."""
    root = np.random.SeedSequence(spec.seed)
    entries = []
    families = [f for f in sorted(spec.counts) for _ in range(spec.counts[f])]
    for shape_seq in root.spawn(len(families)):
        family = families[len(entries)]
        shape_rng = np.random.default_rng(shape_seq)
        params = default_params(family, shape_rng)
        pose_seed = int(shape_rng.integers(2 ** 63))
        cloud = synth_shape(family, params, spec.points_per_shape, pose_seed)
        graphs = []
        for _ in range(spec.msgs_per_shape):
            extract_seed = int(shape_rng.integers(2 ** 63))
            p = ExtractParams(
                coarse_k_range=spec.extract.coarse_k_range,
                fine_k_range=spec.extract.fine_k_range,
                pick_range=spec.extract.pick_range,
                edge_tau=spec.extract.edge_tau,
                mix_mode=spec.extract.mix_mode,
                connect_components=spec.extract.connect_components,
                seed=extract_seed,
            )
            graphs.append(extract_msg(cloud, p))
        entries.append(DatasetEntry(family, cloud, graphs))
    return entries


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def _argmin_matches(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Index of the nearest row of b for every row of a (for the match step
    only; exact distances are recomputed differentiably on the matches)."""
    sq = ((a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :]
          - 2.0 * (a @ b.T))
    return np.argmin(sq, axis=1)


def weighted_chamfer_loss(points: Tensor, gt: np.ndarray,
                          batch: GraphBatch) -> Tensor:
    """Differentiable capacity-weighted Chamfer loss.

    Gradients flow through the argmin matches only (subgradient); matches are
    recomputed from the current point positions on every call.
    """
    ge = points.data
    idx_ge = _argmin_matches(gt, ge)   # nearest generated point per gt point
    idx_gt = _argmin_matches(ge, gt)   # nearest gt point per generated point
    term1 = ad.tmean(ad.row_norms(ad.gather_rows(points, idx_ge) - Tensor(gt)))
    caps = batch.capacities[batch.expand_idx].astype(np.float64)
    dists = ad.row_norms(points - Tensor(gt[idx_gt]))
    term2 = ad.tsum(dists * Tensor(1.0 / caps)) * Tensor(1.0 / batch.num_vertices)
    return term1 + term2


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch: int = 8
    alpha: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.99
    eval_k_range: tuple[int, int] = (16, 64)
    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if self.batch < 1:
            raise InvalidInputError("batch must be >= 1")


@dataclass
class TrainResult:
    weights: ModelWeights
    loss_history: list[float]       # mean wCD per epoch
    metadata: dict


def _training_pairs(dataset: list[DatasetEntry]):
    pairs = []
    for i, entry in enumerate(dataset):
        for j, g in enumerate(entry.graphs):
            pairs.append((f"shape{i}/msg{j}", build_graph_batch(g), entry.cloud.points))
    return pairs


def train(dataset: list[DatasetEntry], cfg: TrainConfig,
          log=None) -> TrainResult:
    """Optimize generator weights on (graph, cloud) pairs with Adam."""
    if not dataset:
        raise InvalidInputError("dataset must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    weights = mdl.init_weights(cfg.model, seed=int(rng.integers(2 ** 63)))
    state = AdamState(alpha=cfg.alpha, beta1=cfg.beta1, beta2=cfg.beta2)
    pairs = _training_pairs(dataset)
    c = cfg.model.channels

    history: list[float] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        epoch_losses = []
        grad_accum: dict[str, np.ndarray] = {}
        group = 0
        for oi in order:
            sample_id, batch, gt = pairs[oi]
            eps = rng.standard_normal((batch.num_points, c))
            params = weights.as_tensors(requires_grad=True)
            try:
                points = mdl.forward_points(params, batch, cfg.model, eps)
                loss = weighted_chamfer_loss(points, gt, batch)
                backward(loss)
            except NonFiniteError as e:
                raise NonFiniteError(
                    f"training aborted at step {step} on {sample_id}: {e}"
                ) from e
            epoch_losses.append(loss.item())
            for name, t in params.items():
                if t.grad is not None:
                    acc = grad_accum.setdefault(name, np.zeros_like(t.data))
                    acc += t.grad
            group += 1
            step += 1
            if group == cfg.batch:
                for g_arr in grad_accum.values():
                    g_arr /= group
                adam_step(state, weights.tensors, grad_accum)
                grad_accum = {}
                group = 0
        if group:
            for g_arr in grad_accum.values():
                g_arr /= group
            adam_step(state, weights.tensors, grad_accum)
        mean_loss = float(np.mean(epoch_losses))
        history.append(mean_loss)
        if log:
            log(f"epoch {epoch + 1}/{cfg.epochs}: mean wCD {mean_loss:.6f}")
    metadata = {
        "epochs": cfg.epochs,
        "loss_history": history,
        "train_seed": cfg.seed,
        "samples_per_epoch": len(pairs),
    }
    return TrainResult(weights, history, metadata)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def make_generator(method: str, weights: ModelWeights | None = None,
                   kappa: float = 0.5):
    """A uniform (graph, seed) -> PointCloud callable for model or baselines."""
    if method == "checkpoint":
        if weights is None:
            raise InvalidInputError("checkpoint generator needs weights")
        return lambda g, seed: mdl.generate(g, weights, seed=seed)
    if method == "interp":
        return lambda g, seed: graph_interpolation(g, seed)
    if method == "gaussian":
        return lambda g, seed: graph_gaussian(g, compute_frames(g), kappa, seed)
    raise InvalidInputError(f"unknown generation method {method!r}")


@dataclass
class EvalReport:
    per_shape: list[dict]
    mean_cd_x1e4: float
    variant: dict

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "variant": self.variant,
            "per_shape": self.per_shape,
            "mean_cd_x1e4": self.mean_cd_x1e4,
        }


def evaluate(generator, clouds: list[PointCloud], *, seed: int = 0,
             k_range: tuple[int, int] = (16, 64), rotate: bool = False,
             scale: bool = False, scale_range: tuple[float, float] = (0.8, 1.25),
             edge_tau: float = 1.8) -> EvalReport:
    """Mean Chamfer distance (x 1e4) of the generator over test clouds.

    Test graphs come from plain k-means with k drawn uniformly from k_range.
    With ``rotate``/``scale``, a random similarity transform is applied to
    graph and ground truth together before generation.
    """
    if not clouds:
        raise InvalidInputError("evaluation needs a non-empty test set")
    rng = np.random.default_rng(seed)
    per_shape = []
    for i, cloud in enumerate(clouds):
        k = int(rng.integers(k_range[0], k_range[1] + 1))
        graph_seed = int(rng.integers(2 ** 63))
        gen_seed = int(rng.integers(2 ** 63))
        g = extract_msg_plain(cloud, k, graph_seed, edge_tau)
        gt = cloud
        if rotate or scale:
            t = SimilarityTransform(
                rotation=random_rotation(rng) if rotate else np.eye(3),
                scale=float(rng.uniform(*scale_range)) if scale else 1.0,
                translation=np.zeros(3),
            )
            g = transform_graph(g, t)
            gt = PointCloud(t.apply(gt.points))
        generated = generate_capped(generator, g, gen_seed)
        cd = chamfer_distance(generated, gt)
        per_shape.append({"shape": i, "k": k, "cd_x1e4": cd * 1e4})
    mean_cd = float(np.mean([s["cd_x1e4"] for s in per_shape]))
    return EvalReport(per_shape, mean_cd,
                      {"seed": seed, "k_range": list(k_range),
                       "rotate": rotate, "scale": scale})


def generate_capped(generator, g: MsgGraph, seed: int) -> PointCloud:
    out = generator(g, seed)
    if len(out) != total_capacity(g):
        raise InvalidInputError(
            f"generator produced {len(out)} points for capacity {total_capacity(g)}"
        )
    return out


def transform_graph(g: MsgGraph, t: SimilarityTransform) -> MsgGraph:
    """Apply a similarity transform to every vertex location."""
    from .graph import MsgVertex
    verts = [MsgVertex(v.id, t.apply(np.asarray(v.location)), v.capacity)
             for v in g.vertices]
    return MsgGraph.make(verts, g.edges)


# ---------------------------------------------------------------------------
# Checkpoints and on-disk datasets
# ---------------------------------------------------------------------------

def save_checkpoint(result_or_weights, path, metadata: dict | None = None) -> None:
    if isinstance(result_or_weights, TrainResult):
        weights = result_or_weights.weights
        metadata = {**result_or_weights.metadata, **(metadata or {})}
    else:
        weights = result_or_weights
    mdl.save_weights(weights, path, metadata)


def load_checkpoint(path) -> tuple[ModelWeights, dict]:
    return mdl.load_weights(path)


def save_loss_csv(history: list[float], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "mean_wCD"])
        for epoch, value in enumerate(history, start=1):
            writer.writerow([epoch, repr(float(value))])


def save_dataset(entries: list[DatasetEntry], out_dir) -> str:
    """Write shapes/graphs to disk plus a manifest; returns the manifest path."""
    shapes_dir = os.path.join(out_dir, "shapes")
    graphs_dir = os.path.join(out_dir, "graphs")
    os.makedirs(shapes_dir, exist_ok=True)
    os.makedirs(graphs_dir, exist_ok=True)
    manifest = {"format_version": 1, "entries": []}
    for i, entry in enumerate(entries):
        shape_rel = f"shapes/{i:04d}.xyz"
        save_cloud(entry.cloud, os.path.join(out_dir, shape_rel))
        graph_rels = []
        for j, g in enumerate(entry.graphs):
            rel = f"graphs/{i:04d}_{j}.json"
            save_graph(g, os.path.join(out_dir, rel))
            graph_rels.append(rel)
        manifest["entries"].append(
            {"family": entry.family, "shape": shape_rel, "graphs": graph_rels}
        )
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")
    return manifest_path


def load_dataset(manifest_path) -> list[DatasetEntry]:
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, "r", encoding="utf-8") as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e}", path=str(manifest_path)) from None
    if manifest.get("format_version") != 1:
        raise ParseError("unsupported manifest format_version",
                         path=str(manifest_path), field="format_version")
    entries = []
    for edoc in manifest["entries"]:
        cloud = load_cloud(os.path.join(base, edoc["shape"]))
        graphs = [load_graph(os.path.join(base, rel)) for rel in edoc["graphs"]]
        entries.append(DatasetEntry(edoc.get("family", "unknown"), cloud, graphs))
    return entries
