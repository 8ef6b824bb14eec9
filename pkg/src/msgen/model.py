"""The point cloud generator: graph attention encoder + per-point offset decoder.

Pipeline per graph: canonical frames are computed for every vertex; a
relative graph-attention layer encodes each vertex from its neighbors'
rotated, scale-normalized relative positions and capacity ratios (never
absolute coordinates); two standard graph-attention layers refine the
features; a linear head widens them to 2c channels that split into a feature
vector and a (softplus-positive) noise variance per vertex. Vertex rows are
then expanded so vertex i contributes capacity-many point rows, each point
gets its own reparameterized Gaussian noise draw, a shared MLP decodes
[noise || feature] into a 3D offset, and the offset is carried back out of
the canonical frame: point = R^T * offset * SF + L.

Because the encoder sees only invariant quantities and the assembly step
re-applies each vertex's own frame, rotating/scaling/translating the input
graph transforms the generated cloud the same way (for graphs whose vertices
all have two non-collinear edges; single-edge frames leave a free roll).

Checkpoint format (format_version 1): JSON with the config and flat
row-major tensors keyed by stable names.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInputError, ParseError, VersionError
from .frames import FrameSet, compute_frames
from .geometry import PointCloud
from .graph import MsgGraph, total_capacity

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 64
    decoder_widths: tuple[int, ...] = (128, 64)
    leaky_slope: float = 0.2
    noise_floor: float = 1e-6
    gat_depth: int = 3  # 1 relative + 2 standard; fixed

    def __post_init__(self):
        if self.channels < 2:
            raise InvalidInputError(f"channels must be >= 2, got {self.channels}")
        if self.gat_depth != 3:
            raise InvalidInputError("gat_depth is fixed at 3")
        object.__setattr__(self, "decoder_widths", tuple(int(w) for w in self.decoder_widths))

    def to_json(self) -> dict:
        return {
            "channels": self.channels,
            "decoder_widths": list(self.decoder_widths),
            "leaky_slope": self.leaky_slope,
            "noise_floor": self.noise_floor,
            "gat_depth": self.gat_depth,
        }

    @staticmethod
    def from_json(doc: dict) -> "ModelConfig":
        return ModelConfig(
            channels=int(doc["channels"]),
            decoder_widths=tuple(doc["decoder_widths"]),
            leaky_slope=float(doc["leaky_slope"]),
            noise_floor=float(doc["noise_floor"]),
            gat_depth=int(doc.get("gat_depth", 3)),
        )


@dataclass
class ModelWeights:
    config: ModelConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def as_tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad)
                for k, v in self.tensors.items()}

    def copy(self) -> "ModelWeights":
        return ModelWeights(self.config, {k: v.copy() for k, v in self.tensors.items()})


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_weights(config: ModelConfig, seed: int) -> ModelWeights:
    rng = np.random.default_rng(seed)
    c = config.channels
    tensors: dict[str, np.ndarray] = {
        "rel.attn": _glorot(rng, 5, 1, (5,)),
        "rel.proj.w": _glorot(rng, 5, c, (5, c)),
        "rel.proj.b": np.zeros(c),
        "gat1.w": _glorot(rng, c, c, (c, c)),
        "gat1.attn": _glorot(rng, 2 * c, 1, (2 * c,)),
        "gat2.w": _glorot(rng, c, c, (c, c)),
        "gat2.attn": _glorot(rng, 2 * c, 1, (2 * c,)),
        "head.w": _glorot(rng, c, 2 * c, (c, 2 * c)),
        "head.b": np.zeros(2 * c),
    }
    widths = (2 * c,) + config.decoder_widths + (3,)
    for i, (w_in, w_out) in enumerate(zip(widths[:-1], widths[1:])):
        tensors[f"dec.{i}.w"] = _glorot(rng, w_in, w_out, (w_in, w_out))
        tensors[f"dec.{i}.b"] = np.zeros(w_out)
    return ModelWeights(config, tensors)


# ---------------------------------------------------------------------------
# Precomputed per-graph constants
# ---------------------------------------------------------------------------

@dataclass
class GraphBatch:
    """Everything about one graph the forward pass needs, frames included.

    Computed once per graph: training repeats thousands of forward passes
    over the same graphs, and none of this depends on the weights.
    """

    ids: list[int]                 # vertex ids in sorted order
    capacities: np.ndarray         # (K,)
    src: np.ndarray                # (E,) attention pair source positions
    dst: np.ndarray                # (E,) attention pair target positions
    rel_feats: np.ndarray          # (E, 5) invariant pair features
    expand_idx: np.ndarray         # (N,) vertex position per point row
    point_rotations: np.ndarray    # (N, 3, 3) breeding vertex rotation
    point_scales: np.ndarray       # (N, 1)
    point_locations: np.ndarray    # (N, 3)
    point_vertex_ids: np.ndarray   # (N,) breeding vertex id

    @property
    def num_vertices(self) -> int:
        return len(self.ids)

    @property
    def num_points(self) -> int:
        return len(self.expand_idx)


def build_graph_batch(g: MsgGraph, frames: FrameSet | None = None) -> GraphBatch:
    if frames is None:
        frames = compute_frames(g)
    ids = g.ids()
    pos = {vid: i for i, vid in enumerate(ids)}
    locs = g.locations()
    caps = g.capacities()
    adjacency = g.adjacency()

    src_list: list[int] = []
    dst_list: list[int] = []
    feats: list[np.ndarray] = []
    for vid in ids:
        s = pos[vid]
        fr = frames[vid]
        rcr_s = fr.rcr
        # Self-pair first (zero relative position), then neighbors by id.
        src_list.append(s)
        dst_list.append(s)
        feats.append(np.array([0.0, 0.0, 0.0, rcr_s, rcr_s]))
        for nid in adjacency[vid]:
            t = pos[nid]
            rel = fr.rotation @ (locs[t] - locs[s]) / fr.scale_factor
            src_list.append(s)
            dst_list.append(t)
            feats.append(np.concatenate([rel, [rcr_s, frames[nid].rcr]]))

    expand_idx = np.repeat(np.arange(len(ids)), caps)
    rotations = np.stack([frames[vid].rotation for vid in ids])
    scales = np.array([frames[vid].scale_factor for vid in ids])
    return GraphBatch(
        ids=ids,
        capacities=caps,
        src=np.asarray(src_list, dtype=np.int64),
        dst=np.asarray(dst_list, dtype=np.int64),
        rel_feats=np.stack(feats),
        expand_idx=expand_idx,
        point_rotations=rotations[expand_idx],
        point_scales=scales[expand_idx, None],
        point_locations=locs[expand_idx],
        point_vertex_ids=np.asarray(ids, dtype=np.int64)[expand_idx],
    )


# ---------------------------------------------------------------------------
# Layers (tensor core)
# ---------------------------------------------------------------------------

def _relative_gat(params: dict[str, Tensor], batch: GraphBatch, slope: float) -> Tensor:
    k = batch.num_vertices
    feats = Tensor(batch.rel_feats)
    logits = ad.leaky_relu(ad.matmul(feats, params["rel.attn"]), slope)
    alpha = ad.segment_softmax(logits, batch.src, k)
    weighted = ad.mul(ad.reshape_col(alpha), feats)
    agg = ad.segment_sum(weighted, batch.src, k)
    return ad.leaky_relu(ad.add(ad.matmul(agg, params["rel.proj.w"]),
                                params["rel.proj.b"]), slope)


def _gat(params: dict[str, Tensor], prefix: str, h: Tensor,
         batch: GraphBatch, slope: float) -> Tensor:
    k = batch.num_vertices
    wh = ad.matmul(h, params[f"{prefix}.w"])
    wh_src = ad.gather_rows(wh, batch.src)
    wh_dst = ad.gather_rows(wh, batch.dst)
    logits = ad.leaky_relu(
        ad.matmul(ad.concat([wh_src, wh_dst], axis=1), params[f"{prefix}.attn"]),
        slope,
    )
    alpha = ad.segment_softmax(logits, batch.src, k)
    messages = ad.mul(ad.reshape_col(alpha), wh_dst)
    return ad.leaky_relu(ad.segment_sum(messages, batch.src, k), slope)


def _encode(params: dict[str, Tensor], batch: GraphBatch,
            config: ModelConfig) -> tuple[Tensor, Tensor]:
    c = config.channels
    h = _relative_gat(params, batch, config.leaky_slope)
    h = _gat(params, "gat1", h, batch, config.leaky_slope)
    h = _gat(params, "gat2", h, batch, config.leaky_slope)
    wide = ad.add(ad.matmul(h, params["head.w"]), params["head.b"])
    features = ad.slice_cols(wide, 0, c)
    noise_var = ad.softplus(ad.slice_cols(wide, c, 2 * c)) + Tensor(config.noise_floor)
    return features, noise_var


def _decode(params: dict[str, Tensor], point_feats: Tensor,
            config: ModelConfig) -> Tensor:
    h = point_feats
    n_layers = len(config.decoder_widths) + 1
    for i in range(n_layers):
        h = ad.add(ad.matmul(h, params[f"dec.{i}.w"]), params[f"dec.{i}.b"])
        if i < n_layers - 1:
            h = ad.leaky_relu(h, config.leaky_slope)
    return h


def forward_points(params: dict[str, Tensor], batch: GraphBatch,
                   config: ModelConfig, eps: np.ndarray) -> Tensor:
    """Differentiable generated points (N, 3) given unit noise draws eps (N, c)."""
    features, noise_var = _encode(params, batch, config)
    feat_pts = ad.gather_rows(features, batch.expand_idx)
    nv_pts = ad.gather_rows(noise_var, batch.expand_idx)
    noise = ad.mul(ad.sqrt(nv_pts), Tensor(eps))
    decoded = _decode(params, ad.concat([noise, feat_pts], axis=1), config)
    unrotated = ad.rotate_rows(decoded, batch.point_rotations)
    return ad.add(ad.mul(unrotated, Tensor(batch.point_scales)),
                  Tensor(batch.point_locations))


# ---------------------------------------------------------------------------
# Public (numpy in / numpy out) operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncodedGraph:
    features: np.ndarray        # (K, c)
    noise_variance: np.ndarray  # (K, c), strictly positive


def relative_gat_layer(g: MsgGraph, frames: FrameSet, weights: ModelWeights) -> np.ndarray:
    batch = build_graph_batch(g, frames)
    return _relative_gat(weights.as_tensors(), batch, weights.config.leaky_slope).data


def gat_layer(g: MsgGraph, h: np.ndarray, weights: ModelWeights,
              layer: str = "gat1") -> np.ndarray:
    batch = build_graph_batch(g)
    if h.shape != (batch.num_vertices, weights.config.channels):
        raise InvalidInputError(
            f"features must have shape ({batch.num_vertices}, "
            f"{weights.config.channels}), got {h.shape}"
        )
    return _gat(weights.as_tensors(), layer, Tensor(h), batch,
                weights.config.leaky_slope).data


def encode_graph(g: MsgGraph, frames: FrameSet, weights: ModelWeights) -> EncodedGraph:
    batch = build_graph_batch(g, frames)
    features, noise_var = _encode(weights.as_tensors(), batch, weights.config)
    return EncodedGraph(features.data, noise_var.data)


def expansion_matrix(capacities: np.ndarray) -> np.ndarray:
    """The explicit binary (N, K) expansion matrix; row i selects the vertex j
    with sum(C_0..C_{j-1}) <= i < sum(C_0..C_j)."""
    capacities = np.asarray(capacities, dtype=np.int64)
    n = int(capacities.sum())
    k = len(capacities)
    bounds = np.concatenate([[0], np.cumsum(capacities)])
    ep = np.zeros((n, k), dtype=np.int64)
    for j in range(k):
        ep[bounds[j]:bounds[j + 1], j] = 1
    return ep


def expand_per_point(g: MsgGraph, values: np.ndarray) -> np.ndarray:
    """Repeat vertex j's row capacity-many times, in id-sorted vertex order.

    Equivalent to pre-multiplying by the explicit expansion matrix, but via a
    gather (no (N x K) intermediate).
    """
    values = np.asarray(values)
    caps = g.capacities()
    if len(values) != len(caps):
        raise InvalidInputError(
            f"got {len(values)} rows for {len(caps)} vertices"
        )
    return values[np.repeat(np.arange(len(caps)), caps)]


def sample_point_noise(enc: EncodedGraph, g: MsgGraph, seed: int | None) -> np.ndarray:
    """Per-point reparameterized noise: sqrt(NV_i) * eps, eps ~ N(0, I)."""
    nv_pts = expand_per_point(g, enc.noise_variance)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(nv_pts.shape)
    return np.sqrt(nv_pts) * eps


def decode_offsets(point_features: np.ndarray, weights: ModelWeights) -> np.ndarray:
    c = weights.config.channels
    point_features = np.asarray(point_features, dtype=np.float64)
    if point_features.ndim != 2 or point_features.shape[1] != 2 * c:
        raise InvalidInputError(
            f"point features must have shape (N, {2 * c}), got {point_features.shape}"
        )
    return _decode(weights.as_tensors(), Tensor(point_features), weights.config).data


def assemble_point_cloud(offsets: np.ndarray, g: MsgGraph,
                         frames: FrameSet) -> PointCloud:
    """Carry per-point offsets out of their breeding vertex's canonical frame:
    point = R^T @ offset * SF + L."""
    offsets = np.asarray(offsets, dtype=np.float64)
    n = total_capacity(g)
    if offsets.shape != (n, 3):
        raise InvalidInputError(
            f"offsets must have shape ({n}, 3), got {offsets.shape}"
        )
    batch = build_graph_batch(g, frames)
    points = (np.einsum("nk,nkj->nj", offsets, batch.point_rotations)
              * batch.point_scales + batch.point_locations)
    return PointCloud(points, batch.point_vertex_ids)


def generate(g: MsgGraph, weights: ModelWeights, seed: int | None = None,
             noise: np.ndarray | None = None) -> PointCloud:
    """Generate total-capacity many points from a graph.

    ``noise`` overrides the seeded unit draws (shape (N, channels)); tests
    use it to pin the stochastic part of the pipeline.
    """
    batch = build_graph_batch(g)
    return generate_from_batch(batch, weights, seed=seed, noise=noise)


def generate_from_batch(batch: GraphBatch, weights: ModelWeights,
                        seed: int | None = None,
                        noise: np.ndarray | None = None) -> PointCloud:
    c = weights.config.channels
    if noise is None:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((batch.num_points, c))
    elif noise.shape != (batch.num_points, c):
        raise InvalidInputError(
            f"noise must have shape ({batch.num_points}, {c}), got {noise.shape}"
        )
    points = forward_points(weights.as_tensors(), batch, weights.config, noise)
    return PointCloud(points.data, batch.point_vertex_ids)


# ---------------------------------------------------------------------------
# Checkpoint I/O
# ---------------------------------------------------------------------------

def weights_to_json(weights: ModelWeights, metadata: dict | None = None) -> dict:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": weights.config.to_json(),
        "tensors": {
            name: {"shape": list(arr.shape), "data": [float(v) for v in arr.reshape(-1)]}
            for name, arr in sorted(weights.tensors.items())
        },
    }
    if metadata is not None:
        doc["metadata"] = metadata
    return doc


def weights_from_json(doc: dict, *, path: str | None = None) -> tuple[ModelWeights, dict]:
    if not isinstance(doc, dict):
        raise ParseError("checkpoint must be a JSON object", path=path)
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise VersionError(
            f"unsupported format_version {version!r} (expected {CHECKPOINT_VERSION})",
            path=path, field="format_version",
        )
    for key in ("config", "tensors"):
        if key not in doc:
            raise ParseError("checkpoint missing required field", path=path, field=key)
    config = ModelConfig.from_json(doc["config"])
    tensors = {}
    for name, tdoc in doc["tensors"].items():
        shape = tuple(tdoc["shape"])
        data = np.asarray(tdoc["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ParseError(
                f"tensor {name}: {data.size} values for shape {shape}",
                path=path, field=name,
            )
        tensors[name] = data.reshape(shape)
    return ModelWeights(config, tensors), doc.get("metadata", {})


def save_weights(weights: ModelWeights, path, metadata: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(weights_to_json(weights, metadata), f)
        f.write("\n")


def load_weights(path) -> tuple[ModelWeights, dict]:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e}", path=str(path)) from None
    return weights_from_json(doc, path=str(path))
