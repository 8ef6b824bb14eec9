"""Finite-difference validation of every autodiff primitive and the full model.

Each primitive gets a small random instance wrapped into a scalar function of
its inputs; the full-model check differentiates the capacity-weighted Chamfer
loss of a tiny generator configuration with respect to all weights. Inputs
are kept away from non-differentiable points (kinks, zero norms); the
nearest-neighbour matches inside the loss are locally constant for the
checked instances.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, finite_difference_check
from .graph import MsgGraph, MsgVertex
from .model import ModelConfig, build_graph_batch, forward_points, init_weights
from .training import weighted_chamfer_loss

PRIMITIVE_TOL = 1e-6
FULL_MODEL_TOL = 1e-4


def _away_from_zero(rng, shape, low=0.2, high=1.5):
    mag = rng.uniform(low, high, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


def primitive_gradchecks(seed: int = 0) -> float:
    """Max relative error across one check per differentiable primitive."""
    rng = np.random.default_rng(seed)
    w = _away_from_zero(rng, (4, 3))
    seg = np.array([0, 0, 1, 2, 2, 2])
    idx = np.array([0, 2, 2, 1])
    rots = np.stack([np.linalg.qr(rng.standard_normal((3, 3)))[0] for _ in range(4)])
    seg_w = _away_from_zero(rng, (3, 2))

    checks = {
        "add": lambda p: ad.tsum(p["a"] + p["b"]),
        "sub": lambda p: ad.tsum(p["a"] - p["b"]),
        "mul": lambda p: ad.tsum(p["a"] * p["b"]),
        "div": lambda p: ad.tsum(p["a"] / p["b"]),
        "broadcast_row": lambda p: ad.tsum(p["a"] * ad.reshape_col(p["v"])),
        "matmul": lambda p: ad.tsum(ad.matmul(p["a"], p["m"])),
        "matvec": lambda p: ad.tsum(ad.matmul(p["a"], p["v3"])),
        "concat": lambda p: ad.tsum(ad.concat([p["a"], p["b"]], axis=1) * Tensor(w[:, [0, 1, 2, 0, 1, 2]])),
        "gather_rows": lambda p: ad.tsum(ad.gather_rows(p["a"], idx) * Tensor(w)),
        "slice_cols": lambda p: ad.tsum(ad.slice_cols(p["a"], 1, 3)),
        "sum_axis": lambda p: ad.tsum(ad.tsum(p["a"], axis=0) * p["v3"]),
        "mean": lambda p: ad.tmean(p["a"]),
        "mean_axis": lambda p: ad.tsum(ad.tmean(p["a"], axis=1) * p["v"]),
        "leaky_relu": lambda p: ad.tsum(ad.leaky_relu(p["a"], 0.2)),
        "softplus": lambda p: ad.tsum(ad.softplus(p["a"])),
        "exp": lambda p: ad.tsum(ad.exp(p["a"])),
        "sqrt": lambda p: ad.tsum(ad.sqrt(p["pos"])),
        "row_norms": lambda p: ad.tsum(ad.row_norms(p["a"]) * p["v"]),
        "rotate_rows": lambda p: ad.tsum(ad.rotate_rows(p["a"], rots) * Tensor(w)),
        "segment_softmax": lambda p: ad.tsum(
            ad.segment_softmax(p["v6"], seg, 3) * Tensor(np.arange(1.0, 7.0))),
        "segment_sum": lambda p: ad.tsum(
            ad.segment_sum(p["b6"], seg, 3) * Tensor(seg_w)),
    }

    worst = 0.0
    for name, fn in checks.items():
        params = {
            "a": _away_from_zero(rng, (4, 3)),
            "b": _away_from_zero(rng, (4, 3)),
            "m": _away_from_zero(rng, (3, 2)),
            "v": _away_from_zero(rng, (4,)),
            "v3": _away_from_zero(rng, (3,)),
            "v6": _away_from_zero(rng, (6,)),
            "b6": _away_from_zero(rng, (6, 2)),
            "pos": rng.uniform(0.5, 2.0, size=(4, 3)),
        }
        err = finite_difference_check(fn, params)
        if err > worst:
            worst = err
    return worst


def _tiny_graph(rng) -> MsgGraph:
    locs = rng.standard_normal((5, 3)) * 1.5
    caps = rng.integers(1, 5, size=5)  # N <= 20
    verts = [MsgVertex(i, locs[i], int(caps[i])) for i in range(5)]
    edges = {(0, 1), (1, 2), (2, 3), (3, 4), (0, 2), (1, 4)}
    return MsgGraph.make(verts, edges)


def full_model_gradcheck(seed: int = 0, channels: int = 8,
                         decoder_widths=(32, 16), h: float = 1e-5) -> float:
    """Finite-difference check of d(loss)/d(weights) through the whole model."""
    rng = np.random.default_rng(seed)
    config = ModelConfig(channels=channels, decoder_widths=decoder_widths)
    g = _tiny_graph(rng)
    batch = build_graph_batch(g)
    weights = init_weights(config, seed=int(rng.integers(2 ** 31)))
    eps = rng.standard_normal((batch.num_points, channels))
    gt = rng.standard_normal((batch.num_points, 3)) * 1.5

    def loss_fn(params: dict[str, Tensor]) -> Tensor:
        points = forward_points(params, batch, config, eps)
        return weighted_chamfer_loss(points, gt, batch)

    return finite_difference_check(loss_fn, weights.tensors, h=h)
