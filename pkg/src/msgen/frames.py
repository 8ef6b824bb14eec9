"""Per-vertex canonical frames: rotation, scale factor, relative capacity ratio.

For each vertex the frame maps its local edge configuration to a standard
pose: the longest incident edge vector is rotated onto +x, and the longest
non-collinear one into the upper (y > 0) half of the xy-plane. Feeding the
encoder relative positions expressed in these frames, divided by the per-
vertex scale factor, is what makes the whole generator invariant to rotating,
scaling, or translating the input graph.

Vertices without enough edges get the best frame available: one edge pins
only the x-axis (the roll is resolved by the minimal rotation), no edges
leave the identity. The relative capacity ratio compares a vertex's capacity
to the mean capacity in its graph neighborhood, a scale- and density-robust
cue for how fine a structure the vertex describes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .graph import MsgGraph, neighbors_within

COLLINEAR_TOL = 1e-6
ANTIPODAL_TOL = 1e-9
DEFAULT_RCR_RADIUS = 3

_EX = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class VertexFrame:
    rotation: np.ndarray   # (3, 3), orthonormal, det +1
    scale_factor: float
    rcr: float


FrameSet = dict[int, VertexFrame]


def _edge_vectors(g: MsgGraph, vid: int) -> list[tuple[int, np.ndarray]]:
    loc = np.asarray(g.vertex(vid).location)
    out = []
    for nid in g.adjacency()[vid]:
        out.append((nid, np.asarray(g.vertex(nid).location) - loc))
    return out


def principal_edges(g: MsgGraph, vid: int) -> tuple[np.ndarray | None, np.ndarray | None]:
    """The longest incident edge vector, and the longest non-collinear one.

    Length ties break by smaller neighbor id. ``e2`` is the longest incident
    vector whose unit cross product with ``e1`` has norm above 1e-6; vectors
    below that are treated as collinear with ``e1`` and skipped.
    """
    vecs = _edge_vectors(g, vid)
    if not vecs:
        return None, None
    vecs.sort(key=lambda nv: (-float(np.linalg.norm(nv[1])), nv[0]))
    e1 = vecs[0][1]
    n1 = np.linalg.norm(e1)
    if n1 == 0:
        return e1, None
    u1 = e1 / n1
    for _, vec in vecs[1:]:
        n2 = np.linalg.norm(vec)
        if n2 == 0:
            continue
        if np.linalg.norm(np.cross(u1, vec / n2)) > COLLINEAR_TOL:
            return e1, vec
    return e1, None


def vertex_rotation(e1: np.ndarray | None, e2: np.ndarray | None) -> np.ndarray:
    """Rotation mapping e1 to +x and e2 into the y > 0 half of the xy-plane.

    With both edges present this is the Gram-Schmidt frame (rows u, y', z').
    With only e1, the minimal rotation carrying e1/|e1| onto +x; when e1 is
    antipodal to +x within 1e-9 the rotation axis is fixed to +z. With
    neither, the identity.
    """
    if e1 is None:
        return np.eye(3)
    e1 = np.asarray(e1, dtype=np.float64)
    n1 = np.linalg.norm(e1)
    if n1 == 0:
        raise InvalidInputError("principal edge e1 must be non-zero")
    u = e1 / n1
    if e2 is not None:
        e2 = np.asarray(e2, dtype=np.float64)
        y = e2 - (e2 @ u) * u
        ny = np.linalg.norm(y)
        if ny <= 0:
            raise InvalidInputError("e2 must not be collinear with e1")
        y = y / ny
        z = np.cross(u, y)
        return np.stack([u, y, z])
    c = float(u @ _EX)
    if c < -1.0 + ANTIPODAL_TOL:
        # u ~ -x: rotate by pi about +z.
        return np.diag([-1.0, -1.0, 1.0])
    v = np.cross(u, _EX)
    vx = np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])
    return np.eye(3) + vx + (vx @ vx) / (1.0 + c)


def vertex_scale_factor(g: MsgGraph, vid: int) -> float:
    """Mean incident edge length; isolated vertices fall back to the graph mean."""
    vecs = _edge_vectors(g, vid)
    if vecs:
        return float(np.mean([np.linalg.norm(v) for _, v in vecs]))
    lengths = _all_edge_lengths(g)
    if lengths:
        return float(np.mean(lengths))
    warnings.warn("graph has no edges; scale factors fall back to 1.0", stacklevel=2)
    return 1.0


def _all_edge_lengths(g: MsgGraph) -> list[float]:
    locs = {v.id: np.asarray(v.location) for v in g.vertices}
    return [float(np.linalg.norm(locs[u] - locs[v])) for u, v in g.edges]


def relative_capacity_ratio(g: MsgGraph, vid: int,
                            radius: int = DEFAULT_RCR_RADIUS) -> float:
    """Capacity of vid divided by the mean capacity within ``radius`` hops."""
    hood = neighbors_within(g, vid, radius)
    caps = [g.vertex(n).capacity for n in hood]
    return float(g.vertex(vid).capacity / np.mean(caps))


def compute_frames(g: MsgGraph, rcr_radius: int = DEFAULT_RCR_RADIUS) -> FrameSet:
    """One VertexFrame per vertex."""
    frames: FrameSet = {}
    lengths = _all_edge_lengths(g)
    graph_mean = float(np.mean(lengths)) if lengths else None
    if graph_mean is None and g.vertices:
        warnings.warn("graph has no edges; scale factors fall back to 1.0",
                      stacklevel=2)
    adjacency = g.adjacency()
    locs = {v.id: np.asarray(v.location) for v in g.vertices}
    for v in g.vertices:
        incident = [locs[n] - locs[v.id] for n in adjacency[v.id]]
        e1, e2 = principal_edges(g, v.id)
        rotation = vertex_rotation(e1, e2)
        if incident:
            sf = float(np.mean([np.linalg.norm(vec) for vec in incident]))
        else:
            sf = graph_mean if graph_mean is not None else 1.0
        frames[v.id] = VertexFrame(
            rotation=rotation,
            scale_factor=sf,
            rcr=relative_capacity_ratio(g, v.id, rcr_radius),
        )
    return frames
