"""Point clouds, similarity transforms, and Chamfer-style metrics.

Distances are un-squared Euclidean throughout: the Chamfer distance is the
mean nearest-neighbour distance in both directions, and the weighted variant
divides each generated point's term by the capacity of the vertex that bred
it, so that with equal capacities the two metrics coincide exactly.

Nearest-neighbour search is brute force by default. A uniform-grid
accelerator is available and is bit-identical to the brute-force path,
including ties (broken by lower reference index).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ParseError


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidInputError(f"points must have shape (N, 3), got {pts.shape}")
    return pts


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of 3D points, optionally labelled by source vertex.

    ``source_vertex[i]`` is the id of the structure-graph vertex that bred
    point ``i``; it is required by the weighted Chamfer distance and by the
    editor UI for colouring.
    """

    points: np.ndarray
    source_vertex: np.ndarray | None = None

    def __post_init__(self):
        pts = _as_points(self.points)
        object.__setattr__(self, "points", pts)
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("point coordinates must be finite")
        if self.source_vertex is not None:
            sv = np.asarray(self.source_vertex, dtype=np.int64)
            if sv.shape != (len(pts),):
                raise InvalidInputError(
                    f"source_vertex length {sv.shape} does not match {len(pts)} points"
                )
            object.__setattr__(self, "source_vertex", sv)

    def __len__(self) -> int:
        return len(self.points)

    def bbox_diagonal(self) -> float:
        if len(self.points) == 0:
            return 0.0
        span = self.points.max(axis=0) - self.points.min(axis=0)
        return float(np.linalg.norm(span))


@dataclass(frozen=True)
class SimilarityTransform:
    """Rotation (proper), uniform scale, and translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    scale: float = 1.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        tr = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise InvalidInputError(f"rotation must be 3x3, got {rot.shape}")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9):
            raise InvalidInputError("rotation must be orthonormal within 1e-9")
        if np.linalg.det(rot) < 0:
            raise InvalidInputError("rotation must have determinant +1")
        if not self.scale > 0:
            raise InvalidInputError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "translation", tr)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * (pts @ self.rotation.T) + self.translation

    def inverse(self) -> "SimilarityTransform":
        inv_rot = self.rotation.T
        inv_scale = 1.0 / self.scale
        inv_tr = -inv_scale * (inv_rot @ self.translation)
        return SimilarityTransform(inv_rot, inv_scale, inv_tr)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix (quaternion method)."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_similarity(rng: np.random.Generator, *, scale_range=(0.5, 2.0),
                      translation_range=(-10.0, 10.0)) -> SimilarityTransform:
    rot = random_rotation(rng)
    scale = float(rng.uniform(*scale_range))
    tr = rng.uniform(translation_range[0], translation_range[1], size=3)
    return SimilarityTransform(rot, scale, tr)


def apply_similarity(cloud: PointCloud, t: SimilarityTransform) -> PointCloud:
    """Map every point p to scale * rotation @ p + translation."""
    if not np.all(np.isfinite(cloud.points)):
        raise InvalidInputError("point coordinates must be finite")
    return PointCloud(t.apply(cloud.points), cloud.source_vertex)


# ---------------------------------------------------------------------------
# Nearest neighbours
# ---------------------------------------------------------------------------

def _sq_dists_to(refs: np.ndarray, q: np.ndarray) -> np.ndarray:
    # The one canonical squared-distance kernel: the grid path must produce
    # bit-identical values, so every path funnels through this expression.
    d = refs - q
    return (d * d).sum(axis=1)


def nearest_neighbors(query: np.ndarray, refs: np.ndarray,
                      method: str = "brute") -> tuple[np.ndarray, np.ndarray]:
    """Nearest reference point per query point.

    Returns (distances, indices); ties are broken by lower reference index.
    ``method`` is "brute" (the O(N*M) double loop, vectorised) or "grid"
    (uniform-grid accelerator, bit-identical to brute force).
    """
    query = np.asarray(query, dtype=np.float64)
    refs = np.asarray(refs, dtype=np.float64)
    if len(refs) == 0 or len(query) == 0:
        raise InvalidInputError("nearest_neighbors requires non-empty inputs")
    if method == "brute":
        return _nearest_brute(query, refs)
    if method == "grid":
        return _nearest_grid(query, refs)
    raise InvalidInputError(f"unknown nearest-neighbor method {method!r}")


def _nearest_brute(query: np.ndarray, refs: np.ndarray):
    idx = np.empty(len(query), dtype=np.int64)
    dist = np.empty(len(query), dtype=np.float64)
    for i, q in enumerate(query):
        sq = _sq_dists_to(refs, q)
        j = int(np.argmin(sq))  # argmin returns the lowest index on ties
        idx[i] = j
        dist[i] = np.sqrt(sq[j])
    return dist, idx


class _UniformGrid:
    """Hash grid over the reference points, for shell-expanding NN queries."""

    def __init__(self, refs: np.ndarray):
        self.refs = refs
        lo = refs.min(axis=0)
        hi = refs.max(axis=0)
        span = float(np.max(hi - lo))
        # Aim for a few points per cell; degenerate clouds get one cell.
        n_cells = max(1, int(round(len(refs) ** (1 / 3))))
        self.cell = span / n_cells if span > 0 else 1.0
        self.origin = lo
        self.cells: dict[tuple[int, int, int], list[int]] = {}
        keys = np.floor((refs - lo) / self.cell).astype(np.int64)
        for i, key in enumerate(map(tuple, keys)):
            self.cells.setdefault(key, []).append(i)

    def key_of(self, q: np.ndarray) -> np.ndarray:
        return np.floor((q - self.origin) / self.cell).astype(np.int64)

    def ring(self, center: np.ndarray, r: int):
        """Indices of the reference points in the shell at Chebyshev radius r."""
        out: list[int] = []
        for dx in range(-r, r + 1):
            for dy in range(-r, r + 1):
                for dz in range(-r, r + 1):
                    if max(abs(dx), abs(dy), abs(dz)) != r:
                        continue
                    key = (center[0] + dx, center[1] + dy, center[2] + dz)
                    out.extend(self.cells.get(key, ()))
        return out


def _nearest_grid(query: np.ndarray, refs: np.ndarray):
    grid = _UniformGrid(refs)
    idx = np.empty(len(query), dtype=np.int64)
    dist = np.empty(len(query), dtype=np.float64)
    for i, q in enumerate(query):
        center = grid.key_of(q)
        best_sq = np.inf
        best_j = -1
        r = 0
        while True:
            cand = grid.ring(center, r)
            if cand:
                cand = np.asarray(sorted(cand), dtype=np.int64)
                sq = _sq_dists_to(refs[cand], q)
                j = int(np.argmin(sq))
                if sq[j] < best_sq or (sq[j] == best_sq and cand[j] < best_j):
                    best_sq = float(sq[j])
                    best_j = int(cand[j])
            # Points in shells > r are at distance >= r*cell; strict inequality
            # so an exact tie (lower index) one shell out is still scanned.
            if best_j >= 0 and (r * grid.cell) ** 2 > best_sq:
                break
            r += 1
        idx[i] = best_j
        dist[i] = np.sqrt(best_sq)
    return dist, idx


# ---------------------------------------------------------------------------
# Chamfer metrics
# ---------------------------------------------------------------------------

def chamfer_distance(a: PointCloud, b: PointCloud, method: str = "brute") -> float:
    """Symmetric mean nearest-neighbour distance between two clouds."""
    if len(a) == 0 or len(b) == 0:
        raise InvalidInputError("chamfer_distance requires non-empty clouds")
    d_ab, _ = nearest_neighbors(a.points, b.points, method)
    d_ba, _ = nearest_neighbors(b.points, a.points, method)
    return float(d_ab.mean() + d_ba.mean())


def weighted_chamfer_distance(ge: PointCloud, gt: PointCloud,
                              capacities: dict[int, int] | np.ndarray,
                              k: int, method: str = "brute") -> float:
    """Chamfer distance with the generated side down-weighted by capacity.

    First term: mean over ground-truth points of the distance to the nearest
    generated point. Second term: (1/k) * sum over generated points of
    (distance to nearest ground-truth point) / C_i, where C_i is the capacity
    of the vertex that bred the point. Every vertex thereby contributes with
    equal total weight regardless of how many points it breeds.
    """
    if len(ge) == 0 or len(gt) == 0:
        raise InvalidInputError("weighted_chamfer_distance requires non-empty clouds")
    if ge.source_vertex is None:
        raise InvalidInputError("generated cloud must carry source_vertex labels")
    if k < 1:
        raise InvalidInputError(f"vertex count k must be >= 1, got {k}")
    if isinstance(capacities, dict):
        cap_map = capacities
    else:
        cap_map = {i: int(c) for i, c in enumerate(np.asarray(capacities))}
    try:
        per_point_cap = np.array(
            [cap_map[int(v)] for v in ge.source_vertex], dtype=np.float64
        )
    except KeyError as e:
        raise InvalidInputError(f"no capacity provided for vertex {e.args[0]}") from None
    if np.any(per_point_cap < 1):
        raise InvalidInputError("capacities must be positive")

    d_gt, _ = nearest_neighbors(gt.points, ge.points, method)
    d_ge, _ = nearest_neighbors(ge.points, gt.points, method)
    return float(d_gt.mean() + (d_ge / per_point_cap).sum() / k)


# ---------------------------------------------------------------------------
# Farthest point sampling
# ---------------------------------------------------------------------------

def fps_downsample(cloud: PointCloud, n: int, seed: int) -> PointCloud:
    """Greedy max-min downsampling to n points.

    The first point is a seeded draw; each subsequent point maximises the
    minimum distance to the already-chosen set, ties broken by lower index.
    """
    m = len(cloud)
    if not 1 <= n <= m:
        raise InvalidInputError(f"cannot sample {n} points from a cloud of {m}")
    rng = np.random.default_rng(seed)
    pts = cloud.points
    chosen = [int(rng.integers(m))]
    min_sq = _sq_dists_to(pts, pts[chosen[0]])
    while len(chosen) < n:
        j = int(np.argmax(min_sq))
        chosen.append(j)
        min_sq = np.minimum(min_sq, _sq_dists_to(pts, pts[j]))
    sel = np.asarray(chosen, dtype=np.int64)
    sv = cloud.source_vertex[sel] if cloud.source_vertex is not None else None
    return PointCloud(pts[sel], sv)


# ---------------------------------------------------------------------------
# .xyz I/O: one point per line, three floats separated by single spaces
# ---------------------------------------------------------------------------

def save_cloud(cloud: PointCloud, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for x, y, z in cloud.points:
            f.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


def load_cloud(path) -> PointCloud:
    points = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(" ")
            if len(fields) != 3:
                raise ParseError(
                    f"expected 3 coordinates, got {len(fields)}",
                    path=str(path), line=lineno,
                )
            try:
                points.append([float(v) for v in fields])
            except ValueError:
                raise ParseError(
                    f"malformed coordinate in {line!r}",
                    path=str(path), line=lineno,
                ) from None
    return PointCloud(np.asarray(points, dtype=np.float64).reshape(-1, 3))
