"""Synthetic shape corpus: area-uniform surface samplers for seven families.

The families deliberately reuse local patterns across scales and poses
(a table leg and a lamp pole are the same cylinder pattern, a table top and
a plane the same slab pattern), which is exactly the regularity the
generator is supposed to exploit. Shapes are sampled in a canonical pose,
normalized to unit bounding-box diagonal, then placed with a random
similarity pose.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .geometry import PointCloud, SimilarityTransform, random_rotation

FAMILIES = ("box", "cylinder", "sphere", "plane", "table", "lamp", "lbracket")


def _allot(n: int, weights: np.ndarray) -> np.ndarray:
    """Split n into parts proportional to weights (largest remainder)."""
    weights = np.asarray(weights, dtype=np.float64)
    exact = n * weights / weights.sum()
    counts = np.floor(exact).astype(np.int64)
    order = sorted(range(len(weights)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: n - int(counts.sum())]:
        counts[i] += 1
    return counts


def _rect(rng, n, a, b):
    """n points on an a x b rectangle in the xy-plane, centered."""
    u = rng.uniform(-0.5, 0.5, size=(n, 2))
    return np.column_stack([a * u[:, 0], b * u[:, 1], np.zeros(n)])


def _box_surface(rng, n, dims):
    a, b, c = dims
    # Face areas: two of each of ab, ac, bc.
    areas = np.array([a * b, a * b, a * c, a * c, b * c, b * c])
    counts = _allot(n, areas)
    parts = []
    for face, m in enumerate(counts):
        if m == 0:
            continue
        pts = _rect(rng, int(m), *{0: (a, b), 1: (a, b), 2: (a, c),
                                   3: (a, c), 4: (b, c), 5: (b, c)}[face])
        if face in (0, 1):       # z = +-c/2
            pts[:, 2] = c / 2 if face == 0 else -c / 2
        elif face in (2, 3):     # y = +-b/2: rect is (a, c) -> xz
            pts = pts[:, [0, 2, 1]]
            pts[:, 1] = b / 2 if face == 2 else -b / 2
        else:                    # x = +-a/2: rect is (b, c) -> yz
            pts = pts[:, [2, 0, 1]]
            pts[:, 0] = a / 2 if face == 4 else -a / 2
        parts.append(pts)
    return np.concatenate(parts, axis=0)


def _cylinder_surface(rng, n, radius, height, caps=True):
    lateral = 2 * np.pi * radius * height
    cap = np.pi * radius * radius
    areas = np.array([lateral, cap, cap]) if caps else np.array([lateral])
    counts = _allot(n, areas)
    parts = []
    m = int(counts[0])
    if m:
        theta = rng.uniform(0, 2 * np.pi, m)
        z = rng.uniform(-height / 2, height / 2, m)
        parts.append(np.column_stack([radius * np.cos(theta),
                                      radius * np.sin(theta), z]))
    if caps:
        for sign, m in ((1, int(counts[1])), (-1, int(counts[2]))):
            if m == 0:
                continue
            r = radius * np.sqrt(rng.uniform(0, 1, m))
            theta = rng.uniform(0, 2 * np.pi, m)
            parts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta),
                                          np.full(m, sign * height / 2)]))
    return np.concatenate(parts, axis=0)


def _sphere_surface(rng, n, radius):
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v


def _compose(rng, n, parts):
    """parts: list of (area, sampler(rng, m) -> (m, 3) array)."""
    areas = np.array([p[0] for p in parts])
    counts = _allot(n, areas)
    out = []
    for (area, sampler), m in zip(parts, counts):
        if m:
            out.append(sampler(rng, int(m)))
    return np.concatenate(out, axis=0)


def _box_area(dims):
    a, b, c = dims
    return 2 * (a * b + a * c + b * c)


def _table_parts(p):
    top_w, top_d, top_t = p["top"]
    leg_s, leg_h = p["leg_side"], p["leg_height"]
    parts = [(_box_area((top_w, top_d, top_t)),
              lambda rng, m: _box_surface(rng, m, (top_w, top_d, top_t))
              + np.array([0, 0, leg_h + top_t / 2]))]
    inset = leg_s
    for sx in (-1, 1):
        for sy in (-1, 1):
            dx = sx * (top_w / 2 - inset)
            dy = sy * (top_d / 2 - inset)
            parts.append((
                _box_area((leg_s, leg_s, leg_h)),
                lambda rng, m, dx=dx, dy=dy: _box_surface(rng, m, (leg_s, leg_s, leg_h))
                + np.array([dx, dy, leg_h / 2]),
            ))
    return parts


def _lamp_parts(p):
    pole_r, pole_h = p["pole_radius"], p["pole_height"]
    bulb_r = p["bulb_radius"]
    return [
        (2 * np.pi * pole_r * pole_h,
         lambda rng, m: _cylinder_surface(rng, m, pole_r, pole_h, caps=False)
         + np.array([0, 0, pole_h / 2])),
        (4 * np.pi * bulb_r ** 2,
         lambda rng, m: _sphere_surface(rng, m, bulb_r)
         + np.array([0, 0, pole_h + bulb_r])),
    ]


def _lbracket_parts(p):
    arm_a, arm_b, width, t = p["arm_a"], p["arm_b"], p["width"], p["thickness"]
    return [
        (_box_area((arm_a, width, t)),
         lambda rng, m: _box_surface(rng, m, (arm_a, width, t))
         + np.array([arm_a / 2, 0, t / 2])),
        (_box_area((t, width, arm_b)),
         lambda rng, m: _box_surface(rng, m, (t, width, arm_b))
         + np.array([t / 2, 0, t + arm_b / 2])),
    ]


def surface_points(family: str, params: dict, n: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Canonical-pose area-uniform surface sample of one shape."""
    if family == "box":
        return _box_surface(rng, n, params["dims"])
    if family == "cylinder":
        return _cylinder_surface(rng, n, params["radius"], params["height"])
    if family == "sphere":
        return _sphere_surface(rng, n, params["radius"])
    if family == "plane":
        return _rect(rng, n, params["a"], params["b"])
    if family == "table":
        return _compose(rng, n, _table_parts(params))
    if family == "lamp":
        return _compose(rng, n, _lamp_parts(params))
    if family == "lbracket":
        return _compose(rng, n, _lbracket_parts(params))
    raise InvalidInputError(f"unknown shape family {family!r}")


def default_params(family: str, rng: np.random.Generator) -> dict:
    """Draw plausible dimensions for one shape of the given family.

    Ranges favour thin structural elements (beams, poles, legs, narrow
    arms): the corpus exists to exercise local patterns that repeat across
    scales and families, and rod-like parts are that shared pattern. Plates
    and shells stay in the mix via the plane/sphere families and table tops.
    """
    u = rng.uniform
    if family == "box":
        return {"dims": (float(u(1.4, 2.2)), float(u(0.1, 0.2)), float(u(0.1, 0.2)))}
    if family == "cylinder":
        return {"radius": float(u(0.04, 0.09)), "height": float(u(1.4, 2.4))}
    if family == "sphere":
        return {"radius": float(u(0.5, 1.5))}
    if family == "plane":
        return {"a": float(u(1.0, 3.0)), "b": float(u(1.0, 3.0))}
    if family == "table":
        return {
            "top": (float(u(0.7, 1.1)), float(u(0.5, 0.9)), float(u(0.05, 0.08))),
            "leg_side": float(u(0.11, 0.17)),
            "leg_height": float(u(1.4, 2.0)),
        }
    if family == "lamp":
        return {
            "pole_radius": float(u(0.04, 0.07)),
            "pole_height": float(u(1.6, 2.2)),
            "bulb_radius": float(u(0.11, 0.18)),
        }
    if family == "lbracket":
        return {
            "arm_a": float(u(1.0, 1.7)),
            "arm_b": float(u(0.9, 1.5)),
            "width": float(u(0.12, 0.2)),
            "thickness": float(u(0.1, 0.18)),
        }
    raise InvalidInputError(f"unknown shape family {family!r}")


def synth_shape(family: str, params: dict, n_points: int, seed: int,
                pose: bool = True) -> PointCloud:
    """One posed shape: canonical sample, unit-diagonal normalization, pose."""
    rng = np.random.default_rng(seed)
    pts = surface_points(family, params, n_points, rng)
    center = (pts.max(axis=0) + pts.min(axis=0)) / 2
    pts = pts - center
    diag = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
    if diag > 0:
        pts = pts / diag
    if pose:
        t = SimilarityTransform(
            rotation=random_rotation(rng),
            scale=float(rng.uniform(0.7, 1.4)),
            translation=rng.uniform(-1.0, 1.0, size=3),
        )
        pts = t.apply(pts)
    return PointCloud(pts)
