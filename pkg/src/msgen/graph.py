"""The multiscale structure graph: vertices with capacities, plus edits and JSON I/O.

A graph abstracts a point cloud as a simple undirected graph whose vertices
carry a 3D location (cluster centre) and a positive integer capacity (cluster
size / number of points to breed). Graphs are immutable values: every edit
returns a new graph.

Serialized form (format_version 1)::

    {"format_version": 1,
     "vertices": [{"id": 0, "location": [x, y, z], "capacity": 12}, ...],
     "edges": [[0, 1], [1, 2], ...]}

Vertices are sorted by id and edges are listed with the smaller id first.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ParseError, VersionError

FORMAT_VERSION = 1

EDIT_KINDS = (
    "add_vertex", "remove_vertex", "move_vertex",
    "set_capacity", "add_edge", "remove_edge",
)


@dataclass(frozen=True)
class MsgVertex:
    id: int
    location: tuple[float, float, float]
    capacity: int

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "capacity", int(self.capacity))
        loc = tuple(float(v) for v in np.asarray(self.location).reshape(3))
        object.__setattr__(self, "location", loc)


def _norm_edge(edge) -> tuple[int, int]:
    u, v = (int(x) for x in edge)
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class MsgGraph:
    vertices: tuple[MsgVertex, ...]
    edges: frozenset[tuple[int, int]]

    @staticmethod
    def make(vertices, edges=()) -> "MsgGraph":
        verts = tuple(sorted((v if isinstance(v, MsgVertex) else MsgVertex(*v)
                              for v in vertices), key=lambda v: v.id))
        return MsgGraph(verts, frozenset(_norm_edge(e) for e in edges))

    def vertex(self, vid: int) -> MsgVertex:
        v = self._by_id().get(int(vid))
        if v is None:
            raise InvalidInputError(f"unknown vertex id {vid}")
        return v

    def _by_id(self) -> dict[int, MsgVertex]:
        return {v.id: v for v in self.vertices}

    def has_vertex(self, vid: int) -> bool:
        return int(vid) in self._by_id()

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {v.id: [] for v in self.vertices}
        for u, v in self.edges:
            if u in adj and v in adj:
                adj[u].append(v)
                adj[v].append(u)
        return {k: sorted(vs) for k, vs in adj.items()}

    def locations(self) -> np.ndarray:
        return np.array([v.location for v in self.vertices], dtype=np.float64)

    def capacities(self) -> np.ndarray:
        return np.array([v.capacity for v in self.vertices], dtype=np.int64)

    def ids(self) -> list[int]:
        return [v.id for v in self.vertices]


def validate(g: MsgGraph) -> list[str]:
    """Every invariant violation, empty list when the graph is well-formed."""
    violations = []
    seen: dict[int, MsgVertex] = {}
    for v in g.vertices:
        if v.id < 0:
            violations.append(f"vertex id {v.id} must be non-negative")
        if v.id in seen:
            violations.append(f"duplicate vertex id {v.id}")
        seen[v.id] = v
        if v.capacity < 1:
            violations.append(f"vertex {v.id}: capacity must be >= 1, got {v.capacity}")
        if not all(np.isfinite(v.location)):
            violations.append(f"vertex {v.id}: location must be finite")
    for edge in sorted(g.edges):
        u, v = edge
        if u == v:
            violations.append(f"self-loop at {u}")
            continue
        for end in (u, v):
            if end not in seen:
                violations.append(f"edge ({u},{v}) references unknown vertex {end}")
    if len(g.vertices) == 0:
        violations.append("graph must have at least one vertex")
    return violations


def total_capacity(g: MsgGraph) -> int:
    return int(sum(v.capacity for v in g.vertices))


def neighbors_within(g: MsgGraph, vid: int, radius: int) -> set[int]:
    """Vertices at graph distance <= radius from vid, including vid itself."""
    vid = int(vid)
    if not g.has_vertex(vid):
        raise InvalidInputError(f"unknown vertex id {vid}")
    adj = g.adjacency()
    seen = {vid: 0}
    queue = deque([vid])
    while queue:
        u = queue.popleft()
        if seen[u] == radius:
            continue
        for w in adj[u]:
            if w not in seen:
                seen[w] = seen[u] + 1
                queue.append(w)
    return set(seen)


# ---------------------------------------------------------------------------
# Edits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphEdit:
    """One editing step; payload fields depend on ``kind``.

    add_vertex: vertex_id (optional, defaults to max id + 1), location, capacity
    remove_vertex / move_vertex / set_capacity: vertex_id (+ location / capacity)
    add_edge / remove_edge: edge (id pair)
    """

    kind: str
    vertex_id: int | None = None
    location: tuple[float, float, float] | None = None
    capacity: int | None = None
    edge: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in EDIT_KINDS:
            raise InvalidInputError(f"unknown edit kind {self.kind!r}")

    def to_json(self) -> dict:
        doc: dict = {"kind": self.kind}
        if self.vertex_id is not None:
            doc["id"] = int(self.vertex_id)
        if self.location is not None:
            doc["location"] = [float(v) for v in self.location]
        if self.capacity is not None:
            doc["capacity"] = int(self.capacity)
        if self.edge is not None:
            doc["edge"] = [int(v) for v in self.edge]
        return doc

    @staticmethod
    def from_json(doc: dict) -> "GraphEdit":
        if not isinstance(doc, dict) or "kind" not in doc:
            raise ParseError("edit must be an object with a 'kind'", field="kind")
        return GraphEdit(
            kind=doc["kind"],
            vertex_id=doc.get("id"),
            location=tuple(doc["location"]) if "location" in doc else None,
            capacity=doc.get("capacity"),
            edge=tuple(doc["edge"]) if "edge" in doc else None,
        )


def apply_edit(g: MsgGraph, e: GraphEdit) -> MsgGraph:
    """Apply one edit, returning a new graph; the input is never mutated."""
    by_id = g._by_id()

    def require(vid) -> int:
        if vid is None or int(vid) not in by_id:
            raise InvalidInputError(f"edit references unknown vertex {vid}")
        return int(vid)

    if e.kind == "add_vertex":
        if e.location is None or e.capacity is None:
            raise InvalidInputError("add_vertex needs location and capacity")
        if e.capacity < 1:
            raise InvalidInputError(f"capacity must be >= 1, got {e.capacity}")
        vid = e.vertex_id
        if vid is None:
            vid = max(by_id, default=-1) + 1
        elif int(vid) in by_id:
            raise InvalidInputError(f"vertex id {vid} already exists")
        new_v = MsgVertex(int(vid), e.location, e.capacity)
        return MsgGraph.make(g.vertices + (new_v,), g.edges)

    if e.kind == "remove_vertex":
        vid = require(e.vertex_id)
        if len(g.vertices) == 1:
            raise InvalidInputError("cannot remove the last vertex")
        verts = tuple(v for v in g.vertices if v.id != vid)
        edges = frozenset(ed for ed in g.edges if vid not in ed)
        return MsgGraph(verts, edges)

    if e.kind == "move_vertex":
        vid = require(e.vertex_id)
        if e.location is None:
            raise InvalidInputError("move_vertex needs a location")
        verts = tuple(MsgVertex(v.id, e.location, v.capacity) if v.id == vid else v
                      for v in g.vertices)
        return MsgGraph(verts, g.edges)

    if e.kind == "set_capacity":
        vid = require(e.vertex_id)
        if e.capacity is None or e.capacity < 1:
            raise InvalidInputError(f"capacity must be >= 1, got {e.capacity}")
        verts = tuple(MsgVertex(v.id, v.location, e.capacity) if v.id == vid else v
                      for v in g.vertices)
        return MsgGraph(verts, g.edges)

    if e.kind == "add_edge":
        if e.edge is None:
            raise InvalidInputError("add_edge needs an edge")
        u, v = _norm_edge(e.edge)
        require(u), require(v)
        if u == v:
            raise InvalidInputError(f"self-loop at {u}")
        return MsgGraph(g.vertices, g.edges | {(u, v)})

    if e.kind == "remove_edge":
        if e.edge is None:
            raise InvalidInputError("remove_edge needs an edge")
        edge = _norm_edge(e.edge)
        if edge not in g.edges:
            raise InvalidInputError(f"edge {edge} not in graph")
        return MsgGraph(g.vertices, g.edges - {edge})

    raise InvalidInputError(f"unknown edit kind {e.kind!r}")


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def graph_to_json(g: MsgGraph) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "vertices": [
            {"id": v.id, "location": list(v.location), "capacity": v.capacity}
            for v in sorted(g.vertices, key=lambda v: v.id)
        ],
        "edges": [list(e) for e in sorted(g.edges)],
    }


def graph_from_json(doc: dict, *, path: str | None = None) -> MsgGraph:
    if not isinstance(doc, dict):
        raise ParseError("graph document must be a JSON object", path=path)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(
            f"unsupported format_version {version!r} (expected {FORMAT_VERSION})",
            path=path, field="format_version",
        )
    verts = []
    for i, vdoc in enumerate(doc.get("vertices", [])):
        for key in ("id", "location", "capacity"):
            if key not in vdoc:
                raise ParseError(f"vertex #{i} missing required field",
                                 path=path, field=key)
        loc = vdoc["location"]
        if not (isinstance(loc, list) and len(loc) == 3):
            raise ParseError(f"vertex #{i} location must be a 3-element list",
                             path=path, field="location")
        try:
            verts.append(MsgVertex(vdoc["id"], loc, vdoc["capacity"]))
        except (TypeError, ValueError):
            raise ParseError(f"vertex #{i} has malformed values",
                             path=path, field="vertices") from None
    edges = []
    seen = set()
    for i, edoc in enumerate(doc.get("edges", [])):
        if not (isinstance(edoc, list) and len(edoc) == 2):
            raise ParseError(f"edge #{i} must be a 2-element list",
                             path=path, field="edges")
        edge = _norm_edge(edoc)
        if edge in seen:
            raise ParseError(f"duplicate edge {edoc}", path=path, field="edges")
        seen.add(edge)
        edges.append(edge)
    g = MsgGraph.make(verts, edges)
    violations = validate(g)
    if violations:
        raise ParseError("; ".join(violations), path=path)
    return g


def save_graph(g: MsgGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(graph_to_json(g), f, indent=1)
        f.write("\n")


def load_graph(path) -> MsgGraph:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e}", path=str(path)) from None
    return graph_from_json(doc, path=str(path))
