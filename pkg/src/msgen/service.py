"""Local HTTP service exposing extraction and generation as JSON endpoints.

Routes::

    GET  /api/health                         -> {"status": "ok", "version": ...}
    GET  /api/models                         -> [{"id", "kind", "description"}]
    POST /api/extract  {points, params?, seed?}        -> structure-graph JSON
    POST /api/generate {graph, model, seed?} -> {points, per_point_vertex}

All requests are stateless and deterministic given their seeds; errors are
``{"error": message, "details": ...}`` with 400 (malformed), 404 (unknown
route/model), or 422 (too few points). CORS is enabled for local origins so
the browser editor can call the service directly.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import __version__
from .baselines import graph_gaussian, graph_interpolation
from .errors import MsgenError
from .extract import ExtractParams, extract_msg
from .frames import compute_frames
from .graph import graph_from_json, graph_to_json, validate
from .model import ModelWeights, generate

DEFAULT_PORT = 8787
LOCAL_ORIGIN_PREFIXES = ("http://localhost", "http://127.0.0.1")


@dataclass(frozen=True)
class ServiceState:
    """Models available to /api/generate; immutable once the server starts."""

    checkpoints: dict[str, ModelWeights] = field(default_factory=dict)
    allowed_origin_prefixes: tuple[str, ...] = LOCAL_ORIGIN_PREFIXES

    def model_listing(self) -> list[dict]:
        listing = [
            {"id": "interp", "kind": "baseline",
             "description": "evenly spaced points along graph edges"},
            {"id": "gaussian", "kind": "baseline",
             "description": "Gaussian blobs around vertices, spread by scale factor"},
        ]
        for mid in sorted(self.checkpoints):
            listing.append({"id": mid, "kind": "checkpoint",
                            "description": "trained graph-attention generator"})
        return listing

    def run_model(self, model_id: str, graph, seed: int):
        if model_id == "interp":
            return graph_interpolation(graph, seed)
        if model_id == "gaussian":
            return graph_gaussian(graph, compute_frames(graph), seed=seed)
        weights = self.checkpoints.get(model_id)
        if weights is None:
            raise KeyError(model_id)
        return generate(graph, weights, seed=seed)


class _ApiError(Exception):
    def __init__(self, status: int, message: str, details=None):
        super().__init__(message)
        self.status = status
        self.message = message
        self.details = details


def _parse_extract_params(doc: dict, seed: int) -> ExtractParams:
    def _range(key, default):
        value = doc.get(key, default)
        if isinstance(value, (int, float)):
            return (int(value), int(value))
        if isinstance(value, (list, tuple)) and len(value) == 2:
            return (int(value[0]), int(value[1]))
        raise _ApiError(400, f"params.{key} must be an int or a [lo, hi] pair")

    try:
        return ExtractParams(
            coarse_k_range=_range("coarse_k", (4, 16)),
            fine_k_range=_range("fine_k", (64, 128)),
            pick_range=_range("pick", (12, 32)),
            edge_tau=float(doc.get("edge_tau", 1.8)),
            mix_mode=doc.get("mix_mode", "as_written"),
            seed=seed,
        )
    except MsgenError as e:
        raise _ApiError(400, str(e)) from None


class _Handler(BaseHTTPRequestHandler):
    state: ServiceState  # assigned by create_server

    # Silence per-request stderr logging.
    def log_message(self, format, *args):  # noqa: A002 (stdlib signature)
        pass

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self._send_cors()
        self.end_headers()
        self.wfile.write(body)

    def _send_cors(self) -> None:
        origin = self.headers.get("Origin")
        if origin and origin.startswith(self.state.allowed_origin_prefixes):
            self.send_header("Access-Control-Allow-Origin", origin)
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _send_error_json(self, status: int, message: str, details=None) -> None:
        payload = {"error": message}
        if details is not None:
            payload["details"] = details
        self._send_json(status, payload)

    def _read_json_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise _ApiError(400, f"request body is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise _ApiError(400, "request body must be a JSON object")
        return doc

    def do_OPTIONS(self):  # CORS preflight
        self.send_response(204)
        self._send_cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        try:
            if self.path == "/api/health":
                self._send_json(200, {"status": "ok", "version": __version__})
            elif self.path == "/api/models":
                self._send_json(200, self.state.model_listing())
            else:
                self._send_error_json(404, f"unknown route {self.path}")
        except Exception as e:  # pragma: no cover - defensive
            self._send_error_json(500, f"internal error: {e}")

    def do_POST(self):
        try:
            if self.path == "/api/extract":
                self._handle_extract()
            elif self.path == "/api/generate":
                self._handle_generate()
            else:
                self._send_error_json(404, f"unknown route {self.path}")
        except _ApiError as e:
            self._send_error_json(e.status, e.message, e.details)
        except MsgenError as e:
            self._send_error_json(400, str(e))
        except Exception as e:  # pragma: no cover - defensive
            self._send_error_json(500, f"internal error: {e}")

    def _handle_extract(self) -> None:
        doc = self._read_json_body()
        points = doc.get("points")
        if not isinstance(points, list) or not points:
            raise _ApiError(400, "body must contain a non-empty 'points' list")
        try:
            arr = np.asarray(points, dtype=np.float64)
        except (TypeError, ValueError):
            raise _ApiError(400, "points must be numeric [x, y, z] triples") from None
        if arr.ndim != 2 or arr.shape[1] != 3 or not np.all(np.isfinite(arr)):
            raise _ApiError(400, "points must be finite [x, y, z] triples")
        seed = int(doc.get("seed", 0))
        params = _parse_extract_params(doc.get("params") or {}, seed)
        if len(arr) < params.fine_k_range[1]:
            raise _ApiError(
                422,
                f"need at least {params.fine_k_range[1]} points, got {len(arr)}",
            )
        from .geometry import PointCloud

        graph = extract_msg(PointCloud(arr), params)
        self._send_json(200, graph_to_json(graph))

    def _handle_generate(self) -> None:
        doc = self._read_json_body()
        if "graph" not in doc:
            raise _ApiError(400, "body must contain a 'graph'")
        try:
            graph = graph_from_json(doc["graph"])
        except MsgenError as e:
            raise _ApiError(400, f"invalid graph: {e}",
                            details=validate_details(doc["graph"])) from None
        violations = validate(graph)
        if violations:
            raise _ApiError(400, "invalid graph", details=violations)
        model_id = doc.get("model", "interp")
        seed = int(doc.get("seed", 0))
        try:
            cloud = self.state.run_model(model_id, graph, seed)
        except KeyError:
            raise _ApiError(404, f"unknown model {model_id!r}") from None
        self._send_json(200, {
            "points": [[float(x), float(y), float(z)] for x, y, z in cloud.points],
            "per_point_vertex": [int(v) for v in cloud.source_vertex],
        })


def validate_details(graph_doc) -> list[str] | None:
    """Best-effort validation detail for structurally parseable graphs."""
    try:
        from .graph import MsgGraph, MsgVertex

        verts = [MsgVertex(v.get("id", -1), v.get("location", (0, 0, 0)),
                           v.get("capacity", 0))
                 for v in graph_doc.get("vertices", [])]
        edges = [tuple(e) for e in graph_doc.get("edges", [])]
        return validate(MsgGraph.make(verts, edges))
    except Exception:
        return None


def create_server(port: int = DEFAULT_PORT,
                  checkpoints: dict[str, ModelWeights] | None = None,
                  host: str = "127.0.0.1") -> ThreadingHTTPServer:
    state = ServiceState(checkpoints=dict(checkpoints or {}))
    handler = type("BoundHandler", (_Handler,), {"state": state})
    return ThreadingHTTPServer((host, port), handler)


def serve(port: int = DEFAULT_PORT,
          checkpoints: dict[str, ModelWeights] | None = None) -> None:
    server = create_server(port, checkpoints)
    host, bound_port = server.server_address[:2]
    print(f"serving on http://{host}:{bound_port} "
          f"(models: {', '.join(m['id'] for m in server.RequestHandlerClass.state.model_listing())})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def run_in_thread(server: ThreadingHTTPServer) -> threading.Thread:
    """Start a server on a daemon thread (used by tests and the editor dev flow)."""
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread
