"""Domain types, JSON interchange, normalization and validation for wireframe models.

A :class:`WireframeModel` is a faces -> loops -> (vertices, typed edges)
hierarchy.  Vertices are shared across faces through integer ids; edge
geometry is owned per loop entry so adjacent faces each carry their own
traversal-ordered copy of a shared edge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .config import Config, DEFAULT_CONFIG

LINE = "line"
ARC = "arc"
COMPLEX = "complex"
EDGE_KINDS = (LINE, ARC, COMPLEX)

PRIMITIVES = ("plane", "cylinder", "sphere", "complex")


class ModelError(ValueError):
    """Schema or invariant violation in a wireframe model."""


@dataclass
class Vertex:
    position: np.ndarray                 # shape (3,), model units
    id: int
    qpos: np.ndarray | None = None       # shape (3,), int indices in [0, qmax]

    def copy(self) -> "Vertex":
        return Vertex(
            position=self.position.copy(),
            id=self.id,
            qpos=None if self.qpos is None else self.qpos.copy(),
        )


@dataclass
class Edge:
    kind: str
    endpoints: tuple[int, int]                  # vertex ids, traversal order
    mid: np.ndarray | None = None               # (3,), arc only
    samples: np.ndarray | None = None           # (32, 3), complex only
    curve_tokens: list[int] | None = None       # 12 codebook ids, complex only

    def copy(self) -> "Edge":
        return Edge(
            kind=self.kind,
            endpoints=self.endpoints,
            mid=None if self.mid is None else self.mid.copy(),
            samples=None if self.samples is None else self.samples.copy(),
            curve_tokens=None if self.curve_tokens is None else list(self.curve_tokens),
        )

    def reversed(self) -> "Edge":
        """Opposite-traversal copy; curve tokens are direction-bound and dropped."""
        return Edge(
            kind=self.kind,
            endpoints=(self.endpoints[1], self.endpoints[0]),
            mid=None if self.mid is None else self.mid.copy(),
            samples=None if self.samples is None else self.samples[::-1].copy(),
            curve_tokens=None,
        )


@dataclass
class Loop:
    entries: list[tuple[int, Edge]]      # (start vertex id, edge to next entry's vertex)
    is_outer: bool

    def vertex_ids(self) -> list[int]:
        return [v for v, _ in self.entries]


@dataclass
class Face:
    loops: list[Loop]                    # outer loop first
    normal_hint: np.ndarray              # unit 3-vector at outer-loop centroid
    primitive: str | None = None

    @property
    def outer(self) -> Loop:
        return self.loops[0]


@dataclass
class WireframeModel:
    vertices: list[Vertex]
    faces: list[Face]
    metadata: dict[str, str] = field(default_factory=dict)

    def vertex(self, vid: int) -> Vertex:
        return self.vertices[vid]

    def iter_loop_entries(self) -> Iterator[tuple[int, int, int, int, Edge]]:
        """Yield (face_idx, loop_idx, entry_idx, vertex_id, edge) over the model."""
        for fi, face in enumerate(self.faces):
            for li, loop in enumerate(face.loops):
                for ei, (vid, edge) in enumerate(loop.entries):
                    yield fi, li, ei, vid, edge

    def copy(self) -> "WireframeModel":
        faces = []
        for face in self.faces:
            loops = [
                Loop(entries=[(v, e.copy()) for v, e in lp.entries], is_outer=lp.is_outer)
                for lp in face.loops
            ]
            faces.append(Face(loops=loops, normal_hint=face.normal_hint.copy(),
                              primitive=face.primitive))
        return WireframeModel(
            vertices=[v.copy() for v in self.vertices],
            faces=faces,
            metadata=dict(self.metadata),
        )


@dataclass(frozen=True)
class Transform:
    """Forward similarity map p_out = scale * p_in + offset."""

    scale: float
    offset: np.ndarray                   # shape (3,)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) * self.scale + self.offset

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.offset) / self.scale

    def is_identity(self, tol: float = 1e-12) -> bool:
        return abs(self.scale - 1.0) <= tol and bool(np.all(np.abs(self.offset) <= tol))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _collinear(a: np.ndarray, mid: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> bool:
    area2 = np.linalg.norm(np.cross(mid - a, b - a))
    return bool(area2 <= 2.0 * tol)


def validate_model(model: WireframeModel, config: Config = DEFAULT_CONFIG) -> None:
    """Check structural invariants; raise :class:`ModelError` naming the offender."""
    n_vertices = len(model.vertices)
    if len(model.faces) > config.max_faces:
        raise ModelError(f"face limit exceeded: {len(model.faces)} > {config.max_faces}")
    for vid, vertex in enumerate(model.vertices):
        if vertex.id != vid:
            raise ModelError(f"vertex {vid} carries mismatched id {vertex.id}")
        if vertex.qpos is not None:
            q = np.asarray(vertex.qpos)
            if q.shape != (3,) or np.any(q < 0) or np.any(q > config.qmax):
                raise ModelError(f"vertex {vid} qpos out of range")
    max_entries = config.max_loop_entities // 2
    for fi, face in enumerate(model.faces):
        if len(face.loops) == 0:
            raise ModelError(f"face {fi} has no loops")
        if len(face.loops) > config.max_loops:
            raise ModelError(f"face {fi} loop limit exceeded: {len(face.loops)}")
        if not face.loops[0].is_outer:
            raise ModelError(f"face {fi} must list its outer loop first")
        if sum(1 for lp in face.loops if lp.is_outer) != 1:
            raise ModelError(f"face {fi} must have exactly one outer loop")
        hint = np.asarray(face.normal_hint, dtype=float)
        if hint.shape != (3,) or not np.isfinite(hint).all():
            raise ModelError(f"face {fi} normal_hint malformed")
        if abs(np.linalg.norm(hint) - 1.0) > 1e-6:
            raise ModelError(f"face {fi} normal_hint is not unit length")
        if face.primitive is not None and face.primitive not in PRIMITIVES:
            raise ModelError(f"face {fi} unknown primitive {face.primitive!r}")
        for li, loop in enumerate(face.loops):
            n = len(loop.entries)
            if n < 2:
                raise ModelError(f"face {fi} loop {li}: needs at least 2 entries")
            if n > max_entries:
                raise ModelError(
                    f"face {fi} loop {li}: entry count {n} exceeds {max_entries}")
            for ei, (vid, edge) in enumerate(loop.entries):
                if not (0 <= vid < n_vertices):
                    raise ModelError(f"face {fi} loop {li} entry {ei}: unknown vertex {vid}")
                _validate_edge(model, fi, li, ei, loop, edge, config)


def _validate_edge(model: WireframeModel, fi: int, li: int, ei: int,
                   loop: Loop, edge: Edge, config: Config) -> None:
    where = f"face {fi} loop {li} entry {ei}"
    v_start = loop.entries[ei][0]
    v_end = loop.entries[(ei + 1) % len(loop.entries)][0]
    if edge.kind not in EDGE_KINDS:
        raise ModelError(f"{where}: unknown edge kind {edge.kind!r}")
    if edge.endpoints != (v_start, v_end):
        raise ModelError(f"{where}: edge endpoints {edge.endpoints} do not chain "
                         f"to ({v_start}, {v_end})")
    if edge.kind == LINE:
        if edge.mid is not None or edge.samples is not None:
            raise ModelError(f"{where}: line edge carries geometry payload")
    elif edge.kind == ARC:
        if edge.mid is None:
            raise ModelError(f"{where}: arc edge missing midpoint")
        if edge.samples is not None:
            raise ModelError(f"{where}: arc edge carries samples")
        a = model.vertex(v_start).position
        b = model.vertex(v_end).position
        if _collinear(a, np.asarray(edge.mid, dtype=float), b):
            raise ModelError(f"{where}: arc midpoint collinear with endpoints")
    else:
        if edge.samples is None:
            raise ModelError(f"{where}: complex edge missing samples")
        s = np.asarray(edge.samples, dtype=float)
        if s.shape != (config.grid_points, 3):
            raise ModelError(f"{where}: complex edge needs {config.grid_points}x3 samples")
        a = model.vertex(v_start).position
        b = model.vertex(v_end).position
        if (np.linalg.norm(s[0] - a) > config.eps_endpoint
                or np.linalg.norm(s[-1] - b) > config.eps_endpoint):
            raise ModelError(f"{where}: complex edge samples do not meet endpoints")
        if edge.curve_tokens is not None:
            t = edge.curve_tokens
            if len(t) != config.curve_token_count:
                raise ModelError(f"{where}: expected {config.curve_token_count} curve tokens")
            if any(not (0 <= c < config.codebook_size) for c in t):
                raise ModelError(f"{where}: curve token out of range")


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def _edge_to_json(edge: Edge) -> dict:
    out: dict = {"kind": edge.kind}
    if edge.mid is not None:
        out["mid"] = [float(x) for x in edge.mid]
    if edge.samples is not None:
        out["samples"] = [[float(x) for x in p] for p in edge.samples]
    if edge.curve_tokens is not None:
        out["curve_tokens"] = [int(t) for t in edge.curve_tokens]
    return out


def _edge_from_json(obj: dict, endpoints: tuple[int, int]) -> Edge:
    if "kind" not in obj:
        raise ModelError("edge missing 'kind'")
    kind = obj["kind"]
    mid = np.asarray(obj["mid"], dtype=float) if "mid" in obj else None
    samples = np.asarray(obj["samples"], dtype=float) if "samples" in obj else None
    tokens = [int(t) for t in obj["curve_tokens"]] if "curve_tokens" in obj else None
    return Edge(kind=kind, endpoints=endpoints, mid=mid, samples=samples,
                curve_tokens=tokens)


def model_to_json(model: WireframeModel) -> dict:
    doc: dict = {"vertices": [[float(x) for x in v.position] for v in model.vertices]}
    if all(v.qpos is not None for v in model.vertices) and model.vertices:
        doc["qvertices"] = [[int(q) for q in v.qpos] for v in model.vertices]
    faces = []
    for face in model.faces:
        fobj: dict = {"normal_hint": [float(x) for x in face.normal_hint]}
        if face.primitive is not None:
            fobj["primitive"] = face.primitive
        fobj["loops"] = [
            {
                "outer": lp.is_outer,
                "entries": [{"v": int(v), "edge": _edge_to_json(e)} for v, e in lp.entries],
            }
            for lp in face.loops
        ]
        faces.append(fobj)
    doc["faces"] = faces
    doc["metadata"] = {str(k): str(v) for k, v in sorted(model.metadata.items())}
    return doc


def model_from_json(doc: dict, config: Config = DEFAULT_CONFIG) -> WireframeModel:
    if "vertices" not in doc:
        raise ModelError("document missing 'vertices'")
    if "faces" not in doc:
        raise ModelError("document missing 'faces'")
    positions = doc["vertices"]
    qvertices = doc.get("qvertices")
    if qvertices is not None and len(qvertices) != len(positions):
        raise ModelError("'qvertices' length does not match 'vertices'")
    vertices = []
    for vid, pos in enumerate(positions):
        if len(pos) != 3:
            raise ModelError(f"vertex {vid} is not a 3-vector")
        q = np.asarray(qvertices[vid], dtype=int) if qvertices is not None else None
        vertices.append(Vertex(position=np.asarray(pos, dtype=float), id=vid, qpos=q))
    faces = []
    for fi, fobj in enumerate(doc["faces"]):
        if "normal_hint" not in fobj:
            raise ModelError(f"face {fi} missing 'normal_hint'")
        if "loops" not in fobj:
            raise ModelError(f"face {fi} missing 'loops'")
        loops = []
        for li, lobj in enumerate(fobj["loops"]):
            entries_json = lobj.get("entries", [])
            vids = [int(e["v"]) for e in entries_json]
            entries = []
            for ei, eobj in enumerate(entries_json):
                endpoints = (vids[ei], vids[(ei + 1) % len(vids)]) if vids else (0, 0)
                entries.append((vids[ei], _edge_from_json(eobj["edge"], endpoints)))
            loops.append(Loop(entries=entries, is_outer=bool(lobj.get("outer", li == 0))))
        faces.append(Face(
            loops=loops,
            normal_hint=np.asarray(fobj["normal_hint"], dtype=float),
            primitive=fobj.get("primitive"),
        ))
    metadata = {str(k): str(v) for k, v in doc.get("metadata", {}).items()}
    model = WireframeModel(vertices=vertices, faces=faces, metadata=metadata)
    validate_model(model, config)
    return model


def load_model(path: str | Path, config: Config = DEFAULT_CONFIG) -> WireframeModel:
    """Load and validate a wireframe model from its JSON interchange file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not valid JSON: {exc}") from exc
    return model_from_json(doc, config)


def save_model(model: WireframeModel, path: str | Path) -> None:
    """Write the model as canonical JSON (stable key order, byte-stable floats)."""
    doc = model_to_json(model)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def model_points(model: WireframeModel) -> np.ndarray:
    """All geometric support points: vertices, arc midpoints, complex samples."""
    chunks = [np.stack([v.position for v in model.vertices])] if model.vertices else []
    for _, _, _, _, edge in model.iter_loop_entries():
        if edge.mid is not None:
            chunks.append(edge.mid.reshape(1, 3))
        if edge.samples is not None:
            chunks.append(edge.samples)
    if not chunks:
        raise ModelError("model has no geometry")
    return np.concatenate(chunks, axis=0)


def bbox_transform(points: np.ndarray) -> Transform:
    """Similarity mapping the bbox center to 0 with the longest axis spanning [-1, 1]."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise ModelError("degenerate model: zero extent")
    scale = 2.0 / extent
    center = (lo + hi) / 2.0
    return Transform(scale=scale, offset=-scale * center)


def apply_transform(model: WireframeModel, transform: Transform) -> WireframeModel:
    out = model.copy()
    for vertex in out.vertices:
        vertex.position = transform.apply(vertex.position)
        vertex.qpos = None
    for _, _, _, _, edge in out.iter_loop_entries():
        if edge.mid is not None:
            edge.mid = transform.apply(edge.mid)
        if edge.samples is not None:
            edge.samples = transform.apply(edge.samples)
    return out


def normalize_model(model: WireframeModel) -> tuple[WireframeModel, Transform]:
    """Scale/translate the model into [-1,1]^3, longest axis spanning exactly [-1,1].

    Returns the normalized model and the forward map that was applied;
    ``transform.invert`` recovers input-frame coordinates exactly.
    """
    forward = bbox_transform(model_points(model))
    return apply_transform(model, forward), forward
