"""Recover global V-E-F structure from per-face wireframes and check validity.

Vertices merge on identical quantized coordinates; duplicated per-face edge
copies consolidate when their merged endpoints coincide and their resampled
geometries agree within tolerance in either traversal direction.  Validity is
a graph-level manifoldness check: every edge must be referenced by exactly
two faces and every face must have loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import Config, DEFAULT_CONFIG
from .model import ModelError, WireframeModel
from .quantize import sample_edge_points_safe


class UnionFind:
    """Array-based disjoint sets with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


@dataclass
class MergedEdge:
    key: tuple[int, int]                    # merged vertex ids, low first
    kind: str
    geometry: np.ndarray                    # representative 32x3 polyline
    refs: list[tuple[int, int, int, int]]   # (face, loop, position, direction)

    @property
    def face_refs(self) -> set[int]:
        return {f for f, _, _, _ in self.refs}


@dataclass
class BrepGraph:
    vertex_qpos: np.ndarray                 # (V, 3) int
    vertex_positions: np.ndarray            # (V, 3) float
    edges: list[MergedEdge]
    face_loops: list[list[list[tuple[int, int]]]]   # face -> loop -> [(vid, edge_idx)]
    vertex_edges: dict[int, list[int]] = field(default_factory=dict)
    edge_faces: dict[int, list[int]] = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_qpos)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_faces(self) -> int:
        return len(self.face_loops)


def _geometry_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max pointwise distance, best over both traversal directions."""
    fwd = float(np.linalg.norm(a - b, axis=1).max())
    rev = float(np.linalg.norm(a - b[::-1], axis=1).max())
    return min(fwd, rev)


def merge_wireframe(pre_merge: WireframeModel, eps_edge: float | None = None,
                    config: Config = DEFAULT_CONFIG) -> BrepGraph:
    """Merge duplicated per-face entities into the global V-E-F graph."""
    eps = config.eps_edge if eps_edge is None else eps_edge
    if any(v.qpos is None for v in pre_merge.vertices):
        raise ModelError("merging requires quantized vertices")

    referenced = sorted({vid for _, _, _, vid, _ in pre_merge.iter_loop_entries()})
    cell_ids: dict[tuple[int, int, int], int] = {}
    remap: dict[int, int] = {}
    for vid in referenced:
        q = pre_merge.vertices[vid].qpos
        key = (int(q[0]), int(q[1]), int(q[2]))
        if key not in cell_ids:
            cell_ids[key] = len(cell_ids)
        remap[vid] = cell_ids[key]
    merged_q = np.zeros((len(cell_ids), 3), dtype=int)
    for key, idx in cell_ids.items():
        merged_q[idx] = key

    # collect edge instances bucketed by unordered merged endpoints
    instances: list[dict] = []
    buckets: dict[tuple[int, int], list[int]] = {}
    for fi, li, ei, vid, edge in pre_merge.iter_loop_entries():
        a, b = remap[edge.endpoints[0]], remap[edge.endpoints[1]]
        key = (a, b) if a <= b else (b, a)
        direction = 1 if a <= b else -1
        geom = sample_edge_points_safe(edge, pre_merge.vertices, config.grid_points,
                                       config)
        idx = len(instances)
        instances.append({"key": key, "kind": edge.kind, "geom": geom,
                          "ref": (fi, li, ei, direction)})
        buckets.setdefault(key, []).append(idx)

    uf = UnionFind(len(instances))
    for key, members in buckets.items():
        for i, ia in enumerate(members):
            for ib in members[i + 1:]:
                if uf.find(ia) == uf.find(ib):
                    continue
                if _geometry_distance(instances[ia]["geom"],
                                      instances[ib]["geom"]) <= eps:
                    uf.union(ia, ib)

    # deterministic edge ids: group representatives in first-instance order
    group_of: dict[int, int] = {}
    edges: list[MergedEdge] = []
    instance_edge = [0] * len(instances)
    for idx, inst in enumerate(instances):
        root = uf.find(idx)
        if root not in group_of:
            group_of[root] = len(edges)
            edges.append(MergedEdge(key=inst["key"], kind=inst["kind"],
                                    geometry=inst["geom"], refs=[]))
        eid = group_of[root]
        edges[eid].refs.append(inst["ref"])
        instance_edge[idx] = eid

    face_loops: list[list[list[tuple[int, int]]]] = []
    cursor = 0
    for fi, face in enumerate(pre_merge.faces):
        loops = []
        for li, loop in enumerate(face.loops):
            entries = []
            for ei, (vid, edge) in enumerate(loop.entries):
                entries.append((remap[vid], instance_edge[cursor]))
                cursor += 1
            loops.append(entries)
        face_loops.append(loops)

    graph = BrepGraph(vertex_qpos=merged_q,
                      vertex_positions=2.0 * merged_q.astype(float) / config.qmax - 1.0,
                      edges=edges, face_loops=face_loops)
    for eid, edge in enumerate(edges):
        graph.edge_faces[eid] = sorted(edge.face_refs)
        for v in edge.key:
            graph.vertex_edges.setdefault(v, []).append(eid)
    return graph


# ---------------------------------------------------------------------------
# validity and complexity
# ---------------------------------------------------------------------------

def validity_check(graph: BrepGraph) -> dict:
    """Graph-level manifoldness report: {"valid": bool, "defects": [...], "cc": int}."""
    defects: list[dict] = []
    for eid, edge in enumerate(graph.edges):
        face_count = len(edge.face_refs)
        if face_count == 1:
            defects.append({"kind": "open_edge", "ids": [eid]})
        elif face_count > 2:
            defects.append({"kind": "non_manifold_edge", "ids": [eid]})
        if edge.key[0] == edge.key[1]:
            defects.append({"kind": "degenerate_edge", "ids": [eid]})
    for fi, loops in enumerate(graph.face_loops):
        if not loops:
            defects.append({"kind": "empty_face", "ids": [fi]})
        for li, entries in enumerate(loops):
            if not _loop_closed(graph, entries):
                defects.append({"kind": "open_loop", "ids": [fi, li]})
    return {"valid": not defects, "defects": defects,
            "cc": cyclomatic_complexity(graph)}


def _loop_closed(graph: BrepGraph, entries: list[tuple[int, int]]) -> bool:
    n = len(entries)
    if n < 2:
        return False
    for i, (vid, eid) in enumerate(entries):
        v_next = entries[(i + 1) % n][0]
        key = graph.edges[eid].key
        if {vid, v_next} != set(key) and not (vid == v_next and vid in key):
            return False
    return True


def cyclomatic_complexity(graph: BrepGraph) -> int:
    """E - V + 2P over the vertex-edge graph (P = connected components)."""
    n_v = graph.n_vertices
    uf = UnionFind(n_v)
    for edge in graph.edges:
        uf.union(edge.key[0], edge.key[1])
    components = len({uf.find(v) for v in range(n_v)})
    return graph.n_edges - n_v + 2 * components


# ---------------------------------------------------------------------------
# isomorphism fingerprint (round-trip oracle support)
# ---------------------------------------------------------------------------

def graph_signature(graph: BrepGraph) -> tuple:
    """Canonical relabeling-invariant structure summary of a merged graph."""
    vertex_rank = {i: r for r, i in enumerate(
        sorted(range(graph.n_vertices),
               key=lambda i: tuple(graph.vertex_qpos[i][::-1])))}
    edge_sig = sorted(
        (tuple(sorted((tuple(graph.vertex_qpos[e.key[0]]),
                       tuple(graph.vertex_qpos[e.key[1]])))),
         e.kind, len(e.face_refs))
        for e in graph.edges)
    face_sig = sorted(
        tuple(sorted(
            (len(entries), tuple(sorted(vertex_rank[v] for v, _ in entries)))
            for entries in loops))
        for loops in graph.face_loops)
    return (graph.n_vertices, graph.n_edges, graph.n_faces,
            tuple(edge_sig), tuple(face_sig))


def graphs_isomorphic(a: BrepGraph, b: BrepGraph, geom_tol: float | None = None,
                      config: Config = DEFAULT_CONFIG) -> bool:
    """V-E-F structural equivalence via canonical signatures.

    Signatures pin vertex cells, edge endpoint cells/kinds/reference counts
    and per-face loop structure, so equality is isomorphism up to relabeling.
    With `geom_tol` set, exact-geometry edges (lines/arcs) must also agree
    pointwise; complex curves are exempt because their codec is lossy.
    """
    if graph_signature(a) != graph_signature(b):
        return False
    if geom_tol is None:
        return True

    def geo_key(g: BrepGraph):
        return sorted(range(g.n_edges),
                      key=lambda i: (tuple(sorted((tuple(g.vertex_qpos[g.edges[i].key[0]]),
                                                   tuple(g.vertex_qpos[g.edges[i].key[1]])))),
                                     g.edges[i].kind))
    for ia, ib in zip(geo_key(a), geo_key(b)):
        if a.edges[ia].kind == "complex":
            continue
        if _geometry_distance(a.edges[ia].geometry, b.edges[ib].geometry) > geom_tol:
            return False
    return True
