import numpy as np
import pytest

from brepwire.grammar import parse_tokens
from brepwire.model import ARC, ModelError
from brepwire.pipeline import prepare_model, roundtrip_model
from brepwire.serialize import serialize_model
from brepwire.topology import (
    UnionFind,
    cyclomatic_complexity,
    graph_signature,
    graphs_isomorphic,
    merge_wireframe,
    validity_check,
)
from brepwire.synth import FamilySpec, generate_model

from conftest import cube_model


def merged_cube():
    prepared, _ = prepare_model(cube_model())
    tokens = serialize_model(prepared)
    return merge_wireframe(parse_tokens(tokens))


class TestUnionFind:
    def test_basic(self):
        uf = UnionFind(5)
        uf.union(0, 1)
        uf.union(3, 4)
        assert uf.find(0) == uf.find(1)
        assert uf.find(3) == uf.find(4)
        assert uf.find(0) != uf.find(3)
        uf.union(1, 4)
        assert uf.find(0) == uf.find(3)


class TestMerge:
    def test_cube_counts(self):
        graph = merged_cube()
        assert graph.n_vertices == 8
        assert graph.n_edges == 12
        assert graph.n_faces == 6
        for edge in graph.edges:
            assert len(edge.face_refs) == 2

    @staticmethod
    def _nudge_first_arc_radially(cells: float):
        prepared, _ = prepare_model(generate_model(
            FamilySpec("CylinderSegment", {"r": 0.8, "h": 1.2})))
        target = None
        for fi, li, ei, vid, edge in prepared.iter_loop_entries():
            if edge.kind == ARC:
                target = edge
                break
        # push the duplicated copy's midpoint outward along its bulge direction
        a = prepared.vertices[target.endpoints[0]].position
        b = prepared.vertices[target.endpoints[1]].position
        radial = target.mid - (a + b) / 2.0
        radial /= np.linalg.norm(radial)
        target.mid = target.mid + radial * cells * 2.0 / 1023.0
        return merge_wireframe(prepared, eps_edge=4.0 / 1023.0)

    def test_one_cell_midpoint_within_tolerance_merges(self):
        graph = self._nudge_first_arc_radially(1.0)
        assert all(len(e.face_refs) == 2 for e in graph.edges)

    def test_ten_cell_midpoint_does_not_merge(self):
        graph = self._nudge_first_arc_radially(10.0)
        singles = [e for e in graph.edges if len(e.face_refs) == 1]
        assert len(singles) == 2

    def test_requires_qpos(self):
        with pytest.raises(ModelError, match="quantized"):
            merge_wireframe(cube_model())

    def test_order_independent(self, small_corpus):
        for model in small_corpus[:8]:
            prepared, conflicts = prepare_model(model)
            if conflicts:
                continue
            shuffled = prepared.copy()
            shuffled.faces = shuffled.faces[::-1]
            assert graph_signature(merge_wireframe(prepared)) == \
                graph_signature(merge_wireframe(shuffled))

    def test_idempotent_signature(self, small_corpus):
        for model in small_corpus[:8]:
            prepared, conflicts = prepare_model(model)
            if conflicts:
                continue
            g1 = merge_wireframe(prepared)
            g2 = merge_wireframe(prepared)
            assert graph_signature(g1) == graph_signature(g2)


class TestValidity:
    def test_cube_valid(self):
        report = validity_check(merged_cube())
        assert report["valid"] is True
        assert report["defects"] == []

    def test_deleting_face_invalidates(self):
        prepared, _ = prepare_model(cube_model())
        prepared.faces = prepared.faces[1:]
        graph = merge_wireframe(prepared)
        report = validity_check(graph)
        assert report["valid"] is False
        open_edges = [d for d in report["defects"] if d["kind"] == "open_edge"]
        assert len(open_edges) == 4

    def test_single_isolated_face_invalid(self):
        prepared, _ = prepare_model(cube_model())
        prepared.faces = prepared.faces[:1]
        report = validity_check(merge_wireframe(prepared))
        assert report["valid"] is False
        assert all(d["kind"] == "open_edge" for d in report["defects"])
        assert len(report["defects"]) == 4


class TestCyclomaticComplexity:
    def test_cube_is_6(self):
        assert cyclomatic_complexity(merged_cube()) == 6

    def test_single_square_loop_is_2(self):
        prepared, _ = prepare_model(cube_model())
        prepared.faces = prepared.faces[:1]
        assert cyclomatic_complexity(merge_wireframe(prepared)) == 2

    def test_two_disjoint_squares_is_4(self):
        left = generate_model(FamilySpec("Box", {"w": 1.0, "h": 1.0, "d": 1.0}))
        prepared, _ = prepare_model(left)
        # two isolated faces from opposite cube sides share no vertices
        faces = [f for f in prepared.faces]
        zlo = min(float(np.mean([prepared.vertices[v].position[2]
                                 for v in f.outer.vertex_ids()])) for f in faces)
        picked = [f for f in faces
                  if np.mean([prepared.vertices[v].position[2]
                              for v in f.outer.vertex_ids()]) in
                  (zlo, -zlo)][:2]
        prepared.faces = picked
        graph = merge_wireframe(prepared)
        assert graph.n_vertices == 8 and graph.n_edges == 8
        assert cyclomatic_complexity(graph) == 4


class TestRoundtripIsomorphism:
    def test_corpus_roundtrip(self, small_corpus, codebook):
        skipped = 0
        for model in small_corpus:
            result = roundtrip_model(model, codebook)
            if result["skipped"]:
                skipped += 1
                continue
            assert result["isomorphic"], model.metadata
            assert result["valid"], model.metadata
            assert result["max_vertex_err"] <= 1.0 / 1023.0
        assert skipped <= len(small_corpus) // 10

    def test_isomorphism_rejects_different_models(self, small_corpus):
        a, _ = prepare_model(small_corpus[0])
        candidates = [m for m in small_corpus[1:]
                      if m.metadata["family"] != small_corpus[0].metadata["family"]]
        b, _ = prepare_model(candidates[0])
        assert not graphs_isomorphic(merge_wireframe(a), merge_wireframe(b))
