import numpy as np
import pytest

from brepwire.config import Config
from brepwire.grammar import (
    GrammarError,
    GrammarState,
    advance,
    min_tokens_to_done,
    parse_tokens,
    structural_indices,
    uniform_rollout,
    valid_next_mask,
)
from brepwire.pipeline import encode_model
from brepwire.serialize import (
    TOK_ARC,
    TOK_COMPLEX,
    TOK_EOS,
    TOK_FACE_START,
    TOK_LINE,
    TOK_LOOP_START,
    TOK_SOS,
    VOCAB_SIZE,
)
from conftest import cube_model


def advance_all(tokens, config=None):
    state = GrammarState()
    for t in tokens:
        state = advance(state, t) if config is None else advance(state, t, config)
    return state


def cube_tokens():
    tokens, _, _, _ = encode_model(cube_model())
    return tokens


class TestAdvance:
    def test_start_sequence(self):
        state = GrammarState()
        state = advance(state, TOK_SOS)
        assert state.phase == "await_face"
        state = advance(state, TOK_FACE_START)
        assert state.phase == "await_loop"
        assert state.face_idx == 1

    def test_three_coords_complete_vertex(self):
        state = advance_all([TOK_SOS, TOK_FACE_START, TOK_LOOP_START, 5, 6])
        assert state.phase == "in_vertex" and state.k == 2
        state = advance(state, 7)
        assert state.phase == "await_edge_type"

    def test_min_two_vertices_per_loop(self):
        state = advance_all([TOK_SOS, TOK_FACE_START, TOK_LOOP_START,
                             5, 6, 7, TOK_LINE])
        with pytest.raises(GrammarError) as err:
            advance(state, TOK_LOOP_START)
        assert err.value.position == 7

    def test_invalid_token_reports_expected(self):
        state = advance_all([TOK_SOS])
        with pytest.raises(GrammarError) as err:
            advance(state, TOK_EOS)
        assert err.value.expected == [TOK_FACE_START]

    def test_done_rejects_everything(self):
        tokens = cube_tokens()
        state = advance_all(tokens)
        assert state.done
        with pytest.raises(GrammarError):
            advance(state, TOK_SOS)


class TestMask:
    def test_after_sos_only_face_start(self):
        mask = valid_next_mask(advance_all([TOK_SOS]))
        assert np.flatnonzero(mask).tolist() == [TOK_FACE_START]

    def test_after_pivot_only_edge_types(self):
        state = advance_all([TOK_SOS, TOK_FACE_START, TOK_LOOP_START, 5, 6, 7])
        mask = valid_next_mask(state)
        assert np.flatnonzero(mask).tolist() == [TOK_LINE, TOK_ARC, TOK_COMPLEX]

    def test_edge_complete_closure_or_continue(self):
        state = advance_all([TOK_SOS, TOK_FACE_START, TOK_LOOP_START,
                             5, 6, 7, TOK_LINE, 8, 9, 10, TOK_LINE])
        mask = valid_next_mask(state)
        ids = np.flatnonzero(mask)
        assert mask[:1024].all()
        assert set(ids[ids >= 1024]) == {TOK_LOOP_START, TOK_FACE_START, TOK_EOS}

    def test_face_capacity_masked(self):
        config = Config(max_faces=2)
        tokens = [TOK_SOS]
        for _ in range(2):
            tokens += [TOK_FACE_START, TOK_LOOP_START,
                       1, 2, 3, TOK_LINE, 4, 5, 6, TOK_LINE]
        state = advance_all(tokens, config)
        mask = valid_next_mask(state, config)
        assert not mask[TOK_FACE_START]
        assert mask[TOK_EOS]

    def test_loop_entity_capacity(self):
        tokens = [TOK_SOS, TOK_FACE_START, TOK_LOOP_START]
        for _ in range(15):      # 15 vertices = 30 interleaved entities
            tokens += [1, 2, 3, TOK_LINE]
        state = advance_all(tokens)
        mask = valid_next_mask(state)
        assert not mask[:1024].any()
        assert mask[TOK_LOOP_START] and mask[TOK_FACE_START] and mask[TOK_EOS]

    def test_mask_matches_advance_everywhere(self, rng):
        # the cross-check invariant behind the fuzz acceptance criterion
        state = GrammarState()
        for t in cube_tokens():
            mask = valid_next_mask(state)
            assert mask[t]
            probe = int(rng.integers(VOCAB_SIZE))
            if not mask[probe]:
                with pytest.raises(GrammarError):
                    advance(state, probe)
            state = advance(state, t)

    def test_budget_enforced_near_max_len(self):
        config = Config(max_seq_len=12)   # exactly the minimal model length
        state = advance_all([TOK_SOS], config)
        assert valid_next_mask(state, config)[TOK_FACE_START]
        config = Config(max_seq_len=11)
        state = GrammarState()
        mask = valid_next_mask(state, config)
        assert not mask.any()   # even SOS cannot lead to completion


class TestMinTokens:
    def test_start_needs_minimal_model(self):
        assert min_tokens_to_done(GrammarState()) == 12

    def test_smallest_model_is_13_tokens(self):
        tokens = [TOK_SOS, TOK_FACE_START, TOK_LOOP_START,
                  1, 2, 3, TOK_LINE, 4, 5, 6, TOK_LINE, TOK_EOS]
        state = advance_all(tokens)
        assert state.done
        assert len(tokens) == 12
        assert min_tokens_to_done(GrammarState()) == 12


class TestStructuralIndices:
    def test_spec_conventions(self):
        tokens = cube_tokens()
        idx = structural_indices(tokens)
        assert idx[0] == (0, 0, 0, 0, 0)            # SOS
        assert idx[1] == (1, 0, 0, 0, 0)            # first FACE_START
        assert idx[2] == (1, 1, 0, 0, 0)            # first LOOP_START
        assert idx[3] == (1, 1, 1, 1, 1)            # pivot x
        assert idx[5] == (1, 1, 1, 1, 3)            # pivot z
        assert idx[6] == (1, 1, 2, 2, 1)            # first LINE token
        assert idx[-1] == (0, 0, 0, 0, 0)           # EOS

    def test_arc_and_curve_offsets(self, small_corpus, codebook):
        plate = next(m for m in small_corpus
                     if m.metadata["family"] == "PlateWithHoles")
        tokens, indices, _, _ = encode_model(plate, codebook)
        arc_positions = [i for i, t in enumerate(tokens) if t == TOK_ARC]
        p = arc_positions[0]
        assert indices[p][2] == 2 and indices[p][4] == 1
        assert indices[p + 1][4] == 2
        assert indices[p + 3][4] == 4
        freeform = next(m for m in small_corpus
                        if m.metadata["family"] == "FreeformPlate")
        tokens, indices, _, _ = encode_model(freeform, codebook)
        cx_positions = [i for i, t in enumerate(tokens) if t == TOK_COMPLEX]
        p = cx_positions[0]
        assert indices[p][4] == 1
        assert indices[p + 1][4] == 2
        assert indices[p + 12][4] == 13

    def test_prefix_causality(self, rng):
        tokens = cube_tokens()
        full = structural_indices(tokens)
        for cut in rng.integers(1, len(tokens), 10):
            assert structural_indices(tokens[:cut]) == full[:cut]

    def test_bounds(self, small_corpus, codebook):
        for model in small_corpus[:15]:
            tokens, indices, _, conflicts = encode_model(model, codebook)
            if conflicts:
                continue
            for f, l, t, g, i in indices:
                assert 0 <= f <= 70 and 0 <= l <= 15 and t in (0, 1, 2)
                assert 0 <= g <= 30 and 0 <= i <= 13


class TestParse:
    def test_cube_roundtrip_structure(self):
        parsed = parse_tokens(cube_tokens())
        assert len(parsed.faces) == 6
        for face in parsed.faces:
            assert len(face.loops) == 1
            assert len(face.outer.entries) == 4
            assert all(e.kind == "line" for _, e in face.outer.entries)

    def test_truncated_sequence_errors_at_end(self):
        tokens = cube_tokens()[:17]     # ends mid-vertex
        with pytest.raises(GrammarError) as err:
            parse_tokens(tokens)
        assert err.value.position == 17
        assert err.value.token is None

    def test_every_serialized_sequence_accepted(self, small_corpus, codebook):
        for model in small_corpus[:20]:
            tokens, _, _, conflicts = encode_model(model, codebook)
            if conflicts:
                continue
            parse_tokens(tokens, codebook)

    def test_rollouts_parse(self, codebook, rng):
        for _ in range(50):
            tokens = uniform_rollout(rng)
            model = parse_tokens(tokens, codebook)
            assert model.faces

    def test_complex_requires_book(self, small_corpus, codebook):
        freeform = next(m for m in small_corpus
                        if m.metadata["family"] == "FreeformPlate")
        tokens, _, _, _ = encode_model(freeform, codebook)
        from brepwire.model import ModelError
        with pytest.raises(ModelError, match="codebook"):
            parse_tokens(tokens, None)
