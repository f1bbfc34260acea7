"""Hierarchical automaton over token sequences.

`advance` validates one token at a time with explicit transition rules;
`valid_next_mask` constructs the allowed-token set independently, so the two
can be cross-checked against each other.  `structural_indices` derives the
per-token 5-tuple (face, loop, entity-type, entity-ordinal, intra-offset)
from the prefix alone, and `parse_tokens` rebuilds a pre-merge wireframe.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import Config, DEFAULT_CONFIG
from .model import (
    ARC,
    COMPLEX,
    LINE,
    Edge,
    Face,
    Loop,
    ModelError,
    Vertex,
    WireframeModel,
)
from .quantize import (
    Codebook,
    align_curve_to_endpoints,
    dequantize_points,
    rq_decode_curve,
    sample_edge_points_safe,
)
from .serialize import (
    CURVE_BASE,
    EDGE_KIND_OF_TOKEN,
    TOK_ARC,
    TOK_COMPLEX,
    TOK_EOS,
    TOK_FACE_START,
    TOK_LINE,
    TOK_LOOP_START,
    TOK_SOS,
    VOCAB_SIZE,
    is_coord,
    is_curve,
    token_name,
)

# phases
START = "start"
AWAIT_FACE = "await_face"
AWAIT_LOOP = "await_loop"
IN_VERTEX = "in_vertex"
AWAIT_EDGE_TYPE = "await_edge_type"
IN_ARC_MID = "in_arc_mid"
IN_CURVE = "in_curve"
EDGE_COMPLETE = "edge_complete"
DONE = "done"


class GrammarError(ValueError):
    """Token rejected by the automaton; carries position and the expected set."""

    def __init__(self, position: int, token: int | None, expected: list[int]):
        self.position = position
        self.token = token
        self.expected = expected
        preview = ", ".join(token_name(t) for t in expected[:6])
        if len(expected) > 6:
            preview += ", ..."
        what = ("sequence ended" if token is None
                else f"invalid token {token_name(token)}")
        super().__init__(
            f"{what} at position {position}; expected one of [{preview}]")


@dataclass(frozen=True)
class GrammarState:
    phase: str = START
    k: int = 0                 # intra-entity progress (coords or curve tokens read)
    face_idx: int = 0          # faces started so far (current face, 1-based)
    loop_idx: int = 0          # loops started in the current face
    entity_ordinal: int = 0    # interleaved vertex/edge ordinal within the loop
    verts_in_loop: int = 0
    tokens: int = 0            # tokens consumed so far

    @property
    def done(self) -> bool:
        return self.phase == DONE


def _close_cost(verts: int) -> int:
    # tokens to reach EOS from edge_complete with `verts` loop vertices
    return 1 if verts >= 2 else 5


def min_tokens_to_done(state: GrammarState) -> int:
    """Lower bound on tokens needed to reach a legal EOS from this state."""
    phase = state.phase
    if phase == DONE:
        return 0
    if phase == START:
        return 12
    if phase == AWAIT_FACE:
        return 11
    if phase == AWAIT_LOOP:
        return 10
    if phase == IN_VERTEX:
        verts_after = state.verts_in_loop + (1 if state.k == 0 else 0)
        return (3 - state.k) + 1 + _close_cost(verts_after)
    if phase == AWAIT_EDGE_TYPE:
        return 1 + _close_cost(state.verts_in_loop)
    if phase == IN_ARC_MID:
        return (3 - state.k) + _close_cost(state.verts_in_loop)
    if phase == IN_CURVE:
        return (12 - state.k) + _close_cost(state.verts_in_loop)
    if phase == EDGE_COMPLETE:
        return _close_cost(state.verts_in_loop)
    raise ValueError(f"unknown phase {phase!r}")


def _fits_budget(state: GrammarState, successor: GrammarState, config: Config) -> bool:
    return successor.tokens + min_tokens_to_done(successor) <= config.max_seq_len


def _successor(state: GrammarState, token: int, config: Config) -> GrammarState | None:
    """Transition function; None when the token is structurally invalid."""
    t = state.tokens + 1
    phase = state.phase
    if phase == START:
        if token == TOK_SOS:
            return replace(state, phase=AWAIT_FACE, tokens=t)
        return None
    if phase == AWAIT_FACE:
        if token == TOK_FACE_START and state.face_idx < config.max_faces:
            return replace(state, phase=AWAIT_LOOP, face_idx=state.face_idx + 1,
                           loop_idx=0, tokens=t)
        return None
    if phase == AWAIT_LOOP:
        if token == TOK_LOOP_START and state.loop_idx < config.max_loops:
            return replace(state, phase=IN_VERTEX, k=0, loop_idx=state.loop_idx + 1,
                           entity_ordinal=0, verts_in_loop=0, tokens=t)
        return None
    if phase == IN_VERTEX:
        if not is_coord(token):
            return None
        k = state.k + 1
        ordinal = state.entity_ordinal + (1 if state.k == 0 else 0)
        verts = state.verts_in_loop + (1 if state.k == 0 else 0)
        if k == 3:
            return replace(state, phase=AWAIT_EDGE_TYPE, k=0, entity_ordinal=ordinal,
                           verts_in_loop=verts, tokens=t)
        return replace(state, phase=IN_VERTEX, k=k, entity_ordinal=ordinal,
                       verts_in_loop=verts, tokens=t)
    if phase == AWAIT_EDGE_TYPE:
        if token == TOK_LINE:
            return replace(state, phase=EDGE_COMPLETE, k=0,
                           entity_ordinal=state.entity_ordinal + 1, tokens=t)
        if token == TOK_ARC:
            return replace(state, phase=IN_ARC_MID, k=0,
                           entity_ordinal=state.entity_ordinal + 1, tokens=t)
        if token == TOK_COMPLEX:
            return replace(state, phase=IN_CURVE, k=0,
                           entity_ordinal=state.entity_ordinal + 1, tokens=t)
        return None
    if phase == IN_ARC_MID:
        if not is_coord(token):
            return None
        k = state.k + 1
        next_phase = EDGE_COMPLETE if k == 3 else IN_ARC_MID
        return replace(state, phase=next_phase, k=0 if k == 3 else k, tokens=t)
    if phase == IN_CURVE:
        if not is_curve(token):
            return None
        k = state.k + 1
        next_phase = EDGE_COMPLETE if k == 12 else IN_CURVE
        return replace(state, phase=next_phase, k=0 if k == 12 else k, tokens=t)
    if phase == EDGE_COMPLETE:
        if is_coord(token):
            if state.entity_ordinal + 2 > config.max_loop_entities:
                return None
            return replace(state, phase=IN_VERTEX, k=1,
                           entity_ordinal=state.entity_ordinal + 1,
                           verts_in_loop=state.verts_in_loop + 1, tokens=t)
        if state.verts_in_loop < 2:
            return None
        if token == TOK_LOOP_START:
            if state.loop_idx >= config.max_loops:
                return None
            return replace(state, phase=IN_VERTEX, k=0, loop_idx=state.loop_idx + 1,
                           entity_ordinal=0, verts_in_loop=0, tokens=t)
        if token == TOK_FACE_START:
            if state.face_idx >= config.max_faces:
                return None
            return replace(state, phase=AWAIT_LOOP, face_idx=state.face_idx + 1,
                           loop_idx=0, tokens=t)
        if token == TOK_EOS:
            return replace(state, phase=DONE, tokens=t)
        return None
    return None


def advance(state: GrammarState, token: int, config: Config = DEFAULT_CONFIG,
            ) -> GrammarState:
    """Consume one token; raises :class:`GrammarError` for invalid tokens."""
    if state.done:
        raise GrammarError(state.tokens, token, [])
    if not 0 <= token < VOCAB_SIZE:
        mask = valid_next_mask(state, config)
        raise GrammarError(state.tokens, token, np.flatnonzero(mask).tolist())
    successor = _successor(state, token, config)
    if successor is None or not _fits_budget(state, successor, config):
        mask = valid_next_mask(state, config)
        raise GrammarError(state.tokens, token, np.flatnonzero(mask).tolist())
    return successor


def valid_next_mask(state: GrammarState, config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Boolean vector over the 1287 token ids accepted from this state."""
    if state.done:
        raise GrammarError(state.tokens, -1, [])
    mask = np.zeros(VOCAB_SIZE, dtype=bool)
    phase = state.phase
    t_next = state.tokens + 1

    def allow(token_ids, succ_min_remaining: int) -> None:
        if t_next + succ_min_remaining <= config.max_seq_len:
            mask[token_ids] = True

    if phase == START:
        allow(TOK_SOS, 11)
    elif phase == AWAIT_FACE:
        if state.face_idx < config.max_faces:
            allow(TOK_FACE_START, 10)
    elif phase == AWAIT_LOOP:
        if state.loop_idx < config.max_loops:
            allow(TOK_LOOP_START, 3 + 1 + _close_cost(1))
    elif phase == IN_VERTEX:
        verts_after = state.verts_in_loop + (1 if state.k == 0 else 0)
        remaining = (3 - state.k - 1) + 1 + _close_cost(verts_after)
        allow(slice(0, CURVE_BASE), remaining)
    elif phase == AWAIT_EDGE_TYPE:
        close = _close_cost(state.verts_in_loop)
        allow(TOK_LINE, close)
        allow(TOK_ARC, 3 + close)
        allow(TOK_COMPLEX, 12 + close)
    elif phase == IN_ARC_MID:
        allow(slice(0, CURVE_BASE), (3 - state.k - 1) + _close_cost(state.verts_in_loop))
    elif phase == IN_CURVE:
        allow(slice(CURVE_BASE, TOK_SOS),
              (12 - state.k - 1) + _close_cost(state.verts_in_loop))
    elif phase == EDGE_COMPLETE:
        if state.entity_ordinal + 2 <= config.max_loop_entities:
            allow(slice(0, CURVE_BASE), 2 + 1 + _close_cost(state.verts_in_loop + 1))
        if state.verts_in_loop >= 2:
            if state.loop_idx < config.max_loops:
                allow(TOK_LOOP_START, 3 + 1 + _close_cost(1))
            if state.face_idx < config.max_faces:
                allow(TOK_FACE_START, 10)
            allow(TOK_EOS, 0)
    return mask


# ---------------------------------------------------------------------------
# structural multi-indices
# ---------------------------------------------------------------------------

def _index_tuple(prev: GrammarState, token: int, nxt: GrammarState,
                 ) -> tuple[int, int, int, int, int]:
    if token in (TOK_SOS, TOK_EOS):
        return (0, 0, 0, 0, 0)
    if token == TOK_FACE_START:
        return (nxt.face_idx, 0, 0, 0, 0)
    if token == TOK_LOOP_START:
        return (nxt.face_idx, nxt.loop_idx, 0, 0, 0)
    if prev.phase in (IN_VERTEX, EDGE_COMPLETE):
        # a vertex coordinate; nxt.k==0 means the third coord was just read
        intra = nxt.k if nxt.phase == IN_VERTEX else 3
        return (nxt.face_idx, nxt.loop_idx, 1, nxt.entity_ordinal, intra)
    if prev.phase == AWAIT_EDGE_TYPE:
        return (nxt.face_idx, nxt.loop_idx, 2, nxt.entity_ordinal, 1)
    if prev.phase == IN_ARC_MID:
        intra = 1 + (nxt.k if nxt.phase == IN_ARC_MID else 3)
        return (nxt.face_idx, nxt.loop_idx, 2, nxt.entity_ordinal, intra)
    if prev.phase == IN_CURVE:
        intra = 1 + (nxt.k if nxt.phase == IN_CURVE else 12)
        return (nxt.face_idx, nxt.loop_idx, 2, nxt.entity_ordinal, intra)
    raise ValueError(f"no index rule for phase {prev.phase!r} token {token}")


def structural_indices(tokens: list[int], config: Config = DEFAULT_CONFIG,
                       ) -> list[tuple[int, int, int, int, int]]:
    """One (face, loop, type, geom, intra) tuple per token, prefix-derived."""
    state = GrammarState()
    out = []
    for token in tokens:
        nxt = advance(state, token, config)
        out.append(_index_tuple(state, token, nxt))
        state = nxt
    return out


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def parse_tokens(tokens: list[int], book: Codebook | None = None,
                 config: Config = DEFAULT_CONFIG) -> WireframeModel:
    """Rebuild a pre-merge wireframe model (entities duplicated per face).

    Complex curves are decoded through the codebook and similarity-aligned to
    their endpoint vertices.  Raises :class:`GrammarError` at the first
    invalid position, including truncation mid-entity.
    """
    state = GrammarState()
    vertices: list[Vertex] = []
    faces: list[Face] = []
    # per-loop accumulation: list of (vertex_id, edge_kind, payload)
    face_loops: list[list] = []
    loop_items: list[tuple[int, str, list[int]]] = []
    coord_buf: list[int] = []
    payload_buf: list[int] = []
    current_kind: str | None = None

    def new_vertex(q3: list[int]) -> int:
        q = np.asarray(q3, dtype=int)
        vid = len(vertices)
        vertices.append(Vertex(position=dequantize_points(q, config), id=vid, qpos=q))
        return vid

    def close_edge() -> None:
        nonlocal current_kind
        if current_kind is not None:
            loop_items[-1] = (loop_items[-1][0], current_kind, list(payload_buf))
            payload_buf.clear()
            current_kind = None

    def close_loop() -> None:
        if loop_items:
            face_loops.append(list(loop_items))
            loop_items.clear()

    def close_face() -> None:
        close_loop()
        if face_loops:
            faces.append(_build_face(face_loops, vertices, book, config))
            face_loops.clear()

    for token in tokens:
        prev = state
        state = advance(state, token, config)
        if token == TOK_SOS:
            continue
        if token == TOK_EOS:
            close_edge()
            close_face()
            continue
        if token == TOK_FACE_START:
            close_edge()
            close_face()
            continue
        if token == TOK_LOOP_START:
            close_edge()
            close_loop()
            continue
        if prev.phase in (IN_VERTEX, EDGE_COMPLETE) and is_coord(token):
            close_edge()
            coord_buf.append(token)
            if len(coord_buf) == 3:
                loop_items.append((new_vertex(coord_buf), LINE, []))
                coord_buf.clear()
            continue
        if prev.phase == AWAIT_EDGE_TYPE:
            current_kind = EDGE_KIND_OF_TOKEN[token]
            if current_kind == LINE:
                close_edge()
            continue
        if prev.phase == IN_ARC_MID:
            payload_buf.append(token)
            if len(payload_buf) == 3:
                close_edge()
            continue
        if prev.phase == IN_CURVE:
            payload_buf.append(token - CURVE_BASE)
            if len(payload_buf) == 12:
                close_edge()
            continue
    if not state.done:
        mask = valid_next_mask(state, config)
        raise GrammarError(state.tokens, None, np.flatnonzero(mask).tolist())
    return WireframeModel(vertices=vertices, faces=faces,
                          metadata={"provenance": "parsed"})


def _build_face(face_loops: list, vertices: list[Vertex], book: Codebook | None,
                config: Config) -> Face:
    loops = []
    for li, items in enumerate(face_loops):
        entries = []
        n = len(items)
        for ei, (vid, kind, payload) in enumerate(items):
            v_next = items[(ei + 1) % n][0]
            edge = Edge(kind=kind, endpoints=(vid, v_next))
            if kind == ARC:
                edge.mid = dequantize_points(np.asarray(payload, dtype=int), config)
            elif kind == COMPLEX:
                if book is None:
                    raise ModelError("parsing complex edges requires a codebook")
                canonical = rq_decode_curve(payload, book, config)
                # tokens encode the lexicographically-canonical direction;
                # flip back when this loop traverses the edge the other way
                qa = tuple(int(c) for c in vertices[vid].qpos)
                qb = tuple(int(c) for c in vertices[v_next].qpos)
                if qa > qb:
                    canonical = canonical[::-1]
                start = vertices[vid].position
                end = vertices[v_next].position
                edge.samples = align_curve_to_endpoints(canonical, start, end, config)
                edge.curve_tokens = list(payload)
            entries.append((vid, edge))
        loops.append(Loop(entries=entries, is_outer=(li == 0)))
    face = Face(loops=loops, normal_hint=np.array([0.0, 0.0, 1.0]))
    face.normal_hint = _recover_normal_hint(face, vertices)
    return face


def _recover_normal_hint(face: Face, vertices: list[Vertex]) -> np.ndarray:
    from .surface import newell_normal

    try:
        pts = np.concatenate([sample_edge_points_safe(e, vertices, 8)[:-1]
                              for _, e in face.outer.entries], axis=0)
        normal = newell_normal(pts)
        return normal / np.linalg.norm(normal)
    except Exception:
        return np.array([0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# rollout probe
# ---------------------------------------------------------------------------

def uniform_rollout(rng: np.random.Generator, config: Config = DEFAULT_CONFIG,
                    ) -> list[int]:
    """Sample a sequence by drawing uniformly from the valid-token mask."""
    state = GrammarState()
    tokens: list[int] = []
    while not state.done:
        valid = np.flatnonzero(valid_next_mask(state, config))
        token = int(valid[rng.integers(len(valid))])
        tokens.append(token)
        state = advance(state, token, config)
    return tokens
