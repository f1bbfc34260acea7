"""Canonical ordering and face-aware serialization into the token vocabulary.

Global token-id mapping: COORD q -> q (0..1023), CURVE c -> 1024+c
(1024..1279), then SOS=1280, EOS=1281, FACE_START=1282, LOOP_START=1283,
LINE=1284, ARC=1285, COMPLEX=1286; vocabulary size 1287.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import Config, DEFAULT_CONFIG
from .model import ARC, COMPLEX, LINE, Face, Loop, ModelError, WireframeModel
from .quantize import quantize_points, sample_edge_points_safe

COORD_BASE = 0
CURVE_BASE = 1024
TOK_SOS = 1280
TOK_EOS = 1281
TOK_FACE_START = 1282
TOK_LOOP_START = 1283
TOK_LINE = 1284
TOK_ARC = 1285
TOK_COMPLEX = 1286
VOCAB_SIZE = 1287

EDGE_TYPE_TOKENS = {LINE: TOK_LINE, ARC: TOK_ARC, COMPLEX: TOK_COMPLEX}
EDGE_KIND_OF_TOKEN = {TOK_LINE: LINE, TOK_ARC: ARC, TOK_COMPLEX: COMPLEX}


def is_coord(token: int) -> bool:
    return 0 <= token < CURVE_BASE


def is_curve(token: int) -> bool:
    return CURVE_BASE <= token < TOK_SOS


def coord_value(token: int) -> int:
    if not is_coord(token):
        raise ModelError(f"token {token} is not a coordinate token")
    return token


def curve_value(token: int) -> int:
    if not is_curve(token):
        raise ModelError(f"token {token} is not a curve token")
    return token - CURVE_BASE


def token_name(token: int) -> str:
    names = {TOK_SOS: "SOS", TOK_EOS: "EOS", TOK_FACE_START: "FACE_START",
             TOK_LOOP_START: "LOOP_START", TOK_LINE: "LINE", TOK_ARC: "ARC",
             TOK_COMPLEX: "COMPLEX"}
    if token in names:
        return names[token]
    if is_coord(token):
        return f"COORD({token})"
    if is_curve(token):
        return f"CURVE({token - CURVE_BASE})"
    return f"INVALID({token})"


# ---------------------------------------------------------------------------
# canonical ordering
# ---------------------------------------------------------------------------

def _require_quantized(model: WireframeModel) -> None:
    if any(v.qpos is None for v in model.vertices):
        raise ModelError("canonical ordering requires quantized vertices (qpos missing)")


def _loop_sample_points(loop: Loop, vertices, per_edge: int = 8) -> np.ndarray:
    chunks = [sample_edge_points_safe(edge, vertices, per_edge)[:-1]
              for _, edge in loop.entries]
    return np.concatenate(chunks, axis=0)


def _loop_orientation_sign(loop: Loop, face: Face, vertices) -> float:
    from .surface import newell_normal

    pts = _loop_sample_points(loop, vertices)
    try:
        normal = newell_normal(pts)
    except Exception:
        return 0.0
    return float(normal @ np.asarray(face.normal_hint, dtype=float))


def _reverse_loop(loop: Loop) -> Loop:
    entries = loop.entries
    n = len(entries)
    new_entries = []
    for j in range(n):
        vid = entries[(n - j) % n][0]
        edge = entries[(n - j - 1) % n][1].reversed()
        new_entries.append((vid, edge))
    return Loop(entries=new_entries, is_outer=loop.is_outer)


def _rotate_to_pivot(loop: Loop) -> Loop:
    ids = loop.vertex_ids()
    k = int(np.argmin(ids))
    return Loop(entries=loop.entries[k:] + loop.entries[:k], is_outer=loop.is_outer)


def canonical_order(model: WireframeModel, config: Config = DEFAULT_CONFIG,
                    ) -> WireframeModel:
    """Reassign vertex ids by (z,y,x), orient loops, and sort faces and loops.

    Outer loops become counter-clockwise and inner loops clockwise with
    respect to the face normal hint (signed-area sign test on sampled loop
    points); each loop starts at its lowest-id vertex; faces sort by their
    sorted constituent vertex ids with serialized-token comparison as the
    tiebreak.  Idempotent.
    """
    _require_quantized(model)
    out = model.copy()

    order = sorted(range(len(out.vertices)),
                   key=lambda i: tuple(int(c) for c in out.vertices[i].qpos[::-1]))
    remap = {old: new for new, old in enumerate(order)}
    out.vertices = [out.vertices[old] for old in order]
    for new_id, vertex in enumerate(out.vertices):
        vertex.id = new_id
    for _, _, _, _, edge in out.iter_loop_entries():
        edge.endpoints = (remap[edge.endpoints[0]], remap[edge.endpoints[1]])
    for face in out.faces:
        for loop in face.loops:
            loop.entries = [(remap[v], e) for v, e in loop.entries]

    for face in out.faces:
        fixed_loops = []
        for loop in face.loops:
            sign = _loop_orientation_sign(loop, face, out.vertices)
            want_ccw = loop.is_outer
            if (want_ccw and sign < 0.0) or (not want_ccw and sign > 0.0):
                loop = _reverse_loop(loop)
            fixed_loops.append(_rotate_to_pivot(loop))
        outer = [lp for lp in fixed_loops if lp.is_outer]
        inner = sorted((lp for lp in fixed_loops if not lp.is_outer),
                       key=lambda lp: lp.entries[0][0])
        face.loops = outer + inner

    def face_key(face: Face) -> tuple:
        ids = tuple(sorted({v for lp in face.loops for v in lp.vertex_ids()}))
        return ids, tuple(_face_comparison_tokens(face, out, config))

    out.faces.sort(key=face_key)
    return out


def _face_comparison_tokens(face: Face, model: WireframeModel,
                            config: Config) -> list[int]:
    """Deterministic content key; complex payloads always use quantized samples
    so the ordering is identical before and after curve tokens are attached."""
    toks: list[int] = []
    for token in _serialize_face_tokens(face, model, config, payload="content"):
        if isinstance(token, list):
            toks.extend(token)
        else:
            toks.append(token)
    return toks


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _serialize_face_tokens(face: Face, model: WireframeModel, config: Config,
                           payload: str = "tokens"):
    max_entries = config.max_loop_entities // 2
    yield TOK_FACE_START
    for li, loop in enumerate(face.loops):
        if len(loop.entries) > max_entries:
            raise ModelError(f"loop {li} exceeds {max_entries} entries")
        yield TOK_LOOP_START
        for vid, edge in loop.entries:
            q = model.vertex(vid).qpos
            yield COORD_BASE + int(q[0])
            yield COORD_BASE + int(q[1])
            yield COORD_BASE + int(q[2])
            yield EDGE_TYPE_TOKENS[edge.kind]
            if edge.kind == ARC:
                qm = quantize_points(edge.mid, config)
                yield COORD_BASE + int(qm[0])
                yield COORD_BASE + int(qm[1])
                yield COORD_BASE + int(qm[2])
            elif edge.kind == COMPLEX:
                if payload == "content":
                    yield [int(x) for x in quantize_points(edge.samples, config).ravel()]
                elif edge.curve_tokens is None:
                    raise ModelError("complex edge is missing curve tokens")
                else:
                    for c in edge.curve_tokens:
                        yield CURVE_BASE + int(c)


def serialize_face(face: Face, model: WireframeModel,
                   config: Config = DEFAULT_CONFIG) -> list[int]:
    """Token sequence for one face: delimiters plus interleaved vertex/edge runs."""
    _require_quantized(model)
    return list(_serialize_face_tokens(face, model, config))


def serialize_model(model: WireframeModel, config: Config = DEFAULT_CONFIG) -> list[int]:
    """SOS + concatenated canonical face sequences + EOS."""
    _require_quantized(model)
    if not model.faces:
        raise ModelError("no faces to serialize")
    tokens = [TOK_SOS]
    for face in model.faces:
        tokens.extend(_serialize_face_tokens(face, model, config))
    tokens.append(TOK_EOS)
    if len(tokens) > config.max_seq_len:
        raise ModelError(
            f"serialized sequence has {len(tokens)} tokens > {config.max_seq_len}")
    return tokens


# ---------------------------------------------------------------------------
# token files
# ---------------------------------------------------------------------------

def save_tokens(tokens: list[int], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"tokens": [int(t) for t in tokens]}, fh)
        fh.write("\n")


def load_tokens(path: str | Path) -> list[int]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if "tokens" not in doc:
        raise ModelError(f"{path}: missing 'tokens'")
    return [int(t) for t in doc["tokens"]]
