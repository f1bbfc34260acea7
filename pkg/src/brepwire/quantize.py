"""Coordinate quantization, vertex merging, arc geometry and the residual curve codec.

Complex curves are encoded in a canonical per-curve frame (isotropic bbox
normalization into [-1,1]^3, no rotation) as 4 segments x 3 residual levels
against one shared 256-entry codebook, then mapped back onto their global
endpoints with a similarity transform (decode-then-scale).
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config, DEFAULT_CONFIG
from .model import (
    ARC,
    COMPLEX,
    LINE,
    Edge,
    ModelError,
    Transform,
    Vertex,
    WireframeModel,
)

CODEBOOK_MAGIC = b"RQCB"


class GeometryError(ValueError):
    """Degenerate or out-of-contract geometric input."""


# ---------------------------------------------------------------------------
# scalar grid
# ---------------------------------------------------------------------------

def quantize_coord(x: float, config: Config = DEFAULT_CONFIG) -> int:
    """Map x in [-1,1] to an integer grid index; values outside are clamped."""
    if abs(x) > 1.0:
        warnings.warn(f"coordinate {x} outside [-1,1]; clamping", stacklevel=2)
        x = min(1.0, max(-1.0, x))
    qmax = config.qmax
    # round-half-up for cross-platform determinism
    return int(np.floor((x + 1.0) * qmax / 2.0 + 0.5))


def dequantize_coord(q: int, config: Config = DEFAULT_CONFIG) -> float:
    if not 0 <= q <= config.qmax:
        raise GeometryError(f"quantized index {q} outside [0, {config.qmax}]")
    return 2.0 * q / config.qmax - 1.0


def quantize_points(points: np.ndarray, config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorized quantize_coord over an (..., 3) array (silent clamping)."""
    clipped = np.clip(np.asarray(points, dtype=float), -1.0, 1.0)
    return np.floor((clipped + 1.0) * config.qmax / 2.0 + 0.5).astype(np.int64)


def dequantize_points(q: np.ndarray, config: Config = DEFAULT_CONFIG) -> np.ndarray:
    q = np.asarray(q)
    if np.any(q < 0) or np.any(q > config.qmax):
        raise GeometryError("quantized index outside grid range")
    return 2.0 * q.astype(float) / config.qmax - 1.0


# ---------------------------------------------------------------------------
# arcs
# ---------------------------------------------------------------------------

def arc_from_three_points(a: np.ndarray, mid: np.ndarray, b: np.ndarray,
                          ) -> tuple[np.ndarray, float, np.ndarray]:
    """Circle through three points: (center, radius, unit plane normal).

    The arc itself is the one from a to b passing through mid.
    """
    a = np.asarray(a, dtype=float)
    mid = np.asarray(mid, dtype=float)
    b = np.asarray(b, dtype=float)
    d21 = mid - a
    d31 = b - a
    cr = np.cross(d21, d31)
    cr2 = float(cr @ cr)
    if np.sqrt(cr2) / 2.0 <= 1e-12:
        raise GeometryError("collinear arc points")
    center = a + (np.cross(cr, d21) * float(d31 @ d31)
                  + np.cross(d31, cr) * float(d21 @ d21)) / (2.0 * cr2)
    radius = float(np.linalg.norm(a - center))
    return center, radius, cr / np.sqrt(cr2)


def sample_arc(a: np.ndarray, mid: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """n points at uniform angle along the arc a -> b through mid."""
    center, radius, normal = arc_from_three_points(a, mid, b)
    e1 = (np.asarray(a, dtype=float) - center) / radius
    e2 = np.cross(normal, e1)

    def angle_of(p: np.ndarray) -> float:
        d = np.asarray(p, dtype=float) - center
        return float(np.arctan2(d @ e2, d @ e1))

    two_pi = 2.0 * np.pi
    phi_mid = angle_of(mid) % two_pi
    phi_b = angle_of(b) % two_pi
    sweep = phi_b if phi_mid < phi_b else phi_b - two_pi
    t = np.linspace(0.0, sweep, n)
    return center + radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)


def sample_edge_points(edge: Edge, vertices, n: int | None = None,
                       config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Uniformly sample n points along the edge's parametric domain."""
    n = n or config.grid_points
    a = _vertex_position(vertices, edge.endpoints[0])
    b = _vertex_position(vertices, edge.endpoints[1])
    if edge.kind == LINE:
        t = np.linspace(0.0, 1.0, n)[:, None]
        return a * (1.0 - t) + b * t
    if edge.kind == ARC:
        if edge.mid is None:
            raise GeometryError("arc edge missing midpoint")
        return sample_arc(a, edge.mid, b, n)
    if edge.samples is None:
        raise GeometryError("complex edge missing samples")
    if n == len(edge.samples):
        return np.asarray(edge.samples, dtype=float).copy()
    t = np.linspace(0.0, 1.0, n)
    src = np.linspace(0.0, 1.0, len(edge.samples))
    return np.stack([np.interp(t, src, edge.samples[:, k]) for k in range(3)], axis=1)


def sample_edge_points_safe(edge: Edge, vertices, n: int | None = None,
                            config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Like sample_edge_points but degrades degenerate arcs to their chord."""
    try:
        return sample_edge_points(edge, vertices, n, config)
    except GeometryError:
        a = _vertex_position(vertices, edge.endpoints[0])
        b = _vertex_position(vertices, edge.endpoints[1])
        t = np.linspace(0.0, 1.0, n or config.grid_points)[:, None]
        return a * (1.0 - t) + b * t


def _vertex_position(vertices, vid: int) -> np.ndarray:
    v = vertices[vid]
    if isinstance(v, Vertex):
        return np.asarray(v.position, dtype=float)
    return np.asarray(v, dtype=float)


# ---------------------------------------------------------------------------
# vertex merging
# ---------------------------------------------------------------------------

def quantize_vertices(model: WireframeModel, config: Config = DEFAULT_CONFIG,
                      ) -> tuple[WireframeModel, list[dict]]:
    """Quantize all vertices, merge grid-cell duplicates, report conflicts.

    Positions snap onto the dequantized grid so that every face referencing a
    merged vertex sees identical coordinates; complex-edge samples are
    realigned onto the snapped endpoints and arc midpoints snap to the grid.
    A conflict is recorded whenever merging collapses an edge or makes two
    entries of one loop coincide, and when snapping degenerates an arc.
    """
    out = model.copy()
    conflicts: list[dict] = []

    qpos = quantize_points(np.stack([v.position for v in out.vertices]), config)
    cell_to_new: dict[tuple[int, int, int], int] = {}
    remap: list[int] = []
    merged: list[Vertex] = []
    for vid, q in enumerate(qpos):
        key = (int(q[0]), int(q[1]), int(q[2]))
        if key not in cell_to_new:
            cell_to_new[key] = len(merged)
            merged.append(Vertex(position=dequantize_points(q, config), id=len(merged),
                                 qpos=q.copy()))
        remap.append(cell_to_new[key])
    out.vertices = merged

    for fi, face in enumerate(out.faces):
        for li, loop in enumerate(face.loops):
            new_entries = [(remap[v], e) for v, e in loop.entries]
            ids = [v for v, _ in new_entries]
            for ei, (v, edge) in enumerate(new_entries):
                v_next = ids[(ei + 1) % len(ids)]
                edge.endpoints = (v, v_next)
                if v == v_next:
                    conflicts.append({"kind": "degenerate_edge", "face": fi,
                                      "loop": li, "entry": ei})
            if len(set(ids)) != len(ids):
                conflicts.append({"kind": "loop_entry_collapse", "face": fi, "loop": li})
            loop.entries = new_entries

    for fi, li, ei, vid, edge in out.iter_loop_entries():
        a = out.vertices[edge.endpoints[0]].position
        b = out.vertices[edge.endpoints[1]].position
        if edge.kind == ARC:
            edge.mid = dequantize_points(quantize_points(edge.mid, config), config)
            if np.linalg.norm(np.cross(edge.mid - a, b - a)) / 2.0 <= 1e-12:
                conflicts.append({"kind": "arc_collapse", "face": fi,
                                  "loop": li, "entry": ei})
        elif edge.kind == COMPLEX:
            if np.linalg.norm(b - a) < config.min_chord:
                conflicts.append({"kind": "edge_below_resolution", "face": fi,
                                  "loop": li, "entry": ei})
                continue
            moved = max(np.linalg.norm(edge.samples[0] - a),
                        np.linalg.norm(edge.samples[-1] - b))
            if moved > 1e-15:
                edge.samples = align_curve_to_endpoints(edge.samples, a, b)
    return out, conflicts


# ---------------------------------------------------------------------------
# curve canonical frame and alignment
# ---------------------------------------------------------------------------

def canonicalize_curve(samples: np.ndarray) -> tuple[np.ndarray, Transform]:
    """Isotropically normalize a curve into [-1,1]^3 about its bbox center."""
    pts = np.asarray(samples, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise GeometryError("degenerate curve: zero extent")
    scale = 2.0 / extent
    center = (lo + hi) / 2.0
    fwd = Transform(scale=scale, offset=-scale * center)
    return fwd.apply(pts), fwd


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shortest-arc rotation matrix taking unit vector a onto unit vector b.

    For antiparallel inputs the roll ambiguity is resolved by a half-turn
    about a deterministic perpendicular axis, which is symmetric in (a, b).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = float(a @ b)
    if c <= -1.0 + 1e-12:
        pick = int(np.argmin(np.abs(a)))
        ref = np.zeros(3)
        ref[pick] = 1.0
        u = np.cross(a, ref)
        u /= np.linalg.norm(u)
        return 2.0 * np.outer(u, u) - np.eye(3)
    w = np.cross(a, b)
    k = np.array([[0.0, -w[2], w[1]],
                  [w[2], 0.0, -w[0]],
                  [-w[1], w[0], 0.0]])
    return np.eye(3) + k + k @ k / (1.0 + c)


def align_curve_to_endpoints(canonical: np.ndarray, target_start: np.ndarray,
                             target_end: np.ndarray,
                             config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Map a canonically framed curve onto global endpoints (decode-then-scale).

    Similarity transform: translation, shortest-arc rotation between chord
    vectors (zero roll about the chord), and uniform scale equal to the chord
    ratio.  Rejects target chords below the minimum representable edge length.
    """
    pts = np.asarray(canonical, dtype=float)
    t0 = np.asarray(target_start, dtype=float)
    t1 = np.asarray(target_end, dtype=float)
    chord_c = pts[-1] - pts[0]
    chord_t = t1 - t0
    len_c = float(np.linalg.norm(chord_c))
    len_t = float(np.linalg.norm(chord_t))
    if len_t < config.min_chord:
        raise GeometryError(
            f"edge below resolution: target chord {len_t:.6g} < {config.min_chord:.6g}")
    if len_c <= 1e-9:
        # closed-ish canonical curve (possible for arbitrary token tuples):
        # no chord to rotate about, so re-pin the endpoints with a linear ramp
        t = np.linspace(0.0, 1.0, len(pts))[:, None]
        ramp_in = pts[0] * (1.0 - t) + pts[-1] * t
        ramp_out = t0 * (1.0 - t) + t1 * t
        return pts - ramp_in + ramp_out
    rot = rotation_between(chord_c / len_c, chord_t / len_t)
    scale = len_t / len_c
    return t0 + scale * (pts - pts[0]) @ rot.T


align_decoded_curve = align_curve_to_endpoints


# ---------------------------------------------------------------------------
# residual curve codec
# ---------------------------------------------------------------------------

@dataclass
class Codebook:
    """One shared code matrix serving all residual levels.

    Code 0 is pinned to the zero vector so a perfectly reconstructed segment
    keeps its residual at later levels, which makes per-level reconstruction
    error non-increasing by construction.
    """

    codes: np.ndarray            # (size, segment_dim) float64
    levels: int
    fit_seed: int

    @property
    def size(self) -> int:
        return self.codes.shape[0]

    @property
    def segment_dim(self) -> int:
        return self.codes.shape[1]


def _curve_segments(samples: np.ndarray, config: Config) -> np.ndarray:
    pts = np.asarray(samples, dtype=float)
    n = config.grid_points
    if pts.shape != (n, 3):
        raise GeometryError(f"curve must be {n}x3, got {pts.shape}")
    seg_count = config.curve_token_count // config.rq_levels
    return pts.reshape(seg_count, n // seg_count * 3)


def _kmeans_pp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(len(data))]
    d2 = ((data - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i] = data[rng.integers(len(data))]
            continue
        centers[i] = data[np.searchsorted(np.cumsum(d2 / total), rng.random())]
        d2 = np.minimum(d2, ((data - centers[i]) ** 2).sum(axis=1))
    return centers


def _assign(data: np.ndarray, codes: np.ndarray) -> np.ndarray:
    # argmin over ||x - c||^2; np.argmin breaks ties toward the lowest index
    d2 = ((data ** 2).sum(axis=1)[:, None]
          - 2.0 * data @ codes.T
          + (codes ** 2).sum(axis=1)[None, :])
    return np.argmin(d2, axis=1)


def _lloyd(data: np.ndarray, centers: np.ndarray, iters: int,
           rng: np.random.Generator) -> np.ndarray:
    k = len(centers)
    centers = centers.copy()
    for _ in range(iters):
        labels = _assign(data, centers)
        moved = 0.0
        for j in range(k):
            members = data[labels == j]
            if len(members) == 0:
                # deterministic re-seed: the point farthest from its center
                d2 = ((data - centers[_assign(data, centers)]) ** 2).sum(axis=1)
                members = data[int(np.argmax(d2))][None, :]
            new = members.mean(axis=0)
            moved = max(moved, float(np.abs(new - centers[j]).max()))
            centers[j] = new
        if moved < 1e-12:
            break
    return centers


def fit_curve_codebook(corpus: list[np.ndarray], seed: int = 0,
                       config: Config = DEFAULT_CONFIG) -> Codebook:
    """Fit the shared residual codebook on canonical-frame curve segments.

    Training pools the raw segments with the greedy residuals of every
    subsequent level so the one book covers both segment-scale and
    residual-scale structure.  Deterministic for a fixed seed.
    """
    if not corpus:
        raise GeometryError("empty curve corpus")
    segs = np.concatenate([_curve_segments(c, config) for c in corpus], axis=0)
    rng = np.random.default_rng(seed)
    k = config.codebook_size - 1    # code 0 is reserved for the zero vector
    if len(segs) < config.codebook_size:
        warnings.warn(
            f"curve corpus has {len(segs)} segments < codebook size "
            f"{config.codebook_size}; padding with perturbed duplicates",
            stacklevel=2)
        reps = int(np.ceil(config.codebook_size / len(segs)))
        pad = np.tile(segs, (reps, 1))[: config.codebook_size]
        segs = pad + rng.normal(0.0, 1e-4, pad.shape)

    centers = _kmeans_pp_init(segs, k, rng)
    centers = _lloyd(segs, centers, 20, rng)
    codes = np.vstack([np.zeros((1, segs.shape[1])), centers])
    for _ in range(config.rq_levels - 1):
        pool = [segs]
        residual = segs
        for _level in range(config.rq_levels - 1):
            residual = residual - codes[_assign(residual, codes)]
            pool.append(residual)
        pooled = np.concatenate(pool, axis=0)
        centers = _lloyd(pooled, codes[1:], 15, rng)
        codes = np.vstack([np.zeros((1, segs.shape[1])), centers])
    order = np.lexsort(codes[1:].T[::-1])
    codes = np.vstack([codes[:1], codes[1:][order]])
    return Codebook(codes=codes, levels=config.rq_levels, fit_seed=seed)


def rq_encode_curve(samples: np.ndarray, book: Codebook,
                    config: Config = DEFAULT_CONFIG) -> list[int]:
    """Greedy per-segment residual encoding to 12 tokens (segment-major)."""
    segs = _curve_segments(samples, config)
    tokens: list[int] = []
    for seg in segs:
        residual = seg.copy()
        for _ in range(book.levels):
            idx = int(_assign(residual[None, :], book.codes)[0])
            tokens.append(idx)
            residual = residual - book.codes[idx]
    return tokens


def rq_decode_curve(tokens: list[int], book: Codebook,
                    config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Sum the per-level codes of each segment and clamp into [-1,1]^3."""
    if len(tokens) != config.curve_token_count:
        raise GeometryError(
            f"expected {config.curve_token_count} curve tokens, got {len(tokens)}")
    for t in tokens:
        if not 0 <= t < book.size:
            raise GeometryError(f"curve token {t} outside codebook of size {book.size}")
    seg_count = config.curve_token_count // book.levels
    segments = []
    for s in range(seg_count):
        chunk = tokens[s * book.levels: (s + 1) * book.levels]
        segments.append(book.codes[chunk].sum(axis=0))
    pts = np.concatenate(segments).reshape(config.grid_points, 3)
    return np.clip(pts, -1.0, 1.0)


def rq_reconstruction(samples: np.ndarray, book: Codebook, levels: int,
                      config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Canonical-frame reconstruction truncated to the first `levels` levels."""
    if not 1 <= levels <= book.levels:
        raise GeometryError(f"levels must be in [1, {book.levels}]")
    segs = _curve_segments(samples, config)
    recon = []
    for seg in segs:
        residual = seg.copy()
        acc = np.zeros_like(seg)
        for _ in range(levels):
            code = book.codes[int(_assign(residual[None, :], book.codes)[0])]
            acc = acc + code
            residual = residual - code
        recon.append(acc)
    return np.clip(np.concatenate(recon).reshape(config.grid_points, 3), -1.0, 1.0)


# ---------------------------------------------------------------------------
# codebook file format
# ---------------------------------------------------------------------------

def save_codebook(book: Codebook, path: str | Path) -> None:
    """Binary layout: magic, levels, size, dim (uint32 LE), seed (int64 LE), codes."""
    with open(path, "wb") as fh:
        fh.write(CODEBOOK_MAGIC)
        fh.write(struct.pack("<IIIq", book.levels, book.size, book.segment_dim,
                             book.fit_seed))
        fh.write(np.ascontiguousarray(book.codes, dtype="<f8").tobytes())


def load_codebook(path: str | Path) -> Codebook:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CODEBOOK_MAGIC:
            raise ModelError(f"{path}: not a codebook file")
        levels, size, dim, seed = struct.unpack("<IIIq", fh.read(20))
        raw = fh.read(size * dim * 8)
    codes = np.frombuffer(raw, dtype="<f8").reshape(size, dim).astype(float)
    return Codebook(codes=codes, levels=levels, fit_seed=seed)
