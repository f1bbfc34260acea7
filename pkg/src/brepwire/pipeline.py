"""End-to-end composition helpers: model -> tokens -> model -> merged graph."""

from __future__ import annotations

import numpy as np

from .config import Config, DEFAULT_CONFIG
from .grammar import parse_tokens, structural_indices
from .model import COMPLEX, WireframeModel, normalize_model
from .quantize import (
    Codebook,
    canonicalize_curve,
    quantize_points,
    quantize_vertices,
    rq_encode_curve,
)
from .serialize import canonical_order, serialize_model
from .topology import BrepGraph, graphs_isomorphic, merge_wireframe, validity_check


def prepare_model(model: WireframeModel, config: Config = DEFAULT_CONFIG,
                  ) -> tuple[WireframeModel, list[dict]]:
    """Normalize, quantize (merging cell duplicates) and canonically order."""
    normalized, _ = normalize_model(model)
    quantized, conflicts = quantize_vertices(normalized, config)
    return canonical_order(quantized, config), conflicts


def collect_canonical_curves(model: WireframeModel) -> list[np.ndarray]:
    """Canonical-frame sample arrays of every complex edge (codebook training)."""
    curves = []
    for _, _, _, _, edge in model.iter_loop_entries():
        if edge.kind == COMPLEX:
            canonical, _ = canonicalize_curve(edge.samples)
            curves.append(canonical)
    return curves


def curve_direction_key(qpos: np.ndarray) -> tuple:
    return tuple(int(c) for c in qpos)


def attach_curve_tokens(model: WireframeModel, book: Codebook | None,
                        config: Config = DEFAULT_CONFIG) -> WireframeModel:
    """Encode every complex edge's canonical curve into its 12 tokens.

    The encoded direction is canonical (from the lexicographically smaller
    quantized endpoint), so the duplicated per-face copies of a shared edge
    emit identical tokens and decode to identical geometry.
    """
    for _, _, _, _, edge in model.iter_loop_entries():
        if edge.kind == COMPLEX:
            if book is None:
                raise ValueError("model has complex edges but no codebook was given")
            qa = model.vertex(edge.endpoints[0]).qpos
            qb = model.vertex(edge.endpoints[1]).qpos
            samples = edge.samples
            if qa is not None and qb is not None \
                    and curve_direction_key(qa) > curve_direction_key(qb):
                samples = samples[::-1]
            canonical, _ = canonicalize_curve(samples)
            edge.curve_tokens = rq_encode_curve(canonical, book, config)
    return model


def encode_model(model: WireframeModel, book: Codebook | None = None,
                 config: Config = DEFAULT_CONFIG,
                 ) -> tuple[list[int], list[tuple], WireframeModel, list[dict]]:
    """Full encoding pipeline; returns (tokens, indices, canonical model, conflicts)."""
    prepared, conflicts = prepare_model(model, config)
    attach_curve_tokens(prepared, book, config)
    tokens = serialize_model(prepared, config)
    indices = structural_indices(tokens, config)
    return tokens, indices, prepared, conflicts


def roundtrip_model(model: WireframeModel, book: Codebook | None = None,
                    config: Config = DEFAULT_CONFIG) -> dict:
    """Serialize -> parse -> merge and compare against the source-side merge."""
    prepared, conflicts = prepare_model(model, config)
    if conflicts:
        return {"skipped": True, "conflicts": conflicts, "passed": False}
    attach_curve_tokens(prepared, book, config)
    tokens = serialize_model(prepared, config)
    parsed = parse_tokens(tokens, book, config)
    source_graph = merge_wireframe(prepared, config=config)
    result_graph = merge_wireframe(parsed, config=config)
    iso = graphs_isomorphic(source_graph, result_graph, geom_tol=config.eps_edge,
                            config=config)
    validity = validity_check(result_graph)

    normalized, _ = normalize_model(model)
    positions = np.stack([v.position for v in normalized.vertices])
    snapped = 2.0 * quantize_points(positions, config).astype(float) / config.qmax - 1.0
    max_err = float(np.abs(positions - snapped).max())
    passed = bool(iso and validity["valid"] and max_err <= 1.0 / config.qmax)
    return {
        "skipped": False,
        "conflicts": [],
        "tokens": len(tokens),
        "isomorphic": bool(iso),
        "valid": bool(validity["valid"]),
        "cc": validity["cc"],
        "max_vertex_err": max_err,
        "passed": passed,
    }


def merged_graph_of(model: WireframeModel, book: Codebook | None = None,
                    config: Config = DEFAULT_CONFIG) -> BrepGraph:
    """Source-side merged graph of a raw model (normalize + quantize + merge)."""
    prepared, _ = prepare_model(model, config)
    return merge_wireframe(prepared, config=config)
