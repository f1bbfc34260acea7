"""Command-line pipelines and the line-delimited grammar-server protocol."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import Config, DEFAULT_CONFIG
from .grammar import (
    GrammarError,
    GrammarState,
    advance,
    parse_tokens,
    structural_indices,
    valid_next_mask,
)
from .metrics import chamfer, coverage_mmd, emd, fscore, jsd_voxel
from .model import ModelError, load_model, normalize_model, save_model
from .pipeline import (
    attach_curve_tokens,
    collect_canonical_curves,
    encode_model,
    prepare_model,
    roundtrip_model,
)
from .quantize import (
    GeometryError,
    fit_curve_codebook,
    load_codebook,
    quantize_vertices,
    sample_edge_points_safe,
    save_codebook,
)
from .serialize import canonical_order, load_tokens, save_tokens, serialize_model
from .surface import _d4_apply, canonicalize_d4, generate_prior_grid
from .synth import (
    DEFAULT_MIX,
    face_truth_points,
    generate_corpus,
    model_point_cloud,
    perturb_model,
    project_to_face_truth,
)
from .topology import merge_wireframe, validity_check

STRESS_SIGMAS = (0.0, 0.002, 0.005, 0.01)


def _summary(payload: dict) -> None:
    print(json.dumps(payload))


def _config_from_args(args) -> Config:
    if getattr(args, "config", None):
        return Config.from_json(args.config)
    return DEFAULT_CONFIG


def _corpus_files(corpus_dir: str | Path) -> list[Path]:
    files = sorted(Path(corpus_dir).glob("model_*.json"))
    if not files:
        raise FileNotFoundError(f"no model_*.json files under {corpus_dir}")
    return files


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    mix = json.loads(args.mix) if args.mix else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    models = generate_corpus(args.count, mix=mix, seed=args.seed)
    manifest = {"count": args.count, "seed": args.seed,
                "mix": mix or DEFAULT_MIX, "models": []}
    for i, model in enumerate(models):
        name = f"model_{i:05d}.json"
        save_model(model, out / name)
        manifest["models"].append({"file": name,
                                   "family": model.metadata["family"],
                                   "params": model.metadata["params"]})
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    _summary({"command": "synth", "count": len(models), "out": str(out)})
    return 0


def cmd_fit_codebook(args) -> int:
    config = _config_from_args(args)
    curves = []
    for path in _corpus_files(args.corpus):
        prepared, conflicts = prepare_model(load_model(path, config), config)
        if conflicts:
            continue
        curves.extend(collect_canonical_curves(prepared))
    if not curves:
        raise GeometryError("corpus contains no complex curves to fit")
    book = fit_curve_codebook(curves, seed=args.seed, config=config)
    save_codebook(book, args.out)
    _summary({"command": "fit-codebook", "curves": len(curves),
              "codes": book.size, "out": str(args.out)})
    return 0


def cmd_encode(args) -> int:
    config = _config_from_args(args)
    book = load_codebook(args.book) if args.book else None
    model = load_model(args.model, config)
    tokens, indices, _, conflicts = encode_model(model, book, config)
    if conflicts:
        raise ModelError(f"model has {len(conflicts)} quantization conflicts; "
                         "flagged for exclusion")
    save_tokens(tokens, args.out)
    if args.indices:
        with open(args.indices, "w", encoding="utf-8") as fh:
            json.dump({"indices": [list(ix) for ix in indices]}, fh)
            fh.write("\n")
    _summary({"command": "encode", "model": str(args.model), "tokens": len(tokens),
              "out": str(args.out)})
    return 0


def cmd_decode(args) -> int:
    config = _config_from_args(args)
    book = load_codebook(args.book) if args.book else None
    tokens = load_tokens(args.tokens)
    model = parse_tokens(tokens, book, config)
    save_model(model, args.out)
    _summary({"command": "decode", "tokens": len(tokens),
              "faces": len(model.faces), "out": str(args.out)})
    return 0


def cmd_merge(args) -> int:
    config = _config_from_args(args)
    model = load_model(args.model, config)
    eps = args.eps_edge if args.eps_edge is not None else config.eps_edge
    graph = merge_wireframe(model, eps_edge=eps, config=config)
    report = validity_check(graph)
    report["vertices"] = graph.n_vertices
    report["edges"] = graph.n_edges
    report["faces"] = graph.n_faces
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    _summary({"command": "merge", "valid": report["valid"], "cc": report["cc"],
              "defects": len(report["defects"]), "report": str(args.report)})
    return 0


def cmd_prior(args) -> int:
    config = _config_from_args(args)
    model = load_model(args.model, config)
    normalized, _ = normalize_model(model)
    faces_out = []
    for fi, face in enumerate(normalized.faces):
        grid = generate_prior_grid(face, normalized, config)
        if args.with_truth:
            truth_model_frame = project_to_face_truth(
                face, normalized, grid.to_model_frame().reshape(-1, 3), config)
            truth_pts = grid.transform.apply(truth_model_frame).reshape(grid.points.shape)
        if args.canonical:
            canon = canonicalize_d4(grid, config)
            if args.with_truth:
                truth_pts = _d4_apply(truth_pts, canon.d4_op)
            grid = canon
        entry = {"face": fi, "prior": grid.to_json()}
        if args.with_truth:
            cloud = face_truth_points(face, normalized, density=args.density,
                                      config=config)
            bbox = np.concatenate([cloud.min(axis=0), cloud.max(axis=0)])
            edges = []
            for loop in face.loops:
                for _, edge in loop.entries:
                    samp = sample_edge_points_safe(edge, normalized.vertices,
                                                   config.grid_points, config)
                    edges.append({
                        "samples": grid.transform.apply(samp).tolist(),
                        "endpoints": [samp[0].tolist(), samp[-1].tolist()],
                    })
            entry["truth"] = {
                "points": [[float(x) for x in p] for p in truth_pts.reshape(-1, 3)],
                "primitive": face.primitive or "complex",
                "bbox": [float(x) for x in bbox],
            }
            entry["edges"] = edges
        faces_out.append(entry)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump({"model": str(args.model), "n": config.grid_points,
                   "faces": faces_out}, fh)
        fh.write("\n")
    _summary({"command": "prior", "faces": len(faces_out), "out": str(args.out)})
    return 0


def cmd_metrics(args) -> int:
    config = _config_from_args(args)

    def clouds(directory) -> list[np.ndarray]:
        out = []
        for path in _corpus_files(directory):
            normalized, _ = normalize_model(load_model(path, config))
            out.append(model_point_cloud(normalized))
        return out

    generated = clouds(args.generated)
    reference = clouds(args.reference)
    cov_cd, mmd_cd = coverage_mmd(generated, reference, "cd")
    cov_emd, mmd_emd = coverage_mmd(generated, reference, "emd")
    report = {
        "cov_cd": cov_cd, "cov_emd": cov_emd,
        "mmd_cd": mmd_cd, "mmd_emd": mmd_emd,
        "jsd_cd_proxy": jsd_voxel(generated, reference),
        "rows": [],
    }
    if len(generated) == len(reference):
        for i, (g, r) in enumerate(zip(generated, reference)):
            report["rows"].append({
                "index": i,
                "cd": chamfer(g, r),
                "emd": emd(g, r),
                "fscore": fscore(g, r, config.tau_fscore),
            })
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    _summary({"command": "metrics", "cov_cd": cov_cd, "mmd_cd": mmd_cd,
              "jsd": report["jsd_cd_proxy"], "report": str(args.report)})
    return 0


def cmd_roundtrip(args) -> int:
    config = _config_from_args(args)
    book = load_codebook(args.book) if args.book else None
    rows = []
    for path in _corpus_files(args.corpus):
        model = load_model(path, config)
        row = roundtrip_model(model, book, config)
        row["file"] = path.name
        rows.append(row)
    eligible = [r for r in rows if not r["skipped"]]
    passed = sum(1 for r in eligible if r["passed"])
    report = {"total": len(rows), "skipped": len(rows) - len(eligible),
              "eligible": len(eligible), "passed": passed,
              "pass_rate": passed / len(eligible) if eligible else 0.0,
              "rows": rows}
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    _summary({"command": "roundtrip", "eligible": len(eligible), "passed": passed,
              "pass_rate": report["pass_rate"], "report": str(args.report)})
    return 0


def cmd_stress(args) -> int:
    config = _config_from_args(args)
    book = load_codebook(args.book) if args.book else None
    sigmas = [float(s) for s in args.sigmas.split(",")] if args.sigmas \
        else list(STRESS_SIGMAS)
    files = _corpus_files(args.corpus)
    table = []
    for sigma in sigmas:
        valid = 0
        conflicted = 0
        cds = []
        for mi, path in enumerate(files):
            model = load_model(path, config)
            normalized, _ = normalize_model(model)
            noisy = perturb_model(normalized, sigma, seed=args.seed + mi)
            try:
                quantized, conflicts = quantize_vertices(noisy, config)
                canonical = canonical_order(quantized, config)
                attach_curve_tokens(canonical, book, config)
                tokens = serialize_model(canonical, config)
                parsed = parse_tokens(tokens, book, config)
                graph = merge_wireframe(parsed, config=config)
                report = validity_check(graph)
                conflicted += bool(conflicts)
                if report["valid"] and not conflicts:
                    valid += 1
                cds.append(chamfer(model_point_cloud(normalized),
                                   model_point_cloud(parsed)))
            except (ModelError, GeometryError, GrammarError, ValueError):
                conflicted += 1
        table.append({"sigma": sigma, "valid_rate": valid / len(files),
                      "mean_cd": float(np.mean(cds)) if cds else None,
                      "conflict_rate": conflicted / len(files)})
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump({"sigmas": sigmas, "rows": table}, fh, indent=1)
    for row in table:
        print(f"sigma={row['sigma']:<7g} valid_rate={row['valid_rate']:.3f} "
              f"mean_cd={row['mean_cd'] if row['mean_cd'] is not None else 'n/a'}")
    _summary({"command": "stress", "report": str(args.report)})
    return 0


# ---------------------------------------------------------------------------
# grammar server
# ---------------------------------------------------------------------------

def _serve_one(line: str, config: Config) -> dict:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"error": {"message": f"malformed JSON: {exc}"}}
    if not isinstance(request, dict) or "prefix" not in request:
        return {"error": {"message": "request must be {\"prefix\": [token ids]}"}}
    prefix = request["prefix"]
    want_indices = bool(request.get("indices", False))
    state = GrammarState()
    indices = []
    try:
        for token in prefix:
            nxt = advance(state, int(token), config)
            state = nxt
        if want_indices:
            indices = [list(ix) for ix in structural_indices(
                [int(t) for t in prefix], config)]
    except GrammarError as exc:
        return {"error": {"pos": exc.position, "expected": exc.expected}}
    if state.done:
        response: dict = {"valid_ids": []}
    else:
        mask = valid_next_mask(state, config)
        response = {"valid_ids": np.flatnonzero(mask).tolist()}
    if want_indices:
        response["indices"] = indices
    return response


def cmd_grammar_serve(args) -> int:
    config = _config_from_args(args)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        response = _serve_one(line, config)
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brepwire",
                                     description="wireframe codec pipelines")
    parser.add_argument("--config", default=None, help="JSON config overrides")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--mix", default=None, help="JSON family weights")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit-codebook", help="fit the shared curve codebook")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_codebook)

    p = sub.add_parser("encode", help="model file -> token sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--book", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--indices", default=None, help="also write structural indices")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="token sequence -> pre-merge model file")
    p.add_argument("--tokens", required=True)
    p.add_argument("--book", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("merge", help="pre-merge model -> validity report")
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--eps-edge", type=float, default=None)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("prior", help="per-face analytic prior grids")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--canonical", action="store_true")
    p.add_argument("--with-truth", action="store_true")
    p.add_argument("--density", type=int, default=48)
    p.set_defaults(func=cmd_prior)

    p = sub.add_parser("metrics", help="distribution metrics between corpora")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("roundtrip", help="serialize/parse/merge fidelity sweep")
    p.add_argument("--corpus", required=True)
    p.add_argument("--book", default=None)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("stress", help="noise-robustness degradation table")
    p.add_argument("--corpus", required=True)
    p.add_argument("--book", default=None)
    p.add_argument("--report", required=True)
    p.add_argument("--sigmas", default=None, help="comma-separated noise levels")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stress)

    p = sub.add_parser("grammar-serve", help="line-delimited valid-token service")
    p.set_defaults(func=cmd_grammar_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelError, GeometryError, GrammarError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
