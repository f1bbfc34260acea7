"""Build and load training artifacts through the wireframe codec CLI.

All interaction with the codec goes through its command-line surface and file
formats: `synth` for corpora, `fit-codebook`, `encode --indices` for token and
structural-index files, and `prior --canonical --with-truth` for the refiner's
grid bundles.
"""

from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CODEC_CLI = [sys.executable, "-m", "brepwire.cli"]


def run_codec(args: list[str]) -> None:
    result = subprocess.run(CODEC_CLI + list(args), capture_output=True, text=True)
    if result.returncode != 0:
        raise RuntimeError(
            f"codec CLI failed ({result.returncode}): {' '.join(args)}\n"
            f"{result.stderr.strip()}")


@dataclass
class TokenCorpus:
    sequences: list[list[int]]
    indices: list[list[list[int]]]          # per sequence, per token, 5-tuple

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def max_len(self) -> int:
        return max(len(s) for s in self.sequences)


def build_token_corpus(workdir: Path, count: int, seed: int,
                       mix: dict | None = None, context: int = 512,
                       ) -> TokenCorpus:
    """synth -> fit-codebook -> encode; keeps sequences within the context."""
    workdir = Path(workdir)
    corpus_dir = workdir / "corpus"
    if not (corpus_dir / "manifest.json").exists():
        args = ["synth", "--count", str(count), "--seed", str(seed),
                "--out", str(corpus_dir)]
        if mix:
            args += ["--mix", json.dumps(mix)]
        run_codec(args)
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    needs_book = any(m["family"] == "FreeformPlate" for m in manifest["models"])
    book = workdir / "book.rqcb"
    if needs_book and not book.exists():
        run_codec(["fit-codebook", "--corpus", str(corpus_dir),
                   "--out", str(book), "--seed", "0"])
    sequences, indices = [], []
    for model_path in sorted(corpus_dir.glob("model_*.json")):
        tok_path = workdir / (model_path.stem + ".tokens.json")
        idx_path = workdir / (model_path.stem + ".indices.json")
        if not tok_path.exists():
            args = ["encode", "--model", str(model_path),
                    "--out", str(tok_path), "--indices", str(idx_path)]
            if needs_book:
                args += ["--book", str(book)]
            run_codec(args)
        tokens = json.loads(tok_path.read_text())["tokens"]
        if len(tokens) > context:
            continue
        sequences.append(tokens)
        indices.append(json.loads(idx_path.read_text())["indices"])
    if not sequences:
        raise RuntimeError("corpus produced no sequences within the context")
    return TokenCorpus(sequences=sequences, indices=indices)


@dataclass
class FaceBundle:
    prior: np.ndarray          # (32, 32, 3), canonical grid frame
    truth: np.ndarray          # (32, 32, 3), same frame, grid-correspondent
    edges: np.ndarray          # (E, 32, 3) samples in the grid frame
    endpoints: np.ndarray      # (E, 2, 3)
    primitive: int             # index into PRIMITIVES
    bbox: np.ndarray           # (6,) model-frame truth bounds


PRIMITIVES = ("plane", "cylinder", "sphere", "complex")


def build_face_bundles(workdir: Path, count: int, seed: int,
                       mix: dict | None = None) -> list[FaceBundle]:
    """synth -> prior --canonical --with-truth, flattened across models."""
    workdir = Path(workdir)
    corpus_dir = workdir / "prior_corpus"
    if not (corpus_dir / "manifest.json").exists():
        args = ["synth", "--count", str(count), "--seed", str(seed),
                "--out", str(corpus_dir)]
        if mix:
            args += ["--mix", json.dumps(mix)]
        run_codec(args)
    bundles: list[FaceBundle] = []
    for model_path in sorted(corpus_dir.glob("model_*.json")):
        out = workdir / (model_path.stem + ".prior.json")
        if not out.exists():
            run_codec(["prior", "--model", str(model_path), "--out", str(out),
                       "--canonical", "--with-truth"])
        doc = json.loads(out.read_text())
        n = doc["n"]
        for face in doc["faces"]:
            prior = np.asarray(face["prior"]["points"], dtype=np.float32
                               ).reshape(n, n, 3)
            truth = np.asarray(face["truth"]["points"], dtype=np.float32
                               ).reshape(n, n, 3)
            edges = np.stack([np.asarray(e["samples"], dtype=np.float32)
                              for e in face["edges"]])
            endpoints = np.stack([np.asarray(e["endpoints"], dtype=np.float32)
                                  for e in face["edges"]])
            bundles.append(FaceBundle(
                prior=prior, truth=truth, edges=edges, endpoints=endpoints,
                primitive=PRIMITIVES.index(face["truth"]["primitive"]),
                bbox=np.asarray(face["truth"]["bbox"], dtype=np.float32)))
    return bundles
