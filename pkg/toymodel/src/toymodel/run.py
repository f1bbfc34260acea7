"""Experiment runner: trains both toy components and writes a metrics report."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from .armodel import train_ar_toy
from .config import ToyConfig
from .data import build_face_bundles, build_token_corpus
from .protocol import GrammarClient
from .refiner import batch_from_bundles, train_refiner
from .sampler import sample_parse_rate

AR_MIX = {"Box": 1, "LBracket": 1, "PrismFillet": 1, "CylinderSegment": 1}


def run_ar_experiment(workdir: Path, config: ToyConfig, count: int = 50,
                      corpus_seed: int = 21, samples: int = 100) -> dict:
    corpus = build_token_corpus(workdir, count=count, seed=corpus_seed, mix=AR_MIX,
                                context=config.context)
    model, metrics = train_ar_toy(corpus, config)
    _, ablated = train_ar_toy(corpus, config, use_structural=False)
    with GrammarClient() as client:
        masked = sample_parse_rate(model, client, samples, masked=True,
                                   p=config.nucleus_p, seed=11)
        unmasked = sample_parse_rate(model, client, samples, masked=False,
                                     p=config.nucleus_p, seed=11)
    return {
        "sequences": len(corpus),
        "accuracy": metrics["accuracy"],
        "accuracy_ablated": ablated["accuracy"],
        "masked_parse_rate": masked,
        "unmasked_parse_rate": unmasked,
    }


def run_refiner_experiment(workdir: Path, count: int = 30, corpus_seed: int = 33,
                           epochs: int = 150, seed: int = 0) -> dict:
    bundles = build_face_bundles(workdir, count=count, seed=corpus_seed)
    batch = batch_from_bundles(bundles)
    _, with_prior = train_refiner(batch, use_prior=True, epochs=epochs, seed=seed)
    _, without_prior = train_refiner(batch, use_prior=False, epochs=epochs,
                                     seed=seed)
    return {
        "faces": len(bundles),
        "with_prior_val_mse": with_prior["val_mse"],
        "without_prior_val_mse": without_prior["val_mse"],
        "with_prior_type_acc": with_prior["type_acc"],
        "without_prior_type_acc": without_prior["type_acc"],
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="toymodel")
    parser.add_argument("--workdir", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--epochs", type=int, default=110)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    config = ToyConfig(epochs=args.epochs, seed=args.seed)
    report = {
        "ar": run_ar_experiment(workdir, config),
        "refiner": run_refiner_experiment(workdir),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    print(json.dumps(report))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
