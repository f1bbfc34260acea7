"""Nucleus sampling with and without the grammar mask.

Masked sampling intersects the nucleus with the server's valid-token set at
every step, so probabilities of invalid tokens are exactly zero and every
finished sequence parses. Unmasked sampling is the control: identical model,
identical nucleus rule, no mask; the server is only consulted to detect the
first grammar break.
"""

from __future__ import annotations

import numpy as np
import torch

from .armodel import TokenPredictor
from .config import TOK_EOS, TOK_SOS
from .protocol import GrammarClient


def _nucleus_filter(probs: torch.Tensor, p: float) -> torch.Tensor:
    sorted_probs, order = torch.sort(probs, descending=True)
    cumulative = torch.cumsum(sorted_probs, dim=0)
    keep_sorted = cumulative - sorted_probs < p       # always keeps the top token
    keep = torch.zeros_like(probs, dtype=torch.bool)
    keep[order[keep_sorted]] = True
    filtered = torch.where(keep, probs, torch.zeros_like(probs))
    return filtered / filtered.sum()


def _sample_one(model: TokenPredictor, client: GrammarClient, rng,
                masked: bool, p: float, max_len: int,
                use_structural: bool = True) -> tuple[list[int], bool]:
    """Returns (sequence, finished_validly)."""
    sequence = [TOK_SOS]
    cache = model.new_cache()
    response = client.request(sequence, indices=True)
    if "error" in response:
        return sequence, False
    logits = model.step(TOK_SOS, response["indices"][0], cache, use_structural)
    while len(sequence) < max_len:
        probs = torch.softmax(logits, dim=-1)
        if masked:
            valid = response["valid_ids"]
            if not valid:
                return sequence, False
            gate = torch.zeros_like(probs)
            gate[valid] = 1.0
            gated = probs * gate
            if float(gated.sum()) <= 0.0:
                gated = gate
            probs = _nucleus_filter(gated / gated.sum(), p)
        else:
            probs = _nucleus_filter(probs, p)
        weights = probs.numpy().astype(np.float64)
        token = int(rng.choice(len(weights), p=weights / weights.sum()))
        sequence.append(token)
        response = client.request(sequence, indices=True)
        if "error" in response:
            return sequence, False
        if token == TOK_EOS:
            return sequence, True
        logits = model.step(token, response["indices"][-1], cache, use_structural)
    return sequence, False


def constrained_sample(model: TokenPredictor, client: GrammarClient, count: int,
                       p: float = 0.95, max_len: int = 512, seed: int = 0,
                       use_structural: bool = True) -> list[list[int]]:
    """Grammar-masked nucleus rollouts; every returned sequence is parseable."""
    rng = np.random.default_rng(seed)
    model.eval()
    out = []
    for _ in range(count):
        sequence, ok = _sample_one(model, client, rng, masked=True, p=p,
                                   max_len=max_len, use_structural=use_structural)
        if ok:
            out.append(sequence)
    return out


def sample_parse_rate(model: TokenPredictor, client: GrammarClient, count: int,
                      masked: bool, p: float = 0.95, max_len: int = 512,
                      seed: int = 0, use_structural: bool = True) -> float:
    """Fraction of rollouts that reach EOS without a grammar violation."""
    rng = np.random.default_rng(seed)
    model.eval()
    finished = 0
    for _ in range(count):
        _, ok = _sample_one(model, client, rng, masked=masked, p=p,
                            max_len=max_len, use_structural=use_structural)
        finished += ok
    return finished / count
