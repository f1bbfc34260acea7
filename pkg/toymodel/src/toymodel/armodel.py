"""Decoder-only next-token model with hierarchical structural embeddings.

Each token embeds as its vocabulary embedding plus the sum of five learnable
structural embeddings indexed by the token's (face, loop, type, geom, intra)
multi-index; there is no absolute positional table. Zeroing the structural sum
(`use_structural=False`) is the ablation control.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import INDEX_SIZES, VOCAB_SIZE, ToyConfig

PAD_TOKEN = 0          # padding positions are excluded via the loss mask


def set_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(4)


class Block(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.ln1 = nn.LayerNorm(width)
        self.qkv = nn.Linear(width, 3 * width)
        self.proj = nn.Linear(width, width)
        self.ln2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(nn.Linear(width, 4 * width), nn.GELU(),
                                 nn.Linear(4 * width, width))

    def _attend(self, x: torch.Tensor, cache: dict | None) -> torch.Tensor:
        b, t, d = x.shape
        h = self.heads
        q, k, v = self.qkv(self.ln1(x)).chunk(3, dim=-1)
        q = q.view(b, t, h, d // h).transpose(1, 2)
        k = k.view(b, t, h, d // h).transpose(1, 2)
        v = v.view(b, t, h, d // h).transpose(1, 2)
        causal = cache is None
        if cache is not None:
            if "k" in cache:
                k = torch.cat([cache["k"], k], dim=2)
                v = torch.cat([cache["v"], v], dim=2)
            cache["k"], cache["v"] = k, v
        out = F.scaled_dot_product_attention(q, k, v, is_causal=causal)
        return self.proj(out.transpose(1, 2).reshape(b, t, d))

    def forward(self, x: torch.Tensor, cache: dict | None = None) -> torch.Tensor:
        x = x + self._attend(x, cache)
        return x + self.mlp(self.ln2(x))


class TokenPredictor(nn.Module):
    def __init__(self, config: ToyConfig):
        super().__init__()
        self.config = config
        width = config.width
        self.vocab_emb = nn.Embedding(VOCAB_SIZE, width)
        self.structural = nn.ModuleList(
            [nn.Embedding(size, width) for size in INDEX_SIZES])
        self.blocks = nn.ModuleList(
            [Block(width, config.heads) for _ in range(config.layers)])
        self.ln_out = nn.LayerNorm(width)
        self.head = nn.Linear(width, VOCAB_SIZE)

    def embed(self, tokens: torch.Tensor, indices: torch.Tensor,
              use_structural: bool = True) -> torch.Tensor:
        x = self.vocab_emb(tokens)
        if use_structural:
            for level, table in enumerate(self.structural):
                x = x + table(indices[..., level])
        return x

    def forward(self, tokens: torch.Tensor, indices: torch.Tensor,
                use_structural: bool = True) -> torch.Tensor:
        x = self.embed(tokens, indices, use_structural)
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_out(x))

    def new_cache(self) -> list[dict]:
        return [{} for _ in self.blocks]

    @torch.no_grad()
    def step(self, token: int, index: list[int], cache: list[dict],
             use_structural: bool = True) -> torch.Tensor:
        """Consume one token with its structural index; return next-token logits."""
        tokens = torch.tensor([[token]], dtype=torch.long)
        indices = torch.tensor([[index]], dtype=torch.long)
        x = self.embed(tokens, indices, use_structural)
        for block, block_cache in zip(self.blocks, cache):
            x = block(x, cache=block_cache)
        return self.head(self.ln_out(x))[0, -1]


@dataclass
class Batch:
    tokens: torch.Tensor       # (B, T) padded
    indices: torch.Tensor      # (B, T, 5)
    mask: torch.Tensor         # (B, T) True on real positions


def make_batch(sequences: list[list[int]], indices: list[list[list[int]]],
               ) -> Batch:
    max_len = max(len(s) for s in sequences)
    b = len(sequences)
    tokens = torch.full((b, max_len), PAD_TOKEN, dtype=torch.long)
    idx = torch.zeros((b, max_len, 5), dtype=torch.long)
    mask = torch.zeros((b, max_len), dtype=torch.bool)
    for i, (seq, ix) in enumerate(zip(sequences, indices)):
        tokens[i, :len(seq)] = torch.tensor(seq, dtype=torch.long)
        idx[i, :len(seq)] = torch.tensor(ix, dtype=torch.long)
        mask[i, :len(seq)] = True
    return Batch(tokens=tokens, indices=idx, mask=mask)


def next_token_accuracy(model: TokenPredictor, batch: Batch,
                        use_structural: bool = True) -> float:
    model.eval()
    with torch.no_grad():
        logits = model(batch.tokens, batch.indices, use_structural)
    target_mask = batch.mask[:, 1:]
    predictions = logits[:, :-1].argmax(dim=-1)
    hits = (predictions == batch.tokens[:, 1:]) & target_mask
    return float(hits.sum()) / float(target_mask.sum())


def train_ar_toy(corpus, config: ToyConfig, use_structural: bool = True,
                 ) -> tuple[TokenPredictor, dict]:
    """Teacher-forced cross-entropy over the full vocabulary (no masks).

    Returns the model and a metrics dict with the loss curve and held-in
    next-token accuracy. Deterministic for a fixed seed on a fixed device.
    """
    for seq in corpus.sequences:
        if len(seq) > config.context:
            raise ValueError(f"sequence of {len(seq)} tokens exceeds context "
                             f"{config.context}")
    set_determinism(config.seed)
    model = TokenPredictor(config)
    batch = make_batch(corpus.sequences, corpus.indices)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr,
                                  weight_decay=0.0)
    losses = []
    model.train()
    for _ in range(config.epochs):
        optimizer.zero_grad()
        logits = model(batch.tokens, batch.indices, use_structural)
        shifted = logits[:, :-1].reshape(-1, VOCAB_SIZE)
        targets = batch.tokens[:, 1:].reshape(-1)
        keep = batch.mask[:, 1:].reshape(-1)
        loss = F.cross_entropy(shifted[keep], targets[keep])
        loss.backward()
        optimizer.step()
        losses.append(float(loss.detach()))
    accuracy = next_token_accuracy(model, batch, use_structural)
    return model, {"losses": losses, "accuracy": accuracy}
