"""Prior-conditioned face-grid refinement regressor.

A face is summarized by cross-attending a query over its boundary-edge
features (1D conv on normalized samples + MLP on the endpoint pair, the two
paths concatenated) through a gated residual connection. With the prior
enabled the query is an encoding of the analytic prior grid and the geometry
head predicts a residual on top of it (zero-initialized, so the untrained
model already reproduces the prior); without it a learned query regresses the
grid directly. Multi-task loss: grid MSE + 0.4 * smooth-L1 bbox +
0.2 * cross-entropy primitive type.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .armodel import set_determinism
from .data import FaceBundle

GRID_DIM = 32 * 32 * 3
LAMBDA_BOX = 0.4
LAMBDA_TYPE = 0.2


@dataclass
class RefinerBatch:
    prior: torch.Tensor        # (B, 3072)
    edges: torch.Tensor        # (B, E, 96)
    endpoints: torch.Tensor    # (B, E, 6)
    edge_mask: torch.Tensor    # (B, E) True on real edges
    target: torch.Tensor       # (B, 3072)
    bbox: torch.Tensor         # (B, 6)
    primitive: torch.Tensor    # (B,)

    def __len__(self) -> int:
        return len(self.prior)

    def select(self, idx) -> "RefinerBatch":
        return RefinerBatch(*[getattr(self, f.name)[idx]
                              for f in self.__dataclass_fields__.values()])


def batch_from_bundles(bundles: list[FaceBundle]) -> RefinerBatch:
    max_edges = max(len(b.edges) for b in bundles)
    n = len(bundles)
    edges = torch.zeros((n, max_edges, 96))
    endpoints = torch.zeros((n, max_edges, 6))
    mask = torch.zeros((n, max_edges), dtype=torch.bool)
    for i, bundle in enumerate(bundles):
        e = len(bundle.edges)
        edges[i, :e] = torch.from_numpy(bundle.edges.reshape(e, -1))
        endpoints[i, :e] = torch.from_numpy(bundle.endpoints.reshape(e, -1))
        mask[i, :e] = True
    return RefinerBatch(
        prior=torch.stack([torch.from_numpy(b.prior.reshape(-1)) for b in bundles]),
        edges=edges, endpoints=endpoints, edge_mask=mask,
        target=torch.stack([torch.from_numpy(b.truth.reshape(-1))
                            for b in bundles]),
        bbox=torch.stack([torch.from_numpy(b.bbox) for b in bundles]),
        primitive=torch.tensor([b.primitive for b in bundles], dtype=torch.long))


class GridRefiner(nn.Module):
    def __init__(self, width: int = 128, use_prior: bool = True):
        super().__init__()
        self.use_prior = use_prior
        self.sample_conv = nn.Sequential(
            nn.Conv1d(3, 32, kernel_size=5, padding=2), nn.GELU(),
            nn.Conv1d(32, 64, kernel_size=5, padding=2), nn.GELU(),
            nn.AdaptiveAvgPool1d(1))
        self.endpoint_mlp = nn.Sequential(nn.Linear(6, 64), nn.GELU(),
                                          nn.Linear(64, 64))
        self.edge_proj = nn.Linear(128, width)
        if use_prior:
            self.prior_enc = nn.Sequential(nn.Linear(GRID_DIM, 256), nn.GELU(),
                                           nn.Linear(256, width))
        else:
            self.query = nn.Parameter(torch.zeros(width))
        self.attn = nn.MultiheadAttention(width, num_heads=4, batch_first=True)
        self.gate = nn.Parameter(torch.tensor(1.0))
        self.ln = nn.LayerNorm(width)
        self.grid_head = nn.Sequential(nn.Linear(width, 256), nn.GELU(),
                                       nn.Linear(256, GRID_DIM))
        if use_prior:
            # zero-init the residual output: the fresh model emits the prior
            nn.init.zeros_(self.grid_head[-1].weight)
            nn.init.zeros_(self.grid_head[-1].bias)
        self.bbox_head = nn.Sequential(nn.Linear(width, 64), nn.GELU(),
                                       nn.Linear(64, 6))
        self.type_head = nn.Sequential(nn.Linear(width, 64), nn.GELU(),
                                       nn.Linear(64, 4))

    def _edge_features(self, batch: RefinerBatch) -> torch.Tensor:
        b, e, _ = batch.edges.shape
        samples = batch.edges.view(b * e, 32, 3).transpose(1, 2)
        local = self.sample_conv(samples).squeeze(-1).view(b, e, 64)
        spatial = self.endpoint_mlp(batch.endpoints)
        return self.edge_proj(torch.cat([local, spatial], dim=-1))

    def forward(self, batch: RefinerBatch) -> dict[str, torch.Tensor]:
        feats = self._edge_features(batch)
        if self.use_prior:
            query = self.prior_enc(batch.prior).unsqueeze(1)
        else:
            query = self.query.expand(len(batch), 1, -1)
        attended, _ = self.attn(query, feats, feats,
                                key_padding_mask=~batch.edge_mask)
        h = self.ln(query + self.gate * attended).squeeze(1)
        residual = self.grid_head(h)
        grid = batch.prior + residual if self.use_prior else residual
        return {"grid": grid, "bbox": self.bbox_head(h),
                "type_logits": self.type_head(h)}


def refiner_loss(outputs: dict, batch: RefinerBatch,
                 lambda_box: float = LAMBDA_BOX,
                 lambda_type: float = LAMBDA_TYPE) -> torch.Tensor:
    geom = F.mse_loss(outputs["grid"], batch.target)
    box = F.smooth_l1_loss(outputs["bbox"], batch.bbox)
    kind = F.cross_entropy(outputs["type_logits"], batch.primitive)
    return geom + lambda_box * box + lambda_type * kind


def train_refiner(batch: RefinerBatch, use_prior: bool, epochs: int = 150,
                  lr: float = 1e-3, seed: int = 0, val_fraction: float = 0.25,
                  lambda_box: float = LAMBDA_BOX, lambda_type: float = LAMBDA_TYPE,
                  ) -> tuple[GridRefiner, dict]:
    """Deterministic train/val split and budgeted training; returns metrics."""
    set_determinism(seed)
    n = len(batch)
    order = torch.randperm(n)
    n_val = max(1, int(n * val_fraction))
    val = batch.select(order[:n_val])
    train = batch.select(order[n_val:])
    model = GridRefiner(use_prior=use_prior)
    optimizer = torch.optim.AdamW(model.parameters(), lr=lr, weight_decay=0.0)
    losses = []
    model.train()
    for _ in range(epochs):
        optimizer.zero_grad()
        loss = refiner_loss(model(train), train, lambda_box, lambda_type)
        loss.backward()
        optimizer.step()
        losses.append(float(loss.detach()))
    model.eval()
    with torch.no_grad():
        val_out = model(val)
        val_mse = float(F.mse_loss(val_out["grid"], val.target))
        type_acc = float((val_out["type_logits"].argmax(dim=-1)
                          == val.primitive).float().mean())
    return model, {"losses": losses, "val_mse": val_mse, "type_acc": type_acc}
