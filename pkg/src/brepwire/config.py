"""Pipeline-wide constants and tunables."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path


@dataclass(frozen=True)
class Config:
    """Shared knobs for quantization, serialization and evaluation.

    Capacity limits (``max_faces``, ``max_loops``, ``max_loop_entities``) are
    enforced identically by model validation and by the grammar masks.
    """

    grid_points: int = 32          # samples per edge and per face-grid axis
    bits: int = 10                 # coordinate quantization depth
    codebook_size: int = 256       # shared residual-quantizer book size
    rq_levels: int = 3             # residual quantization depth
    curve_token_count: int = 12    # tokens per complex curve (4 segments x 3 levels)
    max_faces: int = 70
    max_loops: int = 15
    max_loop_entities: int = 30    # interleaved vertex/edge ordinal cap per loop
    max_seq_len: int = 8000
    eps_edge: float = 4.0 / 1023.0     # edge-merge tolerance: two grid cells
    eps_endpoint: float = 1e-6         # curve-sample/vertex coincidence tolerance
    tau_fscore: float = 0.02
    nucleus_p: float = 0.95

    def __post_init__(self) -> None:
        numeric = {f.name: getattr(self, f.name) for f in fields(self)}
        for name, value in numeric.items():
            if value <= 0:
                raise ValueError(f"config field {name} must be positive, got {value}")
        if self.bits > 16:
            raise ValueError(f"config bits must be <= 16, got {self.bits}")

    @property
    def qmax(self) -> int:
        """Largest quantized coordinate index (1023 for 10 bits)."""
        return (1 << self.bits) - 1

    @property
    def min_chord(self) -> float:
        """Smallest representable edge length on the quantization grid."""
        return 2.0 / (1 << self.bits)

    @classmethod
    def from_json(cls, path: str | Path) -> "Config":
        """Build a config from defaults overridden by a JSON object."""
        with open(path, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**overrides)


DEFAULT_CONFIG = Config()
