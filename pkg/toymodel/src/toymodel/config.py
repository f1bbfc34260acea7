"""Training configuration and the shared token-id constants."""

from __future__ import annotations

from dataclasses import dataclass

# public token-id mapping of the wireframe codec
VOCAB_SIZE = 1287
TOK_SOS = 1280
TOK_EOS = 1281

# structural multi-index table sizes: (face, loop, type, geom, intra)
INDEX_SIZES = (71, 16, 3, 31, 14)


@dataclass
class ToyConfig:
    layers: int = 2
    width: int = 128
    heads: int = 4
    context: int = 512
    epochs: int = 200
    lr: float = 3e-3
    seed: int = 0
    nucleus_p: float = 0.95

    def __post_init__(self) -> None:
        if self.context > 512:
            raise ValueError("toy context is capped at 512 tokens")
        if self.width % self.heads != 0:
            raise ValueError("width must divide evenly into heads")
