"""Desk-scale learned components over the wireframe codec CLI."""

from .config import INDEX_SIZES, TOK_EOS, TOK_SOS, VOCAB_SIZE, ToyConfig

__all__ = ["INDEX_SIZES", "TOK_EOS", "TOK_SOS", "VOCAB_SIZE", "ToyConfig"]

__version__ = "0.1.0"
