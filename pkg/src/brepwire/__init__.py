"""Wireframe tokenizer/codec for B-rep CAD models."""

from .config import Config, DEFAULT_CONFIG
from .model import (
    ARC,
    COMPLEX,
    LINE,
    Edge,
    Face,
    Loop,
    ModelError,
    Transform,
    Vertex,
    WireframeModel,
    load_model,
    normalize_model,
    save_model,
)

__all__ = [
    "ARC", "COMPLEX", "Config", "DEFAULT_CONFIG", "Edge", "Face", "LINE",
    "Loop", "ModelError", "Transform", "Vertex", "WireframeModel",
    "load_model", "normalize_model", "save_model",
]

__version__ = "0.1.0"
