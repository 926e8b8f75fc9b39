"""Attention-based NMT with temporal and fine-grained (dimension-wise) attention."""

from .attention import AlignmentTensor, AnnotationSet, Variant
from .model import BOS, EOS, UNK, ModelConfig, NMTModel, load_checkpoint, save_checkpoint
from .numerics import Tensor

__version__ = "0.1.0"

__all__ = [
    "AlignmentTensor",
    "AnnotationSet",
    "Variant",
    "BOS",
    "EOS",
    "UNK",
    "ModelConfig",
    "NMTModel",
    "load_checkpoint",
    "save_checkpoint",
    "Tensor",
]
