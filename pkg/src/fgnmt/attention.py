"""Score functions, normalizations and context combinations.

Three scorers share one network shape (a single tanh hidden layer):

* ``att``    scores ``[z_prev; h_t]`` with one output,
* ``atty``   scores ``[z_prev; h_t; y_prev]`` with one output,
* ``atty2d`` scores ``[z_prev; h_t; y_prev]`` with D outputs, one per
  annotation dimension.

Temporal variants normalize over source positions once per decoder step and
weight whole annotation vectors.  The fine-grained variant normalizes each
dimension separately and mixes annotations coordinate by coordinate.

The per-position functions (``score_att`` and friends) follow the definitions
literally.  :class:`AttentionKeys` and :func:`attend` compute the same
quantities for every source position at once by splitting the first layer of
the scorer into its z, h and y blocks, so the h block is applied only once per
sentence.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import numerics as nx
from .errors import DimensionError
from .layers import AnnotationSet, FeedForwardParams, ffnn
from .numerics import Tensor

__all__ = [
    "Variant",
    "AnnotationSet",
    "AlignmentTensor",
    "score_att",
    "score_atty",
    "score_atty2d",
    "normalize_temporal",
    "normalize_dimensionwise",
    "combine_temporal",
    "combine_finegrained",
    "AttentionKeys",
    "attend",
]


class Variant(str, Enum):
    ATT = "att"
    ATTY = "atty"
    ATTY2D = "atty2d"

    @property
    def uses_target(self) -> bool:
        return self is not Variant.ATT

    @property
    def fine_grained(self) -> bool:
        return self is Variant.ATTY2D

    @classmethod
    def parse(cls, name: "str | Variant") -> "Variant":
        if isinstance(name, Variant):
            return name
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown attention variant {name!r}; expected att, atty or atty2d") from None


@dataclass
class AlignmentTensor:
    """Attention weights for a whole decoded sentence.

    ``alpha`` is (T', T, D) for the fine-grained variant and (T', T) otherwise.
    """

    alpha: np.ndarray
    variant: Variant

    @property
    def fine_grained(self) -> bool:
        return self.alpha.ndim == 3


def _check_input(f: FeedForwardParams, n_in: int, n_out: int | None) -> None:
    if f.input_dim != n_in:
        raise DimensionError(f"score network expects {f.input_dim} inputs, got {n_in}")
    if n_out is not None and f.output_dim != n_out:
        raise DimensionError(f"score network has {f.output_dim} outputs, expected {n_out}")


def score_att(f: FeedForwardParams, z_prev: Tensor, h_t: Tensor) -> Tensor:
    _check_input(f, z_prev.shape[-1] + h_t.shape[-1], 1)
    return ffnn(f, nx.concat([z_prev, h_t]))[..., 0]


def score_atty(f: FeedForwardParams, z_prev: Tensor, h_t: Tensor, y_prev: Tensor) -> Tensor:
    _check_input(f, z_prev.shape[-1] + h_t.shape[-1] + y_prev.shape[-1], 1)
    return ffnn(f, nx.concat([z_prev, h_t, y_prev]))[..., 0]


def score_atty2d(f: FeedForwardParams, z_prev: Tensor, h_t: Tensor, y_prev: Tensor) -> Tensor:
    """One score per annotation dimension, all from a single forward pass."""
    _check_input(f, z_prev.shape[-1] + h_t.shape[-1] + y_prev.shape[-1], h_t.shape[-1])
    return ffnn(f, nx.concat([z_prev, h_t, y_prev]))


def normalize_temporal(e: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the source axis (last axis of ``e``)."""
    return nx.softmax_over_axis(e, axis=-1, mask=mask)


def normalize_dimensionwise(e: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Independent softmax over source positions for every dimension.

    ``e`` is (..., T, D); ``mask`` is (..., T).
    """
    m = None if mask is None else np.asarray(mask)[..., None]
    return nx.softmax_over_axis(e, axis=-2, mask=m)


def combine_temporal(alpha: Tensor, C: AnnotationSet) -> Tensor:
    """``sum_t alpha_t h_t``; ``alpha`` is (..., T)."""
    if alpha.shape[-1] != C.T:
        raise DimensionError(f"combine_temporal: {alpha.shape[-1]} weights for {C.T} annotations")
    return nx.tsum(nx.reshape(alpha, alpha.shape + (1,)) * C.h, axis=-2)


def combine_finegrained(alpha: Tensor, C: AnnotationSet) -> Tensor:
    """``sum_t alpha_t * h_t`` element-wise; ``alpha`` is (..., T, D)."""
    if alpha.shape[-2:] != C.h.shape[-2:]:
        raise DimensionError(f"combine_finegrained: weights {alpha.shape} vs annotations {C.h.shape}")
    return nx.tsum(alpha * C.h, axis=-2)


@dataclass
class AttentionKeys:
    """Per-sentence precomputation for batched scoring.

    ``keys`` holds ``W1[:, h-block] h_t + b1`` for every position, shaped
    (..., T, A).  ``w_z`` and ``w_y`` are the remaining column blocks of W1.
    """

    variant: Variant
    f: FeedForwardParams
    keys: Tensor
    w_z: Tensor
    w_y: Tensor | None

    @classmethod
    def build(cls, variant: Variant, f: FeedForwardParams, C: AnnotationSet, z_dim: int, y_dim: int) -> "AttentionKeys":
        D = C.D
        n_in = z_dim + D + (y_dim if variant.uses_target else 0)
        _check_input(f, n_in, D if variant.fine_grained else 1)
        w_z = f.w1[:, :z_dim]
        w_h = f.w1[:, z_dim : z_dim + D]
        w_y = f.w1[:, z_dim + D :] if variant.uses_target else None
        return cls(variant, f, nx.linear(C.h, w_h, f.b1), w_z, w_y)

    def scores(self, z_prev: Tensor, y_prev: Tensor | None) -> Tensor:
        """Scores for every source position: (..., T, 1) or (..., T, D)."""
        q = nx.linear(z_prev, self.w_z)
        if self.w_y is not None:
            q = q + nx.linear(y_prev, self.w_y)
        lead = q.shape[:-1]
        q = nx.reshape(q, lead + (1, q.shape[-1]))
        hidden = nx.tanh(self.keys + q)
        return nx.linear(hidden, self.f.w2, self.f.b2)


def attend(keys: AttentionKeys, C: AnnotationSet, z_prev: Tensor, y_prev: Tensor | None) -> tuple[Tensor, Tensor]:
    """Context vector and attention weights for one decoder step.

    Returns ``(context (..., D), alpha)`` where alpha is (..., T) for temporal
    variants and (..., T, D) for the fine-grained one.
    """
    e = keys.scores(z_prev, y_prev)
    if keys.variant.fine_grained:
        alpha = normalize_dimensionwise(e, C.mask)
        return combine_finegrained(alpha, C), alpha
    e = e[..., 0]
    alpha = normalize_temporal(e, C.mask)
    return combine_temporal(alpha, C), alpha
