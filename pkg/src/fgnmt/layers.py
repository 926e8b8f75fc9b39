"""Embeddings, LSTM cells, the bidirectional encoder and one-hidden-layer nets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ContractError, DimensionError, VocabularyError
from .numerics import Tensor


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    s = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


@dataclass
class AnnotationSet:
    """Encoder annotations ``h`` of shape (..., T, D).

    ``mask`` is (..., T) with 1 on real source positions and 0 on padding; it
    is ``None`` when no position is padded.
    """

    h: Tensor
    mask: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.h.shape[-2]

    @property
    def D(self) -> int:
        return self.h.shape[-1]

    def lengths(self) -> np.ndarray:
        lead = self.h.shape[:-2]
        if self.mask is None:
            return np.full(lead, self.T, dtype=np.int64)
        return self.mask.sum(axis=-1).astype(np.int64)


@dataclass
class EmbeddingMatrix:
    """Word vectors stored as the columns of an (E, |V|) table."""

    table: Tensor

    @property
    def dim(self) -> int:
        return self.table.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.table.shape[1]


@dataclass
class LSTMCellParams:
    """Gate weights stacked in the order input, forget, output, candidate.

    ``wx`` is (4H, I), ``wh`` is (4H, H) and ``b`` is (4H,).
    """

    wx: Tensor
    wh: Tensor
    b: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.wh.shape[1]

    @property
    def input_dim(self) -> int:
        return self.wx.shape[1]

    @classmethod
    def init(cls, rng: np.random.Generator, input_dim: int, hidden_dim: int) -> "LSTMCellParams":
        h4 = 4 * hidden_dim
        return cls(
            Tensor(glorot(rng, h4, input_dim), requires_grad=True),
            Tensor(glorot(rng, h4, hidden_dim), requires_grad=True),
            Tensor(np.zeros(h4), requires_grad=True),
        )


@dataclass
class FeedForwardParams:
    """``W2 tanh(W1 x + b1) + b2`` with W1 (H, I) and W2 (O, H)."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def output_dim(self) -> int:
        return self.w2.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, input_dim: int, hidden_dim: int, output_dim: int) -> "FeedForwardParams":
        return cls(
            Tensor(glorot(rng, hidden_dim, input_dim), requires_grad=True),
            Tensor(np.zeros(hidden_dim), requires_grad=True),
            Tensor(glorot(rng, output_dim, hidden_dim), requires_grad=True),
            Tensor(np.zeros(output_dim), requires_grad=True),
        )


def embed(emb: EmbeddingMatrix, ids) -> Tensor:
    """Rows of the result are the table columns selected by ``ids``."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= emb.vocab_size):
        bad = ids[(ids < 0) | (ids >= emb.vocab_size)][0]
        raise VocabularyError(f"token id {int(bad)} outside vocabulary of size {emb.vocab_size}")
    return nx.gather_columns(emb.table, ids)


def lstm_step(p: LSTMCellParams, x: Tensor, state: tuple[Tensor, Tensor]) -> tuple[Tensor, Tensor]:
    h, c = state
    hid = p.hidden_dim
    if x.shape[-1] != p.input_dim or h.shape[-1] != hid or c.shape[-1] != hid:
        raise DimensionError(
            f"lstm_step: x {x.shape}, h {h.shape}, c {c.shape} vs cell ({p.input_dim}->{hid})"
        )
    pre = nx.linear(x, p.wx, p.b) + nx.linear(h, p.wh)
    gates = nx.sigmoid(pre[..., : 3 * hid])
    i = gates[..., :hid]
    f = gates[..., hid : 2 * hid]
    o = gates[..., 2 * hid :]
    g = nx.tanh(pre[..., 3 * hid :])
    c_new = f * c + i * g
    h_new = o * nx.tanh(c_new)
    return h_new, c_new


def _run(p: LSTMCellParams, xs: Tensor, order, mask: np.ndarray | None, h0: Tensor | None) -> list[Tensor]:
    lead = xs.shape[:-2]
    zero = Tensor(np.zeros(lead + (p.hidden_dim,)))
    h, c = (zero if h0 is None else h0 + zero), zero
    outs: list[Tensor | None] = [None] * xs.shape[-2]
    for t in order:
        h_new, c_new = lstm_step(p, xs[..., t, :], (h, c))
        if mask is not None:
            # padded steps carry the previous state through unchanged
            m = Tensor(mask[..., t, None])
            keep = Tensor(1.0 - mask[..., t, None])
            h_new = m * h_new + keep * h
            c_new = m * c_new + keep * c
        h, c = h_new, c_new
        outs[t] = h
    return outs  # type: ignore[return-value]


def bidirectional_encode(
    fwd: LSTMCellParams,
    bwd: LSTMCellParams,
    xs: Tensor,
    mask: np.ndarray | None = None,
    h0: tuple[Tensor, Tensor] | None = None,
) -> AnnotationSet:
    """Annotations ``[forward_t; backward_t]`` for every position.

    ``xs`` is (..., T, E); the result is (..., T, 2H).  Both directions start
    from zero states unless trained initial states ``h0`` are given.  With a (..., T) padding ``mask`` the backward pass skips
    trailing padding so real positions see exactly the unpadded computation.
    """
    T = xs.shape[-2]
    if T < 1:
        raise ContractError("bidirectional_encode: empty sequence")
    h0_f, h0_b = h0 if h0 is not None else (None, None)
    forward = _run(fwd, xs, range(T), mask, h0_f)
    backward = _run(bwd, xs, range(T - 1, -1, -1), mask, h0_b)
    h = nx.concat([nx.stack(forward, axis=-2), nx.stack(backward, axis=-2)], axis=-1)
    return AnnotationSet(h, mask)


def ffnn(p: FeedForwardParams, x: Tensor) -> Tensor:
    if x.shape[-1] != p.input_dim:
        raise DimensionError(f"ffnn: input {x.shape} does not match W1 {p.w1.shape}")
    return nx.linear(nx.tanh(nx.linear(x, p.w1, p.b1)), p.w2, p.b2)
