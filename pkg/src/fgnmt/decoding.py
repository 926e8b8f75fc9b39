"""Greedy and beam-search decoding."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numerics as nx
from .attention import AlignmentTensor
from .data import Vocabulary, unbpe
from .errors import ContractError
from .model import BOS, EOS, DecoderState, NMTModel
from .numerics import Tensor


@dataclass
class Hypothesis:
    tokens: list[int]
    score: float
    state: DecoderState | None = None
    alphas: list[np.ndarray] = field(default_factory=list)
    step_log_probs: list[float] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return bool(self.tokens) and self.tokens[-1] == EOS

    def output_ids(self) -> list[int]:
        return self.tokens[:-1] if self.finished else list(self.tokens)

    def alignment(self, variant) -> AlignmentTensor:
        return AlignmentTensor(np.stack(self.alphas), variant)


def default_max_len(src_len: int) -> int:
    return 3 * src_len + 10


def _check_source(src_ids) -> np.ndarray:
    src = np.asarray(src_ids, dtype=np.int64)
    if src.ndim != 1 or src.size == 0:
        raise ContractError("decoding needs a non-empty 1-D source sentence")
    return src


def greedy_batch(model: NMTModel, sources: Sequence[Sequence[int]], max_len: int | None = None) -> list[Hypothesis]:
    """Argmax decoding of several sentences at once.

    Sentences are padded to a common length and masked, so each result is
    the same as decoding that sentence alone.
    """
    srcs = [_check_source(s) for s in sources]
    B = len(srcs)
    T = max(len(s) for s in srcs)
    ids = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T))
    for b, s in enumerate(srcs):
        ids[b, : len(s)] = s
        mask[b, : len(s)] = 1.0
    limits = np.array([max_len or default_max_len(len(s)) for s in srcs])
    hyps = [Hypothesis([], 0.0) for _ in srcs]
    with nx.no_grad():
        C = model.encode_source(ids, None if np.all(mask) else mask)
        keys = model.attention_keys(C)
        state = model.initial_state(C)
        prev = np.full(B, BOS)
        done = np.zeros(B, dtype=bool)
        for step in range(int(limits.max())):
            out = model.decoder_step(state, prev, C, keys)
            logp = out.log_probs.data
            best = logp.argmax(axis=-1)
            alpha = out.alpha.data
            for b in np.flatnonzero(~done):
                h = hyps[b]
                lp = float(logp[b, best[b]])
                h.tokens.append(int(best[b]))
                h.step_log_probs.append(lp)
                h.score += lp
                h.alphas.append(alpha[b, : len(srcs[b])].copy())
                if best[b] == EOS or len(h.tokens) >= limits[b]:
                    done[b] = True
                    h.state = DecoderState(Tensor(out.state.z.data[b]), Tensor(out.state.cell.data[b]), out.state.step)
            if done.all():
                break
            state, prev = out.state, best
    return hyps


def greedy(model: NMTModel, src_ids, max_len: int | None = None) -> Hypothesis:
    return greedy_batch(model, [src_ids], max_len)[0]


def beam_search(model: NMTModel, src_ids, width: int = 12, max_len: int | None = None) -> Hypothesis:
    """Best EOS-terminated hypothesis under the raw summed log-probability.

    Each step ranks every one-token extension of the live hypotheses by
    score, then token id, then parent order.  EOS extensions ranked within
    the first ``width`` leave the beam as finished; the best ``width``
    non-EOS extensions stay live.  Hypotheses reaching ``max_len`` are
    finished as they are.  Because log-probabilities are never positive, the
    search also stops once the best finished score is at least the best live
    score: no live extension can overtake it.
    """
    if width < 1:
        raise ContractError("beam width must be at least 1")
    src = _check_source(src_ids)
    max_len = max_len or default_max_len(len(src))
    if max_len < 1:
        raise ContractError("max_len must be at least 1")
    finished: list[Hypothesis] = []
    with nx.no_grad():
        C = model.encode_source(src[None])
        keys = model.attention_keys(C)
        s0 = model.initial_state(C)
        live = [Hypothesis([], 0.0)]
        z, cell = s0.z.data, s0.cell.data
        for step in range(max_len):
            prev = np.array([h.tokens[-1] if h.tokens else BOS for h in live])
            out = model.decoder_step(DecoderState(Tensor(z), Tensor(cell), step), prev, C, keys)
            logp = out.log_probs.data
            alpha = out.alpha.data
            K, V = logp.shape
            cand = np.array([h.score for h in live])[:, None] + logp
            parent = np.repeat(np.arange(K), V)
            token = np.tile(np.arange(V), K)
            flat = cand.reshape(-1)
            order = np.lexsort((parent, token, -flat))
            last = step == max_len - 1
            new_live: list[Hypothesis] = []
            keep_rows: list[int] = []
            n_extended = 0
            for rank, j in enumerate(order):
                k, w = int(parent[j]), int(token[j])
                is_eos = w == EOS
                if is_eos and rank >= width:
                    continue
                if not is_eos:
                    if n_extended >= width:
                        if rank >= width:
                            break
                        continue
                    n_extended += 1
                src_h = live[k]
                h = Hypothesis(
                    src_h.tokens + [w],
                    float(flat[j]),
                    None,
                    src_h.alphas + [alpha[k].copy()],
                    src_h.step_log_probs + [float(logp[k, w])],
                )
                if is_eos or last:
                    h.state = DecoderState(Tensor(out.state.z.data[k]), Tensor(out.state.cell.data[k]), step + 1)
                    finished.append(h)
                else:
                    new_live.append(h)
                    keep_rows.append(k)
            if not new_live:
                break
            best_done = max((h.score for h in finished), default=-np.inf)
            if best_done >= new_live[0].score:
                break
            live = new_live
            z = out.state.z.data[keep_rows]
            cell = out.state.cell.data[keep_rows]
    # ties: earlier-finished, then lower token ids
    return max(finished, key=lambda h: h.score)


def translate(
    model: NMTModel,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    lines: Sequence[Sequence[str]],
    beam: int = 12,
    workers: int = 1,
) -> list[tuple[list[str], Hypothesis]]:
    """Decode tokenized (subword) source lines; outputs are un-BPE'd.

    Output order always matches input order, whatever the worker count.
    """

    def one(tokens):
        ids = src_vocab.encode(tokens)
        if not ids:
            return [], Hypothesis([EOS], 0.0)
        hyp = beam_search(model, ids, width=beam) if beam > 1 else greedy(model, ids)
        return unbpe(tgt_vocab.decode(hyp.output_ids(), strip_eos=False)), hyp

    if workers <= 1:
        return [one(t) for t in lines]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, lines))
