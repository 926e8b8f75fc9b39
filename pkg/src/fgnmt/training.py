"""Maximum-likelihood training with Adam and BLEU-based early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence, TextIO

import numpy as np

from . import numerics as nx
from .data import ParallelCorpus, Vocabulary, unbpe
from .decoding import greedy_batch
from .errors import DataError, NumericError
from .evaluation import bleu
from .model import EOS, NMTModel
from .numerics import Tensor

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> AdamState:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
        if g.shape != params[name].shape:
            raise NumericError(f"gradient for {name} has shape {g.shape}, parameter {params[name].shape}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[name].data -= state.alpha * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Rescale so the global L2 norm is at most ``max_norm``; returns the original norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


@dataclass
class TrainSchedule:
    batch_size: int = 32
    max_len: int = 50
    valid_interval: int = 500
    patience: int = 5
    max_steps: int = 20000
    seed: int = 0
    learning_rate: float = 1e-3
    clip_norm: float = 1.0
    target_bleu: float | None = None
    smooth_bleu: bool = False
    valid_batch: int = 100


Pair = tuple[list[int], list[int]]


def encode_corpus(corpus: ParallelCorpus, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> list[Pair]:
    """Id pairs; every target gets a trailing EOS."""
    return [(src_vocab.encode(s), tgt_vocab.encode(t, add_eos=True)) for s, t in corpus]


def length_filter(pairs: Sequence[Pair], max_len: int) -> list[Pair]:
    """Drop pairs with more than ``max_len`` tokens on either side (EOS not counted)."""
    kept = [(s, t) for s, t in pairs if len(s) <= max_len and len(t) - 1 <= max_len]
    if not kept:
        raise DataError(f"no sentence pair survives the length limit of {max_len}")
    return kept


def pad_batch(pairs: Sequence[Pair]):
    B = len(pairs)
    Ts = max(len(s) for s, _ in pairs)
    Tt = max(len(t) for _, t in pairs)
    src = np.zeros((B, Ts), dtype=np.int64)
    tgt = np.full((B, Tt), EOS, dtype=np.int64)
    sm = np.zeros((B, Ts))
    tm = np.zeros((B, Tt))
    for b, (s, t) in enumerate(pairs):
        src[b, : len(s)] = s
        sm[b, : len(s)] = 1.0
        tgt[b, : len(t)] = t
        tm[b, : len(t)] = 1.0
    return src, sm, tgt, tm


def make_batches(pairs: Sequence[Pair], batch_size: int, rng: np.random.Generator) -> list[list[Pair]]:
    """Length-sorted buckets in a seeded random order."""
    idx = rng.permutation(len(pairs))
    idx = sorted(idx, key=lambda i: (len(pairs[i][0]), len(pairs[i][1])))
    batches = [[pairs[i] for i in idx[k : k + batch_size]] for k in range(0, len(idx), batch_size)]
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


class Trainer:
    """Owns the optimizer state and the sampling stream for one model."""

    def __init__(self, model: NMTModel, schedule: TrainSchedule, adam: AdamState | None = None):
        self.model = model
        self.schedule = schedule
        self.adam = adam if adam is not None else AdamState(alpha=schedule.learning_rate)
        self.rng = np.random.default_rng(schedule.seed)
        self.steps = 0
        self.last_grad_norm = 0.0

    def loss(self, batch: Sequence[Pair]) -> tuple[Tensor, int]:
        src, sm, tgt, tm = pad_batch(batch)
        ll = self.model.batch_log_likelihood(src, sm, tgt, tm)
        n = int(tm.sum())
        return ll * (-1.0 / n), n

    def step(self, batch: Sequence[Pair]) -> float:
        """One clipped Adam update; returns the batch NLL per target token."""
        params = self.model.params
        for p in params.values():
            p.zero_grad()
        loss, _ = self.loss(batch)
        if not math.isfinite(loss.item()):
            raise NumericError(f"non-finite loss at step {self.steps}")
        nx.backward(loss)
        grads = {k: (p.grad if p.grad is not None else np.zeros(p.shape)) for k, p in params.items()}
        grads, self.last_grad_norm = clip_grad_norm(grads, self.schedule.clip_norm)
        adam_step(params, grads, self.adam)
        self.steps += 1
        return loss.item()

    def batches(self, pairs: Sequence[Pair]) -> Iterator[list[Pair]]:
        """Endless stream of epochs over ``pairs``."""
        pairs = length_filter(pairs, self.schedule.max_len)
        while True:
            yield from make_batches(pairs, self.schedule.batch_size, self.rng)


def train_epoch(trainer: Trainer, pairs: Sequence[Pair]) -> float:
    """One pass over the corpus; returns mean NLL per target token."""
    kept = length_filter(pairs, trainer.schedule.max_len)
    total = 0.0
    tokens = 0
    for batch in make_batches(kept, trainer.schedule.batch_size, trainer.rng):
        n = sum(len(t) for _, t in batch)
        total += trainer.step(batch) * n
        tokens += n
    return total / tokens


def validation_bleu(model: NMTModel, pairs: Sequence[Pair], tgt_vocab: Vocabulary, chunk: int = 100, smoothing: bool = False) -> float:
    hyps, refs = [], []
    for k in range(0, len(pairs), chunk):
        part = pairs[k : k + chunk]
        for (_, ref), hyp in zip(part, greedy_batch(model, [s for s, _ in part])):
            hyps.append(unbpe(tgt_vocab.decode(hyp.output_ids(), strip_eos=False)))
            refs.append(unbpe(tgt_vocab.decode(ref)))
    return bleu(hyps, refs, smoothing=smoothing).bleu


@dataclass
class Checkpoint:
    model: NMTModel
    step: int
    bleu: float
    history: list[tuple[int, float, float]]


def log_line(step: int, train_loss: float, valid_bleu: float) -> str:
    return f"{step}\t{train_loss:.6f}\t{valid_bleu:.4f}"


def early_stop_loop(
    model: NMTModel,
    train_pairs: Sequence[Pair],
    valid_pairs: Sequence[Pair],
    schedule: TrainSchedule,
    tgt_vocab: Vocabulary,
    log_file: TextIO | None = None,
    on_validate: Callable[[int, float, float], None] | None = None,
) -> Checkpoint:
    """Train until validation BLEU stops improving.

    Validation runs greedy decoding every ``valid_interval`` updates.  The
    best-scoring parameters are kept; training ends after ``patience``
    validations without a strict improvement, at ``max_steps``, or once
    ``target_bleu`` is reached.
    """
    if not valid_pairs:
        raise DataError("validation corpus is empty")
    trainer = Trainer(model, schedule)
    stream = trainer.batches(train_pairs)
    best: Checkpoint | None = None
    history: list[tuple[int, float, float]] = []
    bad = 0
    window: list[float] = []
    while trainer.steps < schedule.max_steps:
        window.append(trainer.step(next(stream)))
        if trainer.steps % schedule.valid_interval and trainer.steps < schedule.max_steps:
            continue
        score = validation_bleu(model, valid_pairs, tgt_vocab, schedule.valid_batch, schedule.smooth_bleu)
        train_loss = float(np.mean(window))
        window = []
        history.append((trainer.steps, train_loss, score))
        line = log_line(trainer.steps, train_loss, score)
        log.info(line)
        if log_file is not None:
            log_file.write(line + "\n")
            log_file.flush()
        if on_validate is not None:
            on_validate(trainer.steps, train_loss, score)
        if best is None or score > best.bleu:
            best = Checkpoint(model.copy(), trainer.steps, score, history)
            bad = 0
        else:
            bad += 1
            if bad >= schedule.patience:
                break
        if schedule.target_bleu is not None and score >= schedule.target_bleu:
            break
    if best is None:
        raise DataError("training finished before any validation")
    best.history = history
    return best
