"""Corpora, vocabularies, BPE subwords and synthetic toy tasks."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, VocabularyError

log = logging.getLogger(__name__)

EOS_TOKEN, BOS_TOKEN, UNK_TOKEN = "</s>", "<s>", "<unk>"
RESERVED = (EOS_TOKEN, BOS_TOKEN, UNK_TOKEN)
EOW = "</w>"
MARKER = "@@"


def tokenize(line: str) -> list[str]:
    return line.split()


def read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def write_lines(path, lines: Iterable[str]) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# -- BPE ------------------------------------------------------------------


@dataclass
class BPEMerges:
    """Ordered symbol-pair merges; earlier merges take priority."""

    merges: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache: dict[str, tuple[str, ...]] = {}

    def __len__(self) -> int:
        return len(self.merges)

    def save(self, path) -> None:
        write_lines(path, (f"{a} {b}" for a, b in self.merges))

    @classmethod
    def load(cls, path) -> "BPEMerges":
        merges = []
        for n, line in enumerate(read_lines(path), 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataError(f"{path}:{n}: expected two symbols, got {line!r}")
            merges.append((parts[0], parts[1]))
        return cls(merges)

    def segment(self, word: str) -> tuple[str, ...]:
        """Subword units of one word, end-of-word marker still attached."""
        if word in self._cache:
            return self._cache[word]
        symbols = list(word[:-1]) + [word[-1] + EOW]
        while len(symbols) > 1:
            best, best_rank = None, None
            for pair in zip(symbols, symbols[1:]):
                r = self.ranks.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = pair, r
            if best is None:
                break
            symbols = _merge_symbols(symbols, best)
        out = tuple(symbols)
        self._cache[word] = out
        return out


def _merge_symbols(symbols: Sequence[str], pair: tuple[str, str]) -> list[str]:
    out = []
    i = 0
    a, b = pair
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def learn_bpe(corpus: Iterable[Sequence[str]], n_merges: int, min_frequency: int = 2) -> BPEMerges:
    """Learn up to ``n_merges`` merges from tokenized sentences.

    Each step merges the most frequent adjacent symbol pair (ties go to the
    lexicographically smallest pair).  Learning stops early once no pair
    occurs at least ``min_frequency`` times.
    """
    counts = Counter(tok for sent in corpus for tok in sent)
    if not counts:
        raise DataError("learn_bpe: empty corpus")
    words = {tuple(w[:-1]) + (w[-1] + EOW,): c for w, c in counts.items()}
    merges: list[tuple[str, str]] = []
    for _ in range(n_merges):
        pairs: Counter = Counter()
        for syms, c in words.items():
            for pair in zip(syms, syms[1:]):
                pairs[pair] += c
        if not pairs:
            break
        top = max(pairs.values())
        if top < min_frequency:
            break
        best = min(p for p, c in pairs.items() if c == top)
        merges.append(best)
        words = {tuple(_merge_symbols(s, best)): c for s, c in words.items()}
    return BPEMerges(merges)


def apply_bpe(merges: BPEMerges, tokens: Sequence[str]) -> list[str]:
    """Split tokens into subwords; every non-final unit ends with ``@@``."""
    out = []
    for tok in tokens:
        units = list(merges.segment(tok))
        last = units[-1][: -len(EOW)]
        if last:
            units[-1] = last
        else:
            units.pop()
        out.extend(u + MARKER for u in units[:-1])
        out.append(units[-1])
    return out


def unbpe(subwords: Sequence[str]) -> list[str]:
    """Join ``@@``-marked units with their successors; output stays tokenized."""
    out = []
    buf = ""
    for unit in subwords:
        if unit.endswith(MARKER):
            buf += unit[: -len(MARKER)]
        else:
            out.append(buf + unit)
            buf = ""
    if buf:
        log.warning("unbpe: dangling continuation marker at end of line")
        out.append(buf)
    return out


# -- vocabulary -----------------------------------------------------------


class Vocabulary:
    """Token/id maps with ids 0, 1, 2 reserved for EOS, BOS and UNK."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos = list(RESERVED)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            if t in self.stoi:
                raise DataError(f"duplicate or reserved vocabulary entry {t!r}")
            self.stoi[t] = len(self.itos)
            self.itos.append(t)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def to_id(self, token: str) -> int:
        return self.stoi.get(token, self.stoi[UNK_TOKEN])

    def to_token(self, i: int) -> str:
        if not 0 <= i < len(self.itos):
            raise VocabularyError(f"id {i} outside vocabulary of size {len(self.itos)}")
        return self.itos[i]

    def encode(self, tokens: Sequence[str], add_eos: bool = False) -> list[int]:
        ids = [self.to_id(t) for t in tokens]
        return ids + [0] if add_eos else ids

    def decode(self, ids: Iterable[int], strip_eos: bool = True) -> list[str]:
        toks = []
        for i in ids:
            if strip_eos and i == 0:
                break
            toks.append(self.to_token(int(i)))
        return toks

    def save(self, path) -> None:
        write_lines(path, self.itos[len(RESERVED) :])

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls([line for line in read_lines(path) if line])


def build_vocab(corpus: Iterable[Sequence[str]], cap: int = 30000) -> Vocabulary:
    """Keep the ``cap - 3`` most frequent tokens, ties broken lexicographically."""
    if cap < 4:
        raise DataError(f"vocabulary cap must be at least 4, got {cap}")
    counts = Counter(t for sent in corpus for t in sent if t not in RESERVED)
    if not counts:
        raise DataError("build_vocab: empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([t for t, _ in ranked[: cap - len(RESERVED)]])


# -- corpora --------------------------------------------------------------


@dataclass
class ParallelCorpus:
    src: list[list[str]]
    tgt: list[list[str]]

    def __post_init__(self):
        if len(self.src) != len(self.tgt):
            raise DataError(f"{len(self.src)} source vs {len(self.tgt)} target sentences")

    def __len__(self) -> int:
        return len(self.src)

    def __iter__(self):
        return iter(zip(self.src, self.tgt))

    def filter_length(self, max_len: int) -> "ParallelCorpus":
        keep = [(s, t) for s, t in self if len(s) <= max_len and len(t) <= max_len]
        return ParallelCorpus([s for s, _ in keep], [t for _, t in keep])

    def map(self, src_fn, tgt_fn=None) -> "ParallelCorpus":
        tgt_fn = tgt_fn or src_fn
        return ParallelCorpus([src_fn(s) for s in self.src], [tgt_fn(t) for t in self.tgt])

    def save(self, src_path, tgt_path) -> None:
        write_lines(src_path, (" ".join(s) for s in self.src))
        write_lines(tgt_path, (" ".join(t) for t in self.tgt))

    @classmethod
    def load(cls, src_path, tgt_path) -> "ParallelCorpus":
        src_lines, tgt_lines = read_lines(src_path), read_lines(tgt_path)
        if len(src_lines) != len(tgt_lines):
            raise DataError(f"{src_path} has {len(src_lines)} lines, {tgt_path} has {len(tgt_lines)}")
        src, tgt = [], []
        for n, (s, t) in enumerate(zip(src_lines, tgt_lines), 1):
            s_tok, t_tok = tokenize(s), tokenize(t)
            if not s_tok or not t_tok:
                log.warning("skipping line %d: empty side", n)
                continue
            src.append(s_tok)
            tgt.append(t_tok)
        return cls(src, tgt)


TOY_KINDS = ("copy", "reverse", "polysemy")


def toy_corpus(kind: str, n_pairs: int, vocab_size: int = 20, max_len: int = 10, seed: int = 0, min_len: int = 1) -> ParallelCorpus:
    """Synthetic parallel data over source symbols ``s0 .. s{vocab_size-1}``.

    ``copy`` repeats the source, ``reverse`` reverses it, and ``polysemy``
    maps ``s<i>`` at an even 0-based position to ``t<i>a`` and at an odd one to
    ``t<i>b``, so translating a word depends on where it sits.
    """
    if kind not in TOY_KINDS:
        raise DataError(f"unknown toy task {kind!r}; expected one of {TOY_KINDS}")
    if vocab_size < 4 or not 1 <= min_len <= max_len <= 50:
        raise DataError(f"bad toy corpus sizes: vocab {vocab_size}, lengths {min_len}..{max_len}")
    rng = np.random.default_rng(seed)
    src, tgt = [], []
    for _ in range(n_pairs):
        n = int(rng.integers(min_len, max_len + 1))
        ids = rng.integers(0, vocab_size, size=n)
        s = [f"s{i}" for i in ids]
        if kind == "copy":
            t = list(s)
        elif kind == "reverse":
            t = s[::-1]
        else:
            t = [f"t{i}{'a' if pos % 2 == 0 else 'b'}" for pos, i in enumerate(ids)]
        src.append(s)
        tgt.append(t)
    return ParallelCorpus(src, tgt)
