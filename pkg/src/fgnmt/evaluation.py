"""Corpus-level BLEU-4 over tokenized, un-BPE'd text."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import DataError

MAX_ORDER = 4


@dataclass
class BleuReport:
    bleu: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    def line(self) -> str:
        fields = [f"{self.bleu:.2f}", *(f"{p:.4f}" for p in self.precisions), f"{self.brevity_penalty:.4f}", str(self.hyp_len), str(self.ref_len)]
        return "\t".join(fields)

    def __str__(self) -> str:
        return self.line()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]], smoothing: bool = False) -> BleuReport:
    """Corpus BLEU with clipped n-gram counts and the brevity penalty.

    Matches and totals are summed over all sentences before the precisions
    are formed.  With ``smoothing`` the 2- to 4-gram precisions become
    ``(matches + 1) / (total + 1)``.
    """
    if len(hypotheses) != len(references):
        raise DataError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, MAX_ORDER + 1):
            h, r = _ngrams(hyp, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)

    precisions = []
    for n in range(MAX_ORDER):
        m, t = matches[n], totals[n]
        if smoothing and n > 0:
            m, t = m + 1, t + 1
        precisions.append(m / t if t > 0 else 0.0)

    if hyp_len == 0:
        bp = 0.0
    elif hyp_len >= ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)

    if min(precisions) <= 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuReport(score, tuple(precisions), bp, hyp_len, ref_len)
