"""Freeze BLEU values for random tiny corpora using sacrebleu as the oracle.

sacrebleu is only needed to regenerate ``tests/golden/bleu_golden.json``;
the test suite reads the frozen file.

    python scripts/make_bleu_goldens.py
"""

import json
from pathlib import Path

import numpy as np
import sacrebleu

OUT = Path(__file__).resolve().parents[1] / "tests" / "golden" / "bleu_golden.json"
WORDS = ["the", "cat", "sat", "on", "mat", "a", "dog", "ran", "to", "house"]


def random_corpus(rng):
    n = int(rng.integers(2, 7))
    refs, hyps = [], []
    for _ in range(n):
        ref = list(rng.choice(WORDS, size=int(rng.integers(3, 12))))
        hyp = list(ref)
        for _ in range(int(rng.integers(0, 4))):
            i = int(rng.integers(0, len(hyp)))
            op = rng.integers(0, 3)
            if op == 0:
                hyp[i] = str(rng.choice(WORDS))
            elif op == 1 and len(hyp) > 1:
                del hyp[i]
            else:
                hyp.insert(i, str(rng.choice(WORDS)))
        refs.append(" ".join(ref))
        hyps.append(" ".join(hyp))
    return hyps, refs


def main():
    rng = np.random.default_rng(20171018)
    cases = []
    for _ in range(10):
        hyps, refs = random_corpus(rng)
        plain = sacrebleu.corpus_bleu(hyps, [refs], tokenize="none", smooth_method="none", force=True)
        smooth = sacrebleu.corpus_bleu(hyps, [refs], tokenize="none", smooth_method="add-k", smooth_value=1, force=True)
        cases.append({"hyp": hyps, "ref": refs, "bleu": plain.score, "bleu_smoothed": smooth.score})
    OUT.write_text(json.dumps({"oracle": f"sacrebleu {sacrebleu.__version__}", "cases": cases}, indent=1) + "\n")
    print(f"wrote {len(cases)} cases to {OUT}")


if __name__ == "__main__":
    main()
