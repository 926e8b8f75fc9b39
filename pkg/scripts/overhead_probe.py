"""Per-sentence beam decoding time of temporal vs fine-grained attention.

EOS is suppressed so every variant decodes to the same length.

    python scripts/overhead_probe.py --hidden-dim 64 --sentences 50
"""

import argparse
import time

import numpy as np

from fgnmt.data import build_vocab, toy_corpus
from fgnmt.decoding import beam_search
from fgnmt.model import EOS, ModelConfig, NMTModel


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sentences", type=int, default=30)
    p.add_argument("--emb-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=32)
    p.add_argument("--beam", type=int, default=12)
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args()

    corpus = toy_corpus("copy", args.sentences, vocab_size=20, max_len=10, seed=6)
    vocab = build_vocab(corpus.src)
    sources = [vocab.encode(s) for s in corpus.src]
    results = {}
    for variant in ("att", "atty", "atty2d"):
        cfg = ModelConfig(variant=variant, src_vocab=len(vocab), tgt_vocab=len(vocab), emb_dim=args.emb_dim,
                          hidden_dim=args.hidden_dim, align_hidden_dim=2 * args.hidden_dim, seed=1)
        model = NMTModel.init(cfg)
        model.params["out.b"].data[EOS] = -50.0
        runs = []
        for _ in range(args.repeats):
            start = time.perf_counter()
            for src in sources:
                beam_search(model, src, width=args.beam)
            runs.append((time.perf_counter() - start) / len(sources))
        results[variant] = float(np.median(runs))
    base = results["atty"]
    print("variant\tms_per_sentence\tvs_atty")
    for variant, secs in results.items():
        print(f"{variant}\t{1000 * secs:.2f}\t{100 * (secs / base - 1):+.1f}%")


if __name__ == "__main__":
    main()
