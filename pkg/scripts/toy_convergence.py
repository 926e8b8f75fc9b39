"""Train every attention variant on a toy task and report validation BLEU.

    python scripts/toy_convergence.py --task polysemy --context
"""

import argparse
import time

from fgnmt.data import TOY_KINDS, build_vocab, toy_corpus
from fgnmt.model import ModelConfig, NMTModel
from fgnmt.training import TrainSchedule, early_stop_loop, encode_corpus


def run(task: str, variant: str, context: bool, args) -> tuple[float, int, float]:
    train = toy_corpus(task, args.n_train, args.vocab, args.max_len, seed=args.seed)
    valid = toy_corpus(task, args.n_valid, args.vocab, args.max_len, seed=args.seed + 1)
    sv, tv = build_vocab(train.src), build_vocab(train.tgt)
    cfg = ModelConfig(
        variant=variant,
        contextualization=context,
        src_vocab=len(sv),
        tgt_vocab=len(tv),
        emb_dim=args.emb_dim,
        hidden_dim=args.hidden_dim,
        align_hidden_dim=2 * args.hidden_dim,
        seed=args.seed,
    )
    schedule = TrainSchedule(
        valid_interval=args.valid_interval,
        max_steps=args.max_steps,
        seed=args.seed,
        learning_rate=args.lr,
        target_bleu=args.target_bleu,
    )
    start = time.perf_counter()
    best = early_stop_loop(NMTModel.init(cfg), encode_corpus(train, sv, tv), encode_corpus(valid, sv, tv), schedule, tv)
    return best.bleu, best.step, time.perf_counter() - start


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--task", choices=TOY_KINDS, default="copy")
    p.add_argument("--variants", nargs="+", default=["att", "atty", "atty2d"])
    p.add_argument("--context", action="store_true")
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-valid", type=int, default=200)
    p.add_argument("--vocab", type=int, default=20)
    p.add_argument("--max-len", type=int, default=10)
    p.add_argument("--emb-dim", type=int, default=16)
    p.add_argument("--hidden-dim", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--valid-interval", type=int, default=250)
    p.add_argument("--max-steps", type=int, default=20000)
    p.add_argument("--target-bleu", type=float, default=None)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()
    print("task\tvariant\tcontext\tbleu\tstep\tseconds")
    for variant in args.variants:
        score, step, secs = run(args.task, variant, args.context, args)
        print(f"{args.task}\t{variant}\t{int(args.context)}\t{score:.2f}\t{step}\t{secs:.1f}", flush=True)


if __name__ == "__main__":
    main()
