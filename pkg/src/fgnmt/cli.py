"""Command-line entry point: ``fgnmt {train,translate,score,align,bpe}``.

Every command accepts ``--config FILE`` with ``key=value`` lines; keys are
option names (dashes or underscores).  Options given on the command line win
over the file.  Exit codes: 0 success, 2 usage or data error, 3 numeric
failure.  Set ``FGNMT_LOG`` (e.g. ``INFO``) to change log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, data
from .attention import Variant
from .decoding import translate
from .errors import ContractError, DataError, NumericError, VocabularyError
from .evaluation import bleu
from .model import ModelConfig, NMTModel, load_checkpoint, save_checkpoint
from .training import TrainSchedule, early_stop_loop, encode_corpus

log = logging.getLogger("fgnmt")


class UsageError(Exception):
    pass


def _bool(value: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {value!r}")


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; command-line flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fgnmt", description="fine-grained attention NMT toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model with early stopping")
    _add_config(t)
    t.add_argument("--variant", default="atty2d", choices=[v.value for v in Variant])
    t.add_argument("--context", type=_bool, nargs="?", const=True, default=False, help="contextualize source embeddings")
    t.add_argument("--task", choices=data.TOY_KINDS, help="generate a toy corpus instead of reading files")
    t.add_argument("--train-src")
    t.add_argument("--train-tgt")
    t.add_argument("--valid-src")
    t.add_argument("--valid-tgt")
    t.add_argument("--n-train", type=int, default=2000)
    t.add_argument("--n-valid", type=int, default=200)
    t.add_argument("--toy-vocab", type=int, default=20)
    t.add_argument("--toy-max-len", type=int, default=10)
    t.add_argument("--vocab-cap", type=int, default=30000)
    t.add_argument("--emb-dim", type=int, default=32)
    t.add_argument("--hidden-dim", type=int, default=32)
    t.add_argument("--align-hidden-dim", type=int, default=0, help="0 means 2 * hidden-dim")
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--max-len", type=int, default=50)
    t.add_argument("--valid-interval", type=int, default=250)
    t.add_argument("--patience", type=int, default=5)
    t.add_argument("--max-steps", type=int, default=20000)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--clip-norm", type=float, default=1.0)
    t.add_argument("--target-bleu", type=float, default=None)
    t.add_argument("--smooth-bleu", type=_bool, nargs="?", const=True, default=False)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", default="run", help="output directory")

    tr = sub.add_parser("translate", help="decode a file of (subword) source sentences")
    _add_config(tr)
    tr.add_argument("--checkpoint")
    tr.add_argument("--src-vocab")
    tr.add_argument("--tgt-vocab")
    tr.add_argument("--input")
    tr.add_argument("--output")
    tr.add_argument("--beam", type=int, default=12)
    tr.add_argument("--emit-align", metavar="DIR")
    tr.add_argument("--workers", type=int, default=1)

    sc = sub.add_parser("score", help="corpus BLEU of hypotheses against references")
    _add_config(sc)
    sc.add_argument("--hyp")
    sc.add_argument("--ref")
    sc.add_argument("--smooth", type=_bool, nargs="?", const=True, default=False)

    al = sub.add_parser("align", help="inspect an FGAT alignment tensor")
    _add_config(al)
    al.add_argument("fgat")
    mode = al.add_mutually_exclusive_group(required=True)
    mode.add_argument("--avg-dims", action="store_true")
    mode.add_argument("--avg-target", action="store_true")
    mode.add_argument("--slice", type=int, metavar="D")
    mode.add_argument("--top-dims", type=int, nargs=2, metavar=("T", "K"))
    al.add_argument("--dims", help="column range A:B of --avg-target to render")
    al.add_argument("--out", help="heatmap path (.pgm)")
    al.add_argument("--table", help="write the matrix as tab-separated text")

    b = sub.add_parser("bpe", help="learn, apply or undo BPE segmentation")
    _add_config(b)
    b.add_argument("mode", choices=("learn", "apply", "undo"))
    b.add_argument("--input")
    b.add_argument("--output")
    b.add_argument("--merges")
    b.add_argument("--n-merges", type=int, default=30000)
    b.add_argument("--min-frequency", type=int, default=2)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    sub = _subparser(parser, args.command)
    dests = {a.dest: a for a in sub._actions}
    values = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in dests or key in ("help", "config"):
            raise UsageError(f"{path}:{n}: unknown config key {key!r}")
        action = dests[key]
        value = value.strip()
        if isinstance(action, argparse._StoreTrueAction):
            values[key] = _bool(value)
        elif action.nargs in (2, "+", "*"):
            values[key] = [action.type(v) if action.type else v for v in value.split()]
        else:
            values[key] = action.type(value) if action.type else value
    sub.set_defaults(**values)
    # re-parse so explicit flags override file values
    return parser.parse_args(argv)


def _require(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


# -- commands -------------------------------------------------------------


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.task:
        train = data.toy_corpus(args.task, args.n_train, args.toy_vocab, args.toy_max_len, seed=args.seed)
        valid = data.toy_corpus(args.task, args.n_valid, args.toy_vocab, args.toy_max_len, seed=args.seed + 1)
        train.save(out / "train.src", out / "train.tgt")
        valid.save(out / "valid.src", out / "valid.tgt")
    else:
        train = data.ParallelCorpus.load(_require(args.train_src, "--train-src"), _require(args.train_tgt, "--train-tgt"))
        valid = data.ParallelCorpus.load(_require(args.valid_src, "--valid-src"), _require(args.valid_tgt, "--valid-tgt"))
    src_vocab = data.build_vocab(train.src, args.vocab_cap)
    tgt_vocab = data.build_vocab(train.tgt, args.vocab_cap)
    config = ModelConfig(
        variant=args.variant,
        contextualization=args.context,
        src_vocab=len(src_vocab),
        tgt_vocab=len(tgt_vocab),
        emb_dim=args.emb_dim,
        hidden_dim=args.hidden_dim,
        align_hidden_dim=args.align_hidden_dim or 2 * args.hidden_dim,
        seed=args.seed,
    )
    schedule = TrainSchedule(
        batch_size=args.batch_size,
        max_len=args.max_len,
        valid_interval=args.valid_interval,
        patience=args.patience,
        max_steps=args.max_steps,
        seed=args.seed,
        learning_rate=args.lr,
        clip_norm=args.clip_norm,
        target_bleu=args.target_bleu,
        smooth_bleu=args.smooth_bleu,
    )
    model = NMTModel.init(config)
    with open(out / "train.log", "w", encoding="utf-8") as log_file:
        best = early_stop_loop(
            model,
            encode_corpus(train, src_vocab, tgt_vocab),
            encode_corpus(valid, src_vocab, tgt_vocab),
            schedule,
            tgt_vocab,
            log_file=log_file,
        )
    save_checkpoint(best.model, out / "model.fgnmt")
    src_vocab.save(out / "src.vocab")
    tgt_vocab.save(out / "tgt.vocab")
    print(f"best step {best.step}\tvalid BLEU {best.bleu:.2f}\tcheckpoint {out / 'model.fgnmt'}")
    return 0


def cmd_translate(args) -> int:
    ckpt = _require(args.checkpoint, "checkpoint")
    src_vocab = data.Vocabulary.load(_require(args.src_vocab or ckpt.with_name("src.vocab"), "source vocabulary"))
    tgt_vocab = data.Vocabulary.load(_require(args.tgt_vocab or ckpt.with_name("tgt.vocab"), "target vocabulary"))
    model = load_checkpoint(ckpt)
    if len(src_vocab) != model.config.src_vocab or len(tgt_vocab) != model.config.tgt_vocab:
        raise UsageError(
            f"vocabulary sizes {len(src_vocab)}/{len(tgt_vocab)} do not match checkpoint "
            f"{model.config.src_vocab}/{model.config.tgt_vocab}"
        )
    if args.beam < 1:
        raise UsageError("--beam must be at least 1")
    lines = [data.tokenize(line) for line in data.read_lines(_require(args.input, "input file"))]
    results = translate(model, src_vocab, tgt_vocab, lines, beam=args.beam, workers=args.workers)
    text = [" ".join(toks) for toks, _ in results]
    if args.output:
        data.write_lines(args.output, text)
    else:
        for line in text:
            print(line)
    if args.emit_align:
        out = Path(args.emit_align)
        out.mkdir(parents=True, exist_ok=True)
        fp = model.fingerprint()
        for i, (src, (_, hyp)) in enumerate(zip(lines, results)):
            if not src:
                continue
            rec = analysis.AlignmentRecord(
                src, [tgt_vocab.to_token(w) for w in hyp.tokens], np.stack(hyp.alphas), model.config.variant, fp
            )
            analysis.save_fgat(rec, out / f"{i:05d}.fgat")
    return 0


def cmd_score(args) -> int:
    hyps = [data.tokenize(x) for x in data.read_lines(_require(args.hyp, "hypothesis file"))]
    refs = [data.tokenize(x) for x in data.read_lines(_require(args.ref, "reference file"))]
    print(bleu(hyps, refs, smoothing=args.smooth).line())
    return 0


def _write_table(path, matrix: np.ndarray, rows, cols) -> None:
    lines = ["\t" + "\t".join(cols)]
    lines += [label + "\t" + "\t".join(f"{v:.6g}" for v in row) for label, row in zip(rows, matrix)]
    data.write_lines(path, lines)


def cmd_align(args) -> int:
    rec = analysis.load_fgat(_require(args.fgat, "FGAT file"))
    dims = [f"d{d}" for d in range(rec.D)]
    if args.top_dims:
        t, k = args.top_dims
        try:
            ranked = analysis.top_dims(rec, t, k)
        except IndexError as exc:
            raise UsageError(str(exc)) from None
        for d, mass in ranked:
            print(f"{d}\t{mass:.6f}")
        return 0
    if args.avg_dims:
        matrix, rows, cols, tag = analysis.avg_over_dims(rec), rec.target, rec.source, "avg-dims"
    elif args.avg_target:
        matrix, rows, cols, tag = analysis.avg_over_target(rec), rec.source, dims, "avg-target"
        if args.dims:
            a, _, b = args.dims.partition(":")
            lo, hi = int(a or 0), int(b or rec.D)
            if not 0 <= lo < hi <= rec.D:
                raise UsageError(f"--dims {args.dims} outside 0:{rec.D}")
            matrix, cols = matrix[:, lo:hi], cols[lo:hi]
    else:
        try:
            matrix = analysis.slice_dim(rec, args.slice)
        except IndexError as exc:
            raise UsageError(str(exc)) from None
        rows, cols, tag = rec.target, rec.source, f"slice{args.slice}"
    out = Path(args.out) if args.out else Path(args.fgat).with_suffix(f".{tag}.pgm")
    analysis.heatmap(matrix, out, rows, cols)
    if args.table:
        _write_table(args.table, matrix, rows, cols)
    print(out)
    return 0


def cmd_bpe(args) -> int:
    src = _require(args.input, "input file")
    lines = [data.tokenize(x) for x in data.read_lines(src)]
    if args.mode == "learn":
        if not args.merges:
            raise UsageError("bpe learn needs --merges OUTPUT")
        data.learn_bpe(lines, args.n_merges, args.min_frequency).save(args.merges)
        return 0
    if args.mode == "apply":
        merges = data.BPEMerges.load(_require(args.merges, "merges file"))
        out = [" ".join(data.apply_bpe(merges, toks)) for toks in lines]
    else:
        out = [" ".join(data.unbpe(toks)) for toks in lines]
    if args.output:
        data.write_lines(args.output, out)
    else:
        for line in out:
            print(line)
    return 0


COMMANDS = {
    "train": cmd_train,
    "translate": cmd_translate,
    "score": cmd_score,
    "align": cmd_align,
    "bpe": cmd_bpe,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("FGNMT_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, argparse.ArgumentTypeError, ValueError) as exc:
        print(f"fgnmt: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"fgnmt: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (UsageError, DataError, ContractError, VocabularyError, FileNotFoundError) as exc:
        print(f"fgnmt: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fgnmt: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
