"""Command-line entry points: ``train``, ``eval``, ``repr`` and ``topics``.

Exit codes: 0 success, 2 usage or input error, 3 checkpoint/vocabulary
incompatibility, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from docnade.checkpoint import CheckpointError, TrainConfig, VocabularyMismatch, load_checkpoint, save_checkpoint
from docnade.corpus import CorpusError, Vocabulary, encode_document, hold_out_dev, load_corpus, read_corpus_file
from docnade.evaluation import (
    DEFAULT_FRACTIONS,
    DEFAULT_L2_GRID,
    EvalReport,
    UnknownWordError,
    classify,
    coherence_npmi,
    perplexity_report,
    representations,
    resolve_threads,
    retrieval_report,
    topic_words,
    word_neighbors,
)
from docnade.model import ACTIVATIONS, MODEL_KINDS, OBJECTIVES, OUTPUT_KINDS
from docnade.trainer import sub_rng, train

logger = logging.getLogger("docnade")

EXIT_OK, EXIT_USAGE, EXIT_COMPAT, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require_file(path, what="file"):
    if path is not None and not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")


def _write_manifest(path, subcommand, config, inputs, outputs, seed, started):
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _digest(p) for p in inputs if p is not None},
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _corpus_paths(args) -> dict:
    paths = {"train": args.corpus, "dev": args.dev, "test": args.test}
    for split, p in paths.items():
        _require_file(p, f"{split} corpus file")
    return {k: v for k, v in paths.items() if v is not None}


def _emit(text: str, out):
    if out:
        Path(out).write_text(text + ("" if text.endswith("\n") else "\n"), encoding="utf-8")
    else:
        print(text)


# --------------------------------------------------------------------------- train


def cmd_train(args) -> int:
    started = time.time()
    if args.corpus is None:
        raise UsageError("--corpus is required")
    paths = _corpus_paths(args)
    vocab = None
    if args.vocab:
        _require_file(args.vocab, "vocabulary file")
        vocab = Vocabulary.load(args.vocab)
    corpus = load_corpus(paths, vocab=vocab, max_vocab=args.vocab_size, lowercase=not args.no_lowercase)
    if not corpus.dev:
        n_train = len(corpus.train)
        n_dev = max(1, min(50, n_train // 10))
        corpus = hold_out_dev(corpus, n_dev, sub_rng(args.seed, "dev_split"))
        logger.info("no dev file given; held out %d training documents", n_dev)

    config = TrainConfig(
        learning_rate=args.lr, hidden_size=args.hidden, passes=args.passes, activation=args.activation,
        scaling=args.scaling, seed=args.seed, model_kind=args.model, output_kind=args.output,
        objective=args.objective, selection_metric=args.selection, init_scale=args.init_scale,
        eval_every=args.eval_every, ir_fraction=args.ir_fraction, include_all_words=args.include_all_words,
    )
    if config.selection_metric == "dev_ir_precision" and not all(d.labels for d in corpus.documents):
        raise UsageError("--selection dev_ir_precision needs a labeled corpus")

    def progress(entry):
        print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in entry.items()),
              flush=True)

    ckpt = train(corpus, config, threads=args.threads, progress=progress)
    out = Path(args.out)
    save_checkpoint(ckpt, out)
    vocab_path = out.with_name(out.name + ".vocab")
    corpus.vocab.save(vocab_path)
    meta_path = out.with_name(out.name + ".meta.json")
    manifest = args.manifest or str(out) + ".manifest.json"
    _write_manifest(manifest, "train", config.to_dict(), [*paths.values(), args.vocab],
                    [out, meta_path, vocab_path], args.seed, started)
    print(f"best pass {ckpt.metadata['best_pass']}: {config.selection_metric}="
          f"{ckpt.metadata['best_dev_metric']:.6g}; checkpoint written to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------- eval


def _eval_corpus(args, ckpt):
    paths = _corpus_paths(args)
    if args.vocab:
        _require_file(args.vocab, "vocabulary file")
        vocab = Vocabulary.load(args.vocab)
    else:
        vocab = ckpt.vocab
    corpus = load_corpus(paths, vocab=vocab, lowercase=not args.no_lowercase)
    ckpt.check_vocab(corpus.vocab)
    return corpus


def _render(report: EvalReport, fmt: str) -> str:
    return report.to_json() if fmt == "json" else report.to_text()


def cmd_eval(args) -> int:
    started = time.time()
    _require_file(args.checkpoint, "checkpoint")
    ckpt = load_checkpoint(args.checkpoint)
    threads = resolve_threads(args.threads)
    fp = ckpt.config.fingerprint()
    task = args.task

    if task == "neighbors":
        if not args.word:
            raise UsageError("--word is required for --task neighbors")
        pairs = word_neighbors(ckpt, args.word, args.k)
        report = EvalReport("word_neighbors", {tok: cos for tok, cos in pairs}, fp, meta={"word": args.word})
    elif task == "topics":
        topics = topic_words(ckpt, args.top_n)
        report = EvalReport("topics", {f"topic{t.topic_id}": t.tokens for t in topics}, fp)
    else:
        if args.corpus is None and args.test is None and args.dev is None:
            raise UsageError(f"--task {task} needs corpus files")
        corpus = _eval_corpus(args, ckpt)
        if task == "ppl":
            report = perplexity_report(ckpt, corpus, args.split, threads)
        elif task == "ir":
            if not corpus.train:
                raise UsageError("--task ir needs --corpus (the training documents to retrieve from)")
            report = retrieval_report(ckpt, corpus, args.fractions or DEFAULT_FRACTIONS, args.split, threads)
            if args.csv:
                Path(args.csv).write_text(report.ir_csv(), encoding="utf-8")
        elif task == "classify":
            report = classify(ckpt, corpus, args.l2_grid or DEFAULT_L2_GRID, eval_split=args.split)
        elif task == "coherence":
            topics = topic_words(ckpt, args.top_n)
            reference = corpus.train or corpus.split(args.split)
            scores, mean = coherence_npmi(topics, reference, args.window)
            report = EvalReport("coherence_npmi", {"mean": mean, **{f"topic{i}": s for i, s in enumerate(scores)}},
                                fp, meta={"window": args.window, "top_n": args.top_n})
        else:  # pragma: no cover - argparse restricts choices
            raise UsageError(f"unknown task {task}")

    _emit(_render(report, args.format), args.out)
    if args.manifest:
        _write_manifest(args.manifest, "eval", vars_for_manifest(args), [args.checkpoint, args.corpus, args.dev,
                        args.test], [args.out] if args.out else [], ckpt.config.seed, started)
    return EXIT_OK


def vars_for_manifest(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


# --------------------------------------------------------------------------- repr


def cmd_repr(args) -> int:
    started = time.time()
    _require_file(args.checkpoint, "checkpoint")
    _require_file(args.input, "input corpus file")
    ckpt = load_checkpoint(args.checkpoint)
    records = read_corpus_file(args.input, lowercase=not args.no_lowercase)
    H = ckpt.params.H
    docs, slots = [], []
    for i, (_, tokens) in enumerate(records):
        try:
            docs.append(encode_document(tokens, ckpt.vocab, "skip"))
            slots.append(i)
        except CorpusError:
            logger.warning("document %d is empty after OOV filtering; writing NaN row", i + 1)
    reps = np.full((len(records), H), np.nan)
    if docs:
        reps[slots] = representations(ckpt, docs, threads=resolve_threads(args.threads))
    lines = [",".join(f"h{j}" for j in range(H))]
    lines += [",".join("nan" if math.isnan(x) else repr(float(x)) for x in row) for row in reps]
    _emit("\n".join(lines), args.out)
    if args.manifest:
        _write_manifest(args.manifest, "repr", vars_for_manifest(args), [args.checkpoint, args.input],
                        [args.out] if args.out else [], ckpt.config.seed, started)
    return EXIT_OK


# --------------------------------------------------------------------------- topics


def cmd_topics(args) -> int:
    _require_file(args.checkpoint, "checkpoint")
    ckpt = load_checkpoint(args.checkpoint)
    topics = topic_words(ckpt, args.top_n)
    mean = None
    if args.corpus:
        _require_file(args.corpus, "reference corpus file")
        reference = load_corpus(args.corpus, vocab=ckpt.vocab, lowercase=not args.no_lowercase).train
        _, mean = coherence_npmi(topics, reference, args.window)
    if args.format == "json":
        payload = {"topics": [{"topic": t.topic_id, "words": t.tokens, "coherence": t.coherence} for t in topics]}
        if mean is not None:
            payload["mean_coherence"] = mean
        _emit(json.dumps(payload, indent=2), args.out)
    else:
        lines = []
        for t in topics:
            score = "" if t.coherence is None else f"  npmi={t.coherence:.4f}"
            lines.append(f"topic {t.topic_id:>4}: {' '.join(t.tokens)}{score}")
        if mean is not None:
            lines.append(f"mean npmi: {mean:.4f}")
        _emit("\n".join(lines), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def _add_corpus_flags(p, required=False):
    p.add_argument("--corpus", "--train", dest="corpus", required=required, help="training split file")
    p.add_argument("--dev", help="dev split file")
    p.add_argument("--test", help="test split file")
    p.add_argument("--vocab", help="vocabulary file (one token per line)")
    p.add_argument("--no-lowercase", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="docnade", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DocNADE / iDocNADE model")
    _add_corpus_flags(p)
    p.add_argument("--vocab-size", type=int, default=None, help="keep the N most frequent training tokens")
    p.add_argument("--model", choices=MODEL_KINDS, default="idocnade")
    p.add_argument("--hidden", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--passes", type=int, default=100)
    p.add_argument("--activation", choices=ACTIVATIONS, default="sigmoid")
    p.add_argument("--scaling", action="store_true", help="multiply hidden biases by document length")
    p.add_argument("--output", choices=OUTPUT_KINDS, default="tree")
    p.add_argument("--objective", choices=OBJECTIVES, default="exact")
    p.add_argument("--selection", choices=("dev_ppl", "dev_ir_precision"), default="dev_ppl")
    p.add_argument("--init-scale", type=float, default=1.0)
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--ir-fraction", type=float, default=0.02)
    p.add_argument("--include-all-words", action="store_true",
                   help="document vectors use every word in both context sums")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="model.ckpt")
    p.add_argument("--manifest")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    _add_corpus_flags(p)
    p.add_argument("--task", choices=("ppl", "ir", "classify", "coherence", "neighbors", "topics"), default="ppl")
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.add_argument("--fractions", type=_float_list)
    p.add_argument("--l2-grid", type=_float_list)
    p.add_argument("--word")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--out")
    p.add_argument("--csv", help="also write (fraction, precision) CSV for --task ir")
    p.add_argument("--manifest")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("repr", help="write one document vector per input line as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--manifest")
    p.add_argument("--threads", type=int)
    p.add_argument("--no-lowercase", action="store_true")
    p.set_defaults(func=cmd_repr)

    p = sub.add_parser("topics", help="list the top words of every hidden unit")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--corpus", help="reference corpus for NPMI coherence")
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("--out")
    p.add_argument("--no-lowercase", action="store_true")
    p.set_defaults(func=cmd_topics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, CorpusError, FileNotFoundError, UnknownWordError) as exc:
        print(f"docnade {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        if isinstance(exc, (VocabularyMismatch, CheckpointError)):
            print(f"docnade {args.command}: incompatible: {exc}", file=sys.stderr)
            return EXIT_COMPAT
        print(f"docnade {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"docnade {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
