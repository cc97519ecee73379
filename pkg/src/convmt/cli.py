"""Command-line surface.

Each subcommand is a thin wrapper over one module operation;
``run-pipeline`` composes them end to end.  Errors map to distinct exit
codes: 2 configuration, 3 missing file, 4 format/version, 5 data/shape,
1 unexpected.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import backtranslation as bt
from . import metrics
from . import pipeline
from . import subword
from . import training
from .config import describe_defaults, load_config
from .corpus import ParallelCorpus, langid_filter, length_filter, train_langid
from .errors import ConfigError, DataError, FormatError, ShapeError

logger = logging.getLogger("convmt")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_MISSING_FILE = 3
EXIT_FORMAT = 4
EXIT_DATA = 5


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        datefmt="%Y-%m-%dT%H:%M:%S")


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def _write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------

def cmd_train_tokenizer(args) -> int:
    sentences = _read_lines(args.input)
    if args.kind == "bpe":
        model = subword.train_bpe(sentences, args.vocab_budget)
    else:
        model = subword.train_unigram(
            sentences, args.vocab_budget,
            seed_multiplier=args.seed_multiplier,
            prune_fraction=args.prune_fraction)
    model.save(args.output)
    logger.info("tokenizer saved to %s (%d pieces)", args.output,
                model.vocab_size)
    return EXIT_OK


def cmd_encode(args) -> int:
    model = subword.SubwordModel.load(args.model)
    lines = _read_lines(args.input)
    if args.decode:
        out = [model.decode([int(x) for x in line.split()]) for line in lines]
    else:
        out = [" ".join(str(i) for i in model.encode(line)) for line in lines]
    _write_lines(args.output, out)
    return EXIT_OK


def cmd_filter_corpus(args) -> int:
    corpus = ParallelCorpus.load(args.source, args.target)
    if args.langid_threshold is not None:
        samples = [(p.source, args.source_lang) for p in corpus]
        samples += [(p.target, args.target_lang) for p in corpus]
        model = train_langid(samples)
        corpus = langid_filter(corpus, model, args.source_lang,
                               args.target_lang, args.langid_threshold)
    if args.min_tokens is not None or args.max_tokens is not None:
        lo = args.min_tokens if args.min_tokens is not None else 1
        hi = args.max_tokens if args.max_tokens is not None else 10 ** 9
        corpus = length_filter(corpus, lo, hi, side=args.side)
    corpus.save(args.out_source, args.out_target)
    logger.info("kept %d pairs", len(corpus))
    return EXIT_OK


def _load_encoded(cfg, src_tok, tgt_tok, prefix, reverse):
    corpus = pipeline._load_bitext(cfg["corpus"], prefix)
    pairs = pipeline._encode_pairs(corpus, src_tok, tgt_tok,
                                   cfg["model"]["max_positions"])
    if reverse:
        pairs = [(t, s) for s, t in pairs]
    return pairs


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    src_tok = subword.SubwordModel.load(args.source_tokenizer)
    tgt_tok = subword.SubwordModel.load(args.target_tokenizer)
    if args.reverse:
        src_tok, tgt_tok = tgt_tok, src_tok
    train_pairs = _load_encoded(cfg, src_tok, tgt_tok, "train", False)
    dev_pairs = _load_encoded(cfg, src_tok, tgt_tok, "dev", False)
    config = pipeline._model_config(cfg, src_tok.vocab_size,
                                    tgt_tok.vocab_size)
    settings = pipeline._train_settings(cfg, cfg["seed"], args.output_dir)
    result = training.train_model(config, train_pairs, dev_pairs, settings)
    logger.info("best validation loss %.6f at epoch %d",
                min(result.validation_losses), result.best_epoch)
    return EXIT_OK


def cmd_translate(args) -> int:
    ckpt = training.Checkpoint.load(args.checkpoint)
    params = ckpt.restore_params()
    src_tok = subword.SubwordModel.load(args.source_tokenizer)
    tgt_tok = subword.SubwordModel.load(args.target_tokenizer)
    sentences = _read_lines(args.input)
    hyps = pipeline.translate_corpus(
        params, ckpt.config, sentences, src_tok, tgt_tok,
        args.beam_width, args.max_len, args.length_penalty)
    _write_lines(args.output, hyps)
    return EXIT_OK


def cmd_backtranslate(args) -> int:
    ckpt = training.Checkpoint.load(args.checkpoint)
    params = ckpt.restore_params()
    in_tok = subword.SubwordModel.load(args.input_tokenizer)
    out_tok = subword.SubwordModel.load(args.output_tokenizer)
    monolingual = [l for l in map(subword.normalize, _read_lines(args.input))
                   if l]
    synthetic = bt.backtranslate(params, ckpt.config, monolingual,
                                 in_tok, out_tok, args.beam_width,
                                 args.max_len, args.length_penalty)
    if args.confidence_threshold > 0 or args.min_tokens > 1 \
            or args.max_tokens < 10 ** 9:
        synthetic = bt.filter_synthetic(
            synthetic, args.confidence_threshold, args.min_tokens,
            args.max_tokens, tokenizer=lambda t: out_tok.encode(t))
    synthetic.save(args.out_source, args.out_target, args.out_meta)
    logger.info("wrote %d synthetic pairs", len(synthetic))
    return EXIT_OK


def cmd_average_checkpoints(args) -> int:
    checkpoints = [training.Checkpoint.load(p) for p in args.inputs]
    averaged = training.average_checkpoints(checkpoints)
    averaged.save(args.output)
    logger.info("averaged %d checkpoints into %s", len(checkpoints),
                args.output)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    hyps = [subword.normalize(l) for l in _read_lines(args.hypotheses)]
    refs = [subword.normalize(l) for l in _read_lines(args.references)]
    report = metrics.evaluate(hyps, refs)
    sys.stdout.write(report.to_text())
    if args.output_json:
        with open(args.output_json, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    return EXIT_OK


def cmd_run_pipeline(args) -> int:
    cfg = load_config(args.config, args.set)
    pipeline.run_pipeline(cfg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convmt",
        description="Convolutional seq2seq translation pipeline kit.",
        epilog="Config keys and defaults:\n" + describe_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-tokenizer", help="train a subword model")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--kind", choices=["bpe", "unigram"], default="unigram")
    p.add_argument("--vocab-budget", type=int, default=8000)
    p.add_argument("--seed-multiplier", type=float, default=4.0)
    p.add_argument("--prune-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_train_tokenizer)

    p = sub.add_parser("encode", help="subword-encode (or decode) a file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--decode", action="store_true",
                   help="interpret input lines as id sequences and decode")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("filter-corpus", help="language-id and length filters")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out-source", required=True)
    p.add_argument("--out-target", required=True)
    p.add_argument("--source-lang", default="en")
    p.add_argument("--target-lang", default="hi")
    p.add_argument("--langid-threshold", type=float, default=None,
                   help="enable language-id filtering at this threshold")
    p.add_argument("--min-tokens", type=int, default=None)
    p.add_argument("--max-tokens", type=int, default=None)
    p.add_argument("--side", choices=["source", "target", "both"],
                   default="both")
    p.set_defaults(func=cmd_filter_corpus)

    p = sub.add_parser("train", help="train a translation model")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--source-tokenizer", required=True)
    p.add_argument("--target-tokenizer", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--reverse", action="store_true",
                   help="train the target-to-source model")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="beam-search translate a file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--source-tokenizer", required=True)
    p.add_argument("--target-tokenizer", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--beam-width", type=int, default=10)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--length-penalty", type=float, default=1.0)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("backtranslate",
                       help="translate monolingual data into synthetic pairs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input-tokenizer", required=True,
                   help="tokenizer of the monolingual (input) language")
    p.add_argument("--output-tokenizer", required=True,
                   help="tokenizer of the synthetic (output) language")
    p.add_argument("--input", required=True)
    p.add_argument("--out-source", required=True)
    p.add_argument("--out-target", required=True)
    p.add_argument("--out-meta", required=True)
    p.add_argument("--beam-width", type=int, default=10)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--length-penalty", type=float, default=1.0)
    p.add_argument("--confidence-threshold", type=float, default=0.0)
    p.add_argument("--min-tokens", type=int, default=1)
    p.add_argument("--max-tokens", type=int, default=10 ** 9)
    p.set_defaults(func=cmd_backtranslate)

    p = sub.add_parser("average-checkpoints",
                       help="elementwise mean of model parameters")
    p.add_argument("--output", required=True)
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_average_checkpoints)

    p = sub.add_parser("evaluate", help="BLEU and RIBES for a hypothesis file")
    p.add_argument("--hypotheses", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--output-json", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-pipeline", help="run every stage end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_run_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except ConfigError as err:
        logger.error("configuration error: %s", err)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        logger.error("missing file: %s", err)
        return EXIT_MISSING_FILE
    except FormatError as err:
        logger.error("format error: %s", err)
        return EXIT_FORMAT
    except (DataError, ShapeError) as err:
        logger.error("data error: %s", err)
        return EXIT_DATA
    except Exception as err:  # pragma: no cover
        logger.exception("unexpected error: %s", err)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
