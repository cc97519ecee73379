"""End-to-end pipeline: tokenize, filter, train the reverse model,
backtranslate, filter synthetic pairs, merge, train the forward model,
and evaluate.  Every stage is seeded, so two runs with the same
configuration produce byte-identical artifacts.
"""

from __future__ import annotations

import logging
from pathlib import Path

from . import backtranslation as bt
from . import decoding
from . import metrics
from . import model as M
from . import subword
from . import training
from .corpus import (ParallelCorpus, corpus_stats, langid_filter,
                     length_filter, train_langid)
from .errors import DataError
from .subword import SubwordModel, normalize

logger = logging.getLogger(__name__)


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def _write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def _load_bitext(cfg_corpus: dict, prefix: str) -> ParallelCorpus:
    src = cfg_corpus[f"{prefix}_source"]
    tgt = cfg_corpus[f"{prefix}_target"]
    if src is None or tgt is None:
        raise DataError(f"corpus.{prefix}_source/_target must be set")
    return ParallelCorpus.load(src, tgt)


def _encode_pairs(corpus: ParallelCorpus, src_tok: SubwordModel,
                  tgt_tok: SubwordModel, max_positions: int
                  ) -> list[tuple[list[int], list[int]]]:
    """Subword-encode a corpus, dropping pairs that encode empty or would
    exceed the model's position table."""
    out = []
    dropped = 0
    limit = max_positions - 1  # room for eos/bos
    for pair in corpus:
        s = src_tok.encode(pair.source)
        t = tgt_tok.encode(pair.target)
        if not s or not t or len(s) > limit or len(t) > limit:
            dropped += 1
            continue
        out.append((s, t))
    if dropped:
        logger.info("dropped %d/%d pairs while encoding", dropped, len(corpus))
    return out


def _train_tokenizer(sentences: list[str], cfg_tok: dict) -> SubwordModel:
    if cfg_tok["kind"] == "bpe":
        return subword.train_bpe(sentences, cfg_tok["vocab_budget"])
    return subword.train_unigram(
        sentences, cfg_tok["vocab_budget"],
        seed_multiplier=cfg_tok["seed_multiplier"],
        prune_fraction=cfg_tok["prune_fraction"])


def _train_settings(cfg: dict, seed: int,
                    checkpoint_dir=None) -> training.TrainSettings:
    t = cfg["training"]
    return training.TrainSettings(
        max_epochs=t["max_epochs"], patience=t["patience"],
        batch_token_budget=t["batch_token_budget"], seed=seed,
        momentum=t["momentum"], clip_norm=t["clip_norm"],
        accumulation=t["accumulation"],
        schedule=training.Schedule(**t["schedule"]),
        checkpoint_dir=checkpoint_dir)


def _model_config(cfg: dict, source_vocab: int, target_vocab: int
                  ) -> M.ModelConfig:
    return M.ModelConfig(source_vocab=source_vocab, target_vocab=target_vocab,
                         **cfg["model"])


def translate_corpus(params, config: M.ModelConfig, sentences: list[str],
                     src_tok, tgt_tok, beam_width: int, max_len: int,
                     length_penalty: float) -> list[str]:
    """Best-hypothesis translation of each sentence (empty when the
    source encodes to nothing)."""
    out = []
    limit = config.max_positions - 1
    for sentence in sentences:
        ids = src_tok.encode(sentence)
        if not ids:
            out.append("")
            continue
        if len(ids) > limit:
            ids = ids[:limit]
        hyps = decoding.translate(params, config, ids, beam_width, max_len,
                                  length_penalty)
        out.append(tgt_tok.decode(list(hyps[0].tokens)))
    return out


def apply_filters(corpus: ParallelCorpus, cfg: dict) -> ParallelCorpus:
    """Language-id and length hygiene filters per the configuration."""
    fcfg = cfg["filter"]
    if fcfg["langid_enabled"]:
        src_lang = cfg["corpus"]["source_lang"]
        tgt_lang = cfg["corpus"]["target_lang"]
        samples = [(p.source, src_lang) for p in corpus]
        samples += [(p.target, tgt_lang) for p in corpus]
        model = train_langid(samples)
        before = len(corpus)
        corpus = langid_filter(corpus, model, src_lang, tgt_lang,
                               fcfg["langid_threshold"])
        logger.info("langid filter kept %d/%d pairs", len(corpus), before)
    if fcfg["length_enabled"]:
        before = len(corpus)
        corpus = length_filter(corpus, fcfg["min_tokens"], fcfg["max_tokens"],
                               side=fcfg["length_side"])
        logger.info("length filter kept %d/%d pairs", len(corpus), before)
    return corpus


def run_pipeline(cfg: dict) -> metrics.EvalReport:
    """Run every stage and return the test-set evaluation report.

    Artifacts land under ``cfg['output_dir']``: tokenizers, checkpoints,
    the synthetic corpus, test hypotheses and the evaluation report.
    """
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["seed"]

    train_corpus = _load_bitext(cfg["corpus"], "train")
    dev_corpus = _load_bitext(cfg["corpus"], "dev")
    test_corpus = _load_bitext(cfg["corpus"], "test")
    logger.info("train stats: %s", corpus_stats(train_corpus))

    train_corpus = apply_filters(train_corpus, cfg)
    if not len(train_corpus):
        raise DataError("no training pairs left after filtering")

    src_tok = _train_tokenizer([p.source for p in train_corpus],
                               cfg["tokenizer"])
    tgt_tok = _train_tokenizer([p.target for p in train_corpus],
                               cfg["tokenizer"])
    src_tok.save(out / "tokenizer.source")
    tgt_tok.save(out / "tokenizer.target")

    max_pos = cfg["model"]["max_positions"]
    train_pairs = _encode_pairs(train_corpus, src_tok, tgt_tok, max_pos)
    dev_pairs = _encode_pairs(dev_corpus, src_tok, tgt_tok, max_pos)
    if not train_pairs or not dev_pairs:
        raise DataError("train or dev set empty after encoding")

    bt_cfg = cfg["backtranslation"]
    mono_path = cfg["corpus"]["monolingual_target"]
    merged_pairs = train_pairs
    if bt_cfg["enabled"] and mono_path is not None:
        logger.info("training reverse model")
        rev_config = _model_config(cfg, tgt_tok.vocab_size, src_tok.vocab_size)
        rev_result = training.train_model(
            rev_config, [(t, s) for s, t in train_pairs],
            [(t, s) for s, t in dev_pairs],
            _train_settings(cfg, seed, out / "reverse"))

        monolingual = [normalize(l) for l in _read_lines(mono_path)]
        monolingual = [l for l in monolingual if l]
        synthetic = bt.backtranslate(
            rev_result.params, rev_config, monolingual, tgt_tok, src_tok,
            beam_width=cfg["decoding"]["beam_width"],
            max_len=cfg["decoding"]["max_len"],
            length_penalty=cfg["decoding"]["length_penalty"])
        filtered = bt.filter_synthetic(
            synthetic, bt_cfg["confidence_threshold"],
            bt_cfg["min_tokens"], bt_cfg["max_tokens"],
            side=bt_cfg["length_side"],
            tokenizer=lambda text: src_tok.encode(text))
        logger.info("backtranslation: %d synthetic, %d after filtering",
                    len(synthetic), len(filtered))
        if bt_cfg["merge_policy"] == "concat-with-provenance-tag":
            filtered.save(out / "synthetic.source", out / "synthetic.target",
                          out / "synthetic.meta")
        else:
            filtered.save(out / "synthetic.source", out / "synthetic.target")
        merged = bt.merge_corpora(train_corpus, filtered,
                                  bt_cfg["merge_policy"])
        merged_pairs = _encode_pairs(merged, src_tok, tgt_tok, max_pos)

    logger.info("training forward model on %d pairs", len(merged_pairs))
    fwd_config = _model_config(cfg, src_tok.vocab_size, tgt_tok.vocab_size)
    fwd_result = training.train_model(
        fwd_config, merged_pairs, dev_pairs,
        _train_settings(cfg, seed, out / "forward"))

    test_sources = [p.source for p in test_corpus]
    references = [normalize(p.target) for p in test_corpus]
    hypotheses = translate_corpus(
        fwd_result.params, fwd_config, test_sources, src_tok, tgt_tok,
        cfg["decoding"]["beam_width"], cfg["decoding"]["max_len"],
        cfg["decoding"]["length_penalty"])
    _write_lines(out / "hypotheses.txt", hypotheses)

    report = metrics.evaluate(hypotheses, references)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    logger.info("evaluation: BLEU %.2f RIBES %.4f", report.bleu, report.ribes)
    return report
