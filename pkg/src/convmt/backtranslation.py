"""Backtranslation augmentation: translate monolingual target-language
text with a reverse-direction model, filter the synthetic pairs by
confidence and length, and merge them with real bitext.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from . import decoding
from .corpus import (ParallelCorpus, SentencePair, SYNTHETIC,
                     length_filter, whitespace_tokens)
from .errors import DataError

logger = logging.getLogger(__name__)

MERGE_POLICIES = ("concat", "concat-with-provenance-tag")


@dataclass
class AugmentationPlan:
    """Settings for one augmentation round."""

    confidence_threshold: float = 0.3
    min_tokens: int = 10
    max_tokens: int = 30
    length_side: str = "source"  # the synthetic side
    beam_width: int = 10
    max_len: int = 64
    length_penalty: float = 1.0
    merge_policy: str = "concat-with-provenance-tag"

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise DataError("confidence threshold must be in [0, 1]")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise DataError("length bounds must satisfy 1 <= min <= max")
        if self.merge_policy not in MERGE_POLICIES:
            raise DataError(f"unknown merge policy {self.merge_policy!r}")


def backtranslate(reverse_params, reverse_config, monolingual: list[str],
                  input_tokenizer, output_tokenizer,
                  beam_width: int = 10, max_len: int = 64,
                  length_penalty: float = 1.0) -> ParallelCorpus:
    """Translate monolingual target-language sentences into synthetic
    sources.

    Each sentence becomes a (synthetic source, real target) pair with
    the reverse model's best-hypothesis confidence attached; sentences
    whose best hypothesis is unfinished or empty are dropped (counted in
    the log).
    """
    pairs = []
    dropped = 0
    for sentence in monolingual:
        ids = input_tokenizer.encode(sentence)
        if not ids:
            dropped += 1
            continue
        hyps = decoding.translate(reverse_params, reverse_config, ids,
                                  beam_width, max_len, length_penalty)
        best = hyps[0]
        if not best.finished:
            dropped += 1
            continue
        text = output_tokenizer.decode(list(best.tokens))
        if not text.strip():
            dropped += 1
            continue
        pairs.append(SentencePair(
            source=text, target=sentence, provenance=SYNTHETIC,
            confidence=decoding.translation_confidence(best)))
    if dropped:
        logger.info("backtranslate: dropped %d of %d sentences",
                    dropped, len(monolingual))
    return ParallelCorpus(pairs)


def filter_synthetic(corpus: ParallelCorpus, confidence_threshold: float,
                     min_tokens: int, max_tokens: int,
                     side: str = "source",
                     tokenizer=whitespace_tokens) -> ParallelCorpus:
    """Keep synthetic pairs with confidence >= threshold and token length
    inside the inclusive bounds.  Rejects corpora containing real pairs;
    this filter is for synthetic data only."""
    if not 0.0 <= confidence_threshold <= 1.0:
        raise DataError("confidence threshold must be in [0, 1]")
    for i, pair in enumerate(corpus):
        if pair.provenance != SYNTHETIC:
            raise DataError(f"pair {i} is not synthetic; filter_synthetic "
                            "applies only to backtranslated data")
    confident = ParallelCorpus(
        p for p in corpus if p.confidence >= confidence_threshold)
    return length_filter(confident, min_tokens, max_tokens, side=side,
                         tokenizer=tokenizer)


def merge_corpora(real: ParallelCorpus, synthetic: ParallelCorpus,
                  policy: str = "concat-with-provenance-tag"
                  ) -> ParallelCorpus:
    """Deterministic concatenation, real pairs first, provenance
    preserved.  The policy controls whether the provenance side file is
    written when the merged corpus is persisted."""
    if policy not in MERGE_POLICIES:
        raise DataError(f"unknown merge policy {policy!r}")
    return ParallelCorpus(tuple(real) + tuple(synthetic))
