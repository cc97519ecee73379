"""Parallel-corpus data model, hygiene filters, batching and statistics.

A corpus is two aligned line-per-sentence UTF-8 files plus an optional
tab-separated side file carrying provenance (real vs synthetic) and,
for synthetic pairs, the backtranslation confidence.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError
from .subword import normalize

REAL = "real"
SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class SentencePair:
    source: str
    target: str
    provenance: str = REAL
    confidence: float | None = None

    def __post_init__(self):
        if self.provenance not in (REAL, SYNTHETIC):
            raise DataError(f"bad provenance {self.provenance!r}")
        if not normalize(self.source) or not normalize(self.target):
            raise DataError("sentence pair has an empty side")
        if self.provenance == SYNTHETIC:
            if self.confidence is None or not 0.0 <= self.confidence <= 1.0:
                raise DataError("synthetic pairs need a confidence in [0,1]")
        elif self.confidence is not None:
            raise DataError("real pairs must not carry a confidence")


class ParallelCorpus:
    """Immutable ordered collection of sentence pairs."""

    def __init__(self, pairs: Iterable[SentencePair]):
        self.pairs: tuple[SentencePair, ...] = tuple(pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[SentencePair]:
        return iter(self.pairs)

    def __getitem__(self, i) -> SentencePair:
        return self.pairs[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, ParallelCorpus) and self.pairs == other.pairs

    @classmethod
    def from_texts(cls, sources: Sequence[str], targets: Sequence[str],
                   provenance: str = REAL,
                   confidences: Sequence[float] | None = None
                   ) -> "ParallelCorpus":
        if len(sources) != len(targets):
            raise DataError(f"misaligned bitext: {len(sources)} source lines "
                            f"vs {len(targets)} target lines")
        pairs = []
        for i, (s, t) in enumerate(zip(sources, targets)):
            conf = confidences[i] if confidences is not None else None
            pairs.append(SentencePair(s, t, provenance, conf))
        return cls(pairs)

    @classmethod
    def load(cls, source_path, target_path, meta_path=None) -> "ParallelCorpus":
        src = _read_lines(source_path)
        tgt = _read_lines(target_path)
        if len(src) != len(tgt):
            raise DataError(
                f"misaligned bitext: {source_path} has {len(src)} lines, "
                f"{target_path} has {len(tgt)}")
        if meta_path is None:
            return cls.from_texts(src, tgt)
        meta = _read_lines(meta_path)
        if len(meta) != len(src):
            raise DataError(f"meta file {meta_path} has {len(meta)} lines, "
                            f"expected {len(src)}")
        pairs = []
        for s, t, m in zip(src, tgt, meta):
            fields = m.split("\t")
            prov = fields[0]
            conf = float(fields[1]) if len(fields) > 1 and fields[1] else None
            pairs.append(SentencePair(s, t, prov, conf))
        return cls(pairs)

    def save(self, source_path, target_path, meta_path=None) -> None:
        _write_lines(source_path, [p.source for p in self.pairs])
        _write_lines(target_path, [p.target for p in self.pairs])
        if meta_path is not None:
            lines = []
            for p in self.pairs:
                conf = repr(p.confidence) if p.confidence is not None else ""
                lines.append(f"{p.provenance}\t{conf}")
            _write_lines(meta_path, lines)


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def _write_lines(path, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# language identification (character n-gram Naive Bayes)
# ---------------------------------------------------------------------------

@dataclass
class LangIdModel:
    """Per-language character n-gram log-probability tables (n = 1..3)
    with add-alpha smoothing, plus a language prior.

    Each per-order table includes an explicit unseen-gram bucket so the
    distribution sums to one exactly.
    """

    languages: list[str]
    orders: tuple[int, ...]
    tables: dict[str, dict[int, dict[str, float]]]  # lang -> n -> gram -> logp
    unk_log_probs: dict[str, dict[int, float]]      # lang -> n -> logp
    log_priors: dict[str, float]
    alpha: float

    def log_score(self, text: str, lang: str) -> float:
        score = self.log_priors[lang]
        for n in self.orders:
            table = self.tables[lang][n]
            unk = self.unk_log_probs[lang][n]
            for gram in _char_ngrams(text, n):
                score += table.get(gram, unk)
        return score

    def posteriors(self, text: str) -> dict[str, float]:
        """p(language | text); an empty text returns the prior."""
        scores = {lang: self.log_score(text, lang) for lang in self.languages}
        m = max(scores.values())
        exp = {lang: math.exp(s - m) for lang, s in scores.items()}
        z = sum(exp.values())
        return {lang: e / z for lang, e in exp.items()}

    def classify(self, text: str) -> tuple[str, float]:
        post = self.posteriors(text)
        lang = max(post, key=lambda l: (post[l], l))
        return lang, post[lang]


def _char_ngrams(text: str, n: int) -> Iterator[str]:
    for i in range(len(text) - n + 1):
        yield text[i:i + n]


def train_langid(samples: Sequence[tuple[str, str]], alpha: float = 0.1,
                 orders: tuple[int, ...] = (1, 2, 3),
                 min_samples_per_language: int = 100) -> LangIdModel:
    """Smoothed character n-gram Naive Bayes language classifier."""
    by_lang: dict[str, list[str]] = {}
    for text, lang in samples:
        by_lang.setdefault(lang, []).append(text)
    if len(by_lang) < 2:
        raise DataError("train_langid needs samples from at least 2 languages")
    for lang, texts in by_lang.items():
        if len(texts) < min_samples_per_language:
            raise DataError(f"language {lang!r} has only {len(texts)} samples; "
                            f"need >= {min_samples_per_language}")

    languages = sorted(by_lang)
    # shared per-order gram vocabulary across languages
    vocab: dict[int, set[str]] = {n: set() for n in orders}
    counts: dict[str, dict[int, Counter]] = {
        lang: {n: Counter() for n in orders} for lang in languages}
    for lang, texts in by_lang.items():
        for text in texts:
            for n in orders:
                counts[lang][n].update(_char_ngrams(text, n))
                vocab[n].update(_char_ngrams(text, n))

    tables: dict[str, dict[int, dict[str, float]]] = {}
    unk_log_probs: dict[str, dict[int, float]] = {}
    for lang in languages:
        tables[lang] = {}
        unk_log_probs[lang] = {}
        for n in orders:
            c = counts[lang][n]
            v = len(vocab[n]) + 1  # +1: unseen bucket
            total = sum(c.values()) + alpha * v
            tables[lang][n] = {
                g: math.log((c.get(g, 0) + alpha) / total) for g in vocab[n]}
            unk_log_probs[lang][n] = math.log(alpha / total)

    total_samples = sum(len(t) for t in by_lang.values())
    log_priors = {lang: math.log(len(by_lang[lang]) / total_samples)
                  for lang in languages}
    return LangIdModel(languages=languages, orders=tuple(orders),
                       tables=tables, unk_log_probs=unk_log_probs,
                       log_priors=log_priors, alpha=alpha)


def langid_filter(corpus: ParallelCorpus, model: LangIdModel,
                  source_lang: str, target_lang: str,
                  threshold: float = 0.95) -> ParallelCorpus:
    """Keep pairs where both sides are classified as their expected
    language with posterior >= threshold."""
    if not 0 < threshold <= 1:
        raise DataError("threshold must be in (0, 1]")
    kept = []
    for pair in corpus:
        if (model.posteriors(pair.source)[source_lang] >= threshold
                and model.posteriors(pair.target)[target_lang] >= threshold):
            kept.append(pair)
    return ParallelCorpus(kept)


# ---------------------------------------------------------------------------
# length filtering
# ---------------------------------------------------------------------------

def whitespace_tokens(text: str) -> list[str]:
    return normalize(text).split()


def length_filter(corpus: ParallelCorpus, min_tokens: int, max_tokens: int,
                  side: str = "both",
                  tokenizer: Callable[[str], list] = whitespace_tokens
                  ) -> ParallelCorpus:
    """Keep pairs whose selected side's token length is within the
    inclusive bounds.  ``tokenizer`` defaults to whitespace; pass a
    subword encoder for subword-token bounds."""
    if not 1 <= min_tokens <= max_tokens:
        raise DataError(f"bad length bounds ({min_tokens}, {max_tokens})")
    if side not in ("source", "target", "both"):
        raise DataError(f"bad side {side!r}")

    def ok(pair: SentencePair) -> bool:
        checks = []
        if side in ("source", "both"):
            checks.append(len(tokenizer(pair.source)))
        if side in ("target", "both"):
            checks.append(len(tokenizer(pair.target)))
        return all(min_tokens <= l <= max_tokens for l in checks)

    return ParallelCorpus(p for p in corpus if ok(p))


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Batch:
    """Token-budget batch: indices into the corpus plus padded sizes."""

    pair_ids: tuple[int, ...]
    total_tokens: int       # padded source+target token total
    padded_source_len: int
    padded_target_len: int


def make_batches(corpus: ParallelCorpus, token_budget: int, seed: int,
                 lengths: Sequence[tuple[int, int]] | None = None
                 ) -> list[Batch]:
    """Sort pairs by target length, pack greedily under the padded token
    budget, then shuffle batch order with the seed.

    ``lengths`` gives (source_tokens, target_tokens) per pair; defaults
    to whitespace counts.  Every pair lands in exactly one batch.
    """
    if lengths is None:
        lengths = [(len(whitespace_tokens(p.source)),
                    len(whitespace_tokens(p.target))) for p in corpus]
    if len(lengths) != len(corpus):
        raise DataError("lengths must match corpus size")
    return pack_batches(lengths, token_budget, seed)


def pack_batches(lengths: Sequence[tuple[int, int]], token_budget: int,
                 seed: int) -> list[Batch]:
    """Batch packing on raw (source, target) token lengths."""
    for i, (sl, tl) in enumerate(lengths):
        if sl + tl > token_budget:
            raise DataError(
                f"pair {i} has {sl + tl} tokens, exceeding the batch budget "
                f"{token_budget}")

    order = sorted(range(len(lengths)),
                   key=lambda i: (lengths[i][1], lengths[i][0], i))
    batches: list[Batch] = []
    current: list[int] = []
    max_src = max_tgt = 0
    for idx in order:
        sl, tl = lengths[idx]
        new_src = max(max_src, sl)
        new_tgt = max(max_tgt, tl)
        n = len(current) + 1
        if current and n * (new_src + new_tgt) > token_budget:
            batches.append(Batch(tuple(current),
                                 len(current) * (max_src + max_tgt),
                                 max_src, max_tgt))
            current = [idx]
            max_src, max_tgt = sl, tl
        else:
            current.append(idx)
            max_src, max_tgt = new_src, new_tgt
    if current:
        batches.append(Batch(tuple(current),
                             len(current) * (max_src + max_tgt),
                             max_src, max_tgt))

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(batches))
    return [batches[i] for i in perm]


def corpus_stats(corpus: ParallelCorpus) -> dict[str, int]:
    """Pair count and whitespace-token totals per side."""
    return {
        "pairs": len(corpus),
        "source_tokens": sum(len(whitespace_tokens(p.source)) for p in corpus),
        "target_tokens": sum(len(whitespace_tokens(p.target)) for p in corpus),
    }
