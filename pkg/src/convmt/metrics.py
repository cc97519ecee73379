"""Automatic evaluation: corpus-level BLEU and sentence/corpus RIBES.

BLEU is the geometric mean of clipped 1..4-gram precisions (pooled over
the corpus) times a brevity penalty; values are reported on the 0-100
scale.  RIBES scores word-order agreement: normalized Kendall's tau over
aligned word ranks, scaled by powers of unigram precision and brevity
penalty.  Both operate on whitespace-tokenized detokenized text, which
matters because BLEU is tokenization-sensitive.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, asdict

from .errors import DataError

logger = logging.getLogger(__name__)

BLEU_MAX_ORDER = 4
RIBES_ALPHA = 0.25
RIBES_BETA = 0.10


@dataclass
class EvalReport:
    """Metric bundle for one evaluation run."""

    bleu: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    ribes: float
    sentences: int
    hypothesis_tokens: int
    reference_tokens: int

    def to_json(self) -> str:
        d = asdict(self)
        d["precisions"] = list(self.precisions)
        return json.dumps(d, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        d["precisions"] = tuple(d["precisions"])
        return cls(**d)

    def to_text(self) -> str:
        p = "/".join(f"{x:.4f}" for x in self.precisions)
        return (f"BLEU = {self.bleu:.2f} ({p}, BP = {self.brevity_penalty:.4f})\n"
                f"RIBES = {self.ribes:.6f}\n"
                f"sentences = {self.sentences}, hyp tokens = "
                f"{self.hypothesis_tokens}, ref tokens = {self.reference_tokens}\n")


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses: list[str], references: list[str],
         smooth: bool = False) -> tuple[float, tuple[float, ...], float]:
    """Corpus BLEU on the 0-100 scale.

    Returns (bleu, per-n precisions, brevity penalty).  Without smoothing
    any zero n-gram precision gives BLEU 0; ``smooth`` enables add-one
    smoothing on the clipped counts for sentence-level diagnostics.
    """
    if len(hypotheses) != len(references):
        raise DataError(f"{len(hypotheses)} hypotheses vs "
                        f"{len(references)} references")
    if not hypotheses:
        raise DataError("empty corpus")

    matched = [0] * BLEU_MAX_ORDER
    total = [0] * BLEU_MAX_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h = hyp.split()
        r = ref.split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, BLEU_MAX_ORDER + 1):
            hyp_counts = _ngrams(h, n)
            ref_counts = _ngrams(r, n)
            total[n - 1] += sum(hyp_counts.values())
            matched[n - 1] += sum(min(c, ref_counts[g])
                                  for g, c in hyp_counts.items())

    if hyp_len == 0:
        logger.warning("empty hypothesis corpus; BLEU set to 0")
        return 0.0, (0.0,) * BLEU_MAX_ORDER, 0.0

    precisions = []
    for n in range(BLEU_MAX_ORDER):
        if smooth:
            precisions.append((matched[n] + 1.0) / (total[n] + 1.0))
        else:
            precisions.append(matched[n] / total[n] if total[n] else 0.0)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    if min(precisions) <= 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(
            sum(math.log(p) for p in precisions) / BLEU_MAX_ORDER)
    return score, tuple(precisions), bp


def kendall_tau(ranks: list[int]) -> float:
    """(concordant - discordant) / (n(n-1)/2) over distinct ranks."""
    n = len(ranks)
    if n < 2:
        raise DataError("kendall_tau needs at least 2 ranks")
    if len(set(ranks)) != n:
        raise DataError("kendall_tau requires distinct ranks")
    concordant = sum(1 for i in range(n) for j in range(i + 1, n)
                     if ranks[i] < ranks[j])
    pairs = n * (n - 1) // 2
    return (2 * concordant - pairs) / pairs


def _overlapping_count(needle: tuple, haystack: tuple) -> int:
    n = len(needle)
    return sum(1 for i in range(len(haystack) - n + 1)
               if haystack[i:i + n] == needle)


def _find(needle: tuple, haystack: tuple) -> int:
    n = len(needle)
    for i in range(len(haystack) - n + 1):
        if haystack[i:i + n] == needle:
            return i
    return -1


def word_rank_alignment(reference: list[str], hypothesis: list[str]
                        ) -> list[int]:
    """Reference positions for each alignable hypothesis word.

    Unique unigram matches align directly; ambiguous words are
    disambiguated by growing context n-grams that occur exactly once in
    both sentences; unalignable words are skipped.
    """
    ref = tuple(reference)
    hyp = tuple(hypothesis)
    positions: list[int] = []
    for i, word in enumerate(hyp):
        if word not in ref:
            continue
        if ref.count(word) == 1 and hyp.count(word) == 1:
            positions.append(ref.index(word))
            continue
        for window in range(1, max(i + 1, len(hyp) - i + 1)):
            if window <= i:
                gram = hyp[i - window:i + 1]
                if (_overlapping_count(gram, ref) == 1
                        and _overlapping_count(gram, hyp) == 1):
                    positions.append(_find(gram, ref) + len(gram) - 1)
                    break
            if i + window < len(hyp):
                gram = hyp[i:i + window + 1]
                if (_overlapping_count(gram, ref) == 1
                        and _overlapping_count(gram, hyp) == 1):
                    positions.append(_find(gram, ref))
                    break
    return positions


@dataclass
class RibesResult:
    score: float
    nkt: float
    precision: float
    brevity_penalty: float
    aligned: int
    degenerate: bool  # fewer than 2 aligned words


def sentence_ribes(hypothesis: str, reference: str,
                   alpha: float = RIBES_ALPHA,
                   beta: float = RIBES_BETA) -> RibesResult:
    """RIBES for one sentence pair: NKT * P^alpha * BP^beta.

    NKT is the ascending-pair fraction ((tau+1)/2) over aligned ranks,
    P the aligned-word unigram precision, BP the sentence brevity
    penalty.  Fewer than 2 aligned words scores 0 with the degenerate
    flag set.
    """
    if alpha < 0 or beta < 0:
        raise DataError("alpha and beta must be >= 0")
    hyp = hypothesis.split()
    ref = reference.split()
    if not ref:
        raise DataError("empty reference")
    if not hyp:
        return RibesResult(0.0, 0.0, 0.0, 0.0, 0, True)
    bp = min(1.0, math.exp(1.0 - len(ref) / len(hyp)))
    positions = word_rank_alignment(ref, hyp)
    n = len(positions)
    if n < 2:
        return RibesResult(0.0, 0.0, n / len(hyp), bp, n, True)
    ascending = sum(1 for i in range(n) for j in range(i + 1, n)
                    if positions[i] < positions[j])
    nkt = ascending / (n * (n - 1) / 2)
    precision = n / len(hyp)
    score = nkt * precision ** alpha * bp ** beta
    return RibesResult(score, nkt, precision, bp, n, False)


def corpus_ribes(hypotheses: list[str], references: list[str],
                 alpha: float = RIBES_ALPHA, beta: float = RIBES_BETA) -> float:
    """Mean sentence RIBES over the corpus."""
    if len(hypotheses) != len(references):
        raise DataError(f"{len(hypotheses)} hypotheses vs "
                        f"{len(references)} references")
    if not hypotheses:
        raise DataError("empty corpus")
    return sum(sentence_ribes(h, r, alpha, beta).score
               for h, r in zip(hypotheses, references)) / len(hypotheses)


def evaluate(hypotheses: list[str], references: list[str]) -> EvalReport:
    """Full evaluation bundle: BLEU fields, corpus RIBES and counts."""
    score, precisions, bp = bleu(hypotheses, references)
    rib = corpus_ribes(hypotheses, references)
    return EvalReport(
        bleu=score,
        precisions=precisions,
        brevity_penalty=bp,
        ribes=rib,
        sentences=len(hypotheses),
        hypothesis_tokens=sum(len(h.split()) for h in hypotheses),
        reference_tokens=sum(len(r.split()) for r in references),
    )
