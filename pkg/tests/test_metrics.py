import itertools
import math
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from convmt.errors import DataError
from convmt.metrics import (EvalReport, bleu, corpus_ribes, evaluate,
                            kendall_tau, sentence_ribes, word_rank_alignment)

words = st.sampled_from(["the", "cat", "sat", "on", "mat", "dog", "ran"])
sentence = st.lists(words, min_size=1, max_size=10).map(" ".join)


def oracle_bleu(hypotheses, references):
    """Independent corpus BLEU used as a test oracle: clipped counts
    pooled per order, geometric mean, brevity penalty."""
    matched, total = [0] * 4, [0] * 4
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h, r = hyp.split(), ref.split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, 5):
            hc = Counter(tuple(h[i:i + n]) for i in range(len(h) - n + 1))
            rc = Counter(tuple(r[i:i + n]) for i in range(len(r) - n + 1))
            total[n - 1] += sum(hc.values())
            for g, c in hc.items():
                matched[n - 1] += min(c, rc[g])
    if hyp_len == 0:
        return 0.0
    precisions = [m / t if t else 0.0 for m, t in zip(matched, total)]
    if min(precisions) <= 0:
        return 0.0
    bp = 1.0 if hyp_len > ref_len else math.exp(1 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / 4)


class TestBleu:
    def test_perfect_match_scores_100(self):
        refs = ["the cat sat on the mat", "the dog ran"]
        score, precisions, bp = bleu(refs, refs)
        assert score == pytest.approx(100.0)
        assert precisions == (1.0, 1.0, 1.0, 1.0)
        assert bp == 1.0

    def test_half_length_hypothesis_hits_brevity_penalty(self):
        # perfect precisions, half the reference length: BLEU = 100/e
        score, _, bp = bleu(["a b c d"], ["a b c d e f g h"])
        assert bp == pytest.approx(math.exp(1 - 2.0))
        assert score == pytest.approx(100.0 * math.exp(-1.0))

    def test_zero_precision_scores_zero(self):
        score, precisions, _ = bleu(["x y z w"], ["a b c d"])
        assert score == 0.0
        assert precisions[0] == 0.0

    def test_no_four_grams_without_smoothing_scores_zero(self):
        # three-token sentences have no 4-grams at all
        score, precisions, _ = bleu(["a b c"], ["a b c"])
        assert precisions[3] == 0.0
        assert score == 0.0

    def test_smoothing_gives_nonzero_score(self):
        score, _, _ = bleu(["a b c"], ["a b c"], smooth=True)
        assert score > 0.0

    def test_clipping_limits_repeated_words(self):
        # "the" appears twice in the reference, seven times in the hypothesis
        _, precisions, _ = bleu(["the the the the the the the"],
                                ["the the cat sat"])
        assert precisions[0] == pytest.approx(2 / 7)

    def test_pooled_counts_not_averaged_per_sentence(self):
        hyps = ["a b c d", "x"]
        refs = ["a b c d", "y"]
        score, precisions, _ = bleu(hyps, refs)
        assert precisions[0] == pytest.approx(4 / 5)  # pooled over corpus
        assert oracle_bleu(hyps, refs) == pytest.approx(score)

    def test_known_value_against_hand_computation(self):
        hyps = ["the cat sat on the mat"]
        refs = ["the cat is on the mat"]
        score, precisions, bp = bleu(hyps, refs)
        assert precisions == (5 / 6, 3 / 5, 1 / 4, 0.0)
        assert score == 0.0  # zero 4-gram precision
        smoothed, sp, _ = bleu(hyps, refs, smooth=True)
        assert sp == (6 / 7, 4 / 6, 2 / 5, 1 / 4)
        want = 100.0 * math.exp(
            sum(math.log(p) for p in sp) / 4)
        assert smoothed == pytest.approx(want)

    @given(st.lists(st.tuples(sentence, sentence), min_size=1, max_size=8))
    @settings(max_examples=80, deadline=None)
    def test_matches_oracle_on_random_corpora(self, pairs):
        hyps = [h for h, _ in pairs]
        refs = [r for _, r in pairs]
        score, _, _ = bleu(hyps, refs)
        assert score == pytest.approx(oracle_bleu(hyps, refs), abs=1e-9)

    def test_mismatched_corpora_rejected(self):
        with pytest.raises(DataError):
            bleu(["a"], ["a", "b"])
        with pytest.raises(DataError):
            bleu([], [])


class TestKendallTau:
    def test_sorted_ranks_score_one(self):
        assert kendall_tau([0, 1, 2, 3]) == 1.0

    def test_reversed_ranks_score_minus_one(self):
        assert kendall_tau([3, 2, 1, 0]) == -1.0

    def test_single_swap(self):
        # pairs: (1,0) discordant, others concordant: (2*5 - 6)/6
        assert kendall_tau([1, 0, 2, 3]) == pytest.approx(4 / 6)

    def test_oracle_brute_force(self):
        for perm in itertools.permutations(range(4)):
            n = 4
            conc = sum(perm[i] < perm[j]
                       for i in range(n) for j in range(i + 1, n))
            disc = n * (n - 1) // 2 - conc
            want = (conc - disc) / (n * (n - 1) / 2)
            assert kendall_tau(list(perm)) == pytest.approx(want)

    def test_invalid_inputs_rejected(self):
        with pytest.raises(DataError):
            kendall_tau([1])
        with pytest.raises(DataError):
            kendall_tau([1, 1])


class TestWordRankAlignment:
    def test_unique_words_align_directly(self):
        ref = "the cat sat".split()
        hyp = "cat the sat".split()
        assert word_rank_alignment(ref, hyp) == [1, 0, 2]

    def test_words_absent_from_reference_are_skipped(self):
        ref = "a b c".split()
        hyp = "a x c".split()
        assert word_rank_alignment(ref, hyp) == [0, 2]

    def test_repeated_words_need_context(self):
        # "the" is ambiguous; "the mat" pins it to the second occurrence
        ref = "the cat sat on the mat".split()
        hyp = "the mat".split()
        assert word_rank_alignment(ref, hyp) == [4, 5]

    def test_unresolvable_repeats_are_skipped(self):
        ref = "a a".split()
        hyp = "a".split()
        assert word_rank_alignment(ref, hyp) == []

    def test_left_context_disambiguation(self):
        ref = "x a y a".split()
        hyp = "y a".split()
        # "a" after "y" matches only position 3 in the reference
        assert word_rank_alignment(ref, hyp) == [2, 3]


class TestSentenceRibes:
    def test_identical_sentences_score_one(self):
        r = sentence_ribes("the cat sat on mat", "the cat sat on mat")
        assert r.score == pytest.approx(1.0)
        assert r.nkt == 1.0 and r.precision == 1.0 and r.brevity_penalty == 1.0

    def test_reversed_order_scores_zero_nkt(self):
        r = sentence_ribes("mat on sat cat the", "the cat sat on mat")
        assert r.nkt == 0.0
        assert r.score == 0.0

    def test_known_value_by_hand(self):
        # positions [1, 0, 2]: 2 of 3 pairs ascending
        hyp, ref = "cat the sat", "the cat sat"
        r = sentence_ribes(hyp, ref)
        assert r.nkt == pytest.approx(2 / 3)
        assert r.precision == 1.0
        assert r.brevity_penalty == 1.0
        assert r.score == pytest.approx(2 / 3)

    def test_alpha_beta_exponents_applied(self):
        hyp, ref = "the cat", "the cat sat on mat"
        r = sentence_ribes(hyp, ref, alpha=0.25, beta=0.10)
        bp = math.exp(1 - 5 / 2)
        assert r.brevity_penalty == pytest.approx(bp)
        assert r.score == pytest.approx(1.0 * (2 / 2) ** 0.25 * bp ** 0.10)

    def test_fewer_than_two_alignments_is_degenerate(self):
        r = sentence_ribes("zzz cat", "the cat sat")
        assert r.degenerate
        assert r.score == 0.0

    def test_empty_hypothesis_scores_zero(self):
        r = sentence_ribes("", "the cat")
        assert r.degenerate and r.score == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(DataError):
            sentence_ribes("the cat", "")

    def test_negative_exponents_rejected(self):
        with pytest.raises(DataError):
            sentence_ribes("a", "a", alpha=-1)


class TestCorpusRibes:
    def test_mean_of_sentence_scores(self):
        hyps = ["the cat sat", "cat the sat"]
        refs = ["the cat sat", "the cat sat"]
        want = (sentence_ribes(hyps[0], refs[0]).score
                + sentence_ribes(hyps[1], refs[1]).score) / 2
        assert corpus_ribes(hyps, refs) == pytest.approx(want)

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            corpus_ribes([], [])

    @given(st.lists(st.tuples(sentence, sentence), min_size=1, max_size=6))
    @settings(max_examples=50, deadline=None)
    def test_bounded_in_unit_interval(self, pairs):
        score = corpus_ribes([h for h, _ in pairs], [r for _, r in pairs])
        assert 0.0 <= score <= 1.0


class TestEvalReport:
    def test_evaluate_bundles_everything(self):
        hyps = ["the cat sat on the mat"]
        refs = ["the cat sat on the mat"]
        report = evaluate(hyps, refs)
        assert report.bleu == pytest.approx(100.0)
        assert report.ribes == pytest.approx(1.0)
        assert report.sentences == 1
        assert report.hypothesis_tokens == report.reference_tokens == 6

    def test_json_round_trip(self):
        report = evaluate(["a b c d e"], ["a b c d f"])
        again = EvalReport.from_json(report.to_json())
        assert again == report

    def test_text_rendering_mentions_both_metrics(self):
        text = evaluate(["a b c d"], ["a b c d"]).to_text()
        assert "BLEU = 100.00" in text
        assert "RIBES = 1.000000" in text
