"""BLEU and ROUGE-L against hand-counted n-grams and LCS arithmetic."""

import math

import pytest

from seqforge.metrics import bleu, rouge_l, tokenize_13a


class TestTokenize13a:
    def test_punctuation_split(self):
        assert tokenize_13a("Hello, world!") == ["Hello", ",", "world", "!"]

    def test_decimal_numbers_stay_joined(self):
        assert tokenize_13a("pi is 3.14") == ["pi", "is", "3.14"]

    def test_trailing_period_split(self):
        assert tokenize_13a("the end.") == ["the", "end", "."]

    def test_entity_unescape(self):
        assert tokenize_13a("a &amp; b") == ["a", "&", "b"]


class TestBleu:
    def test_identical_corpora_score_100(self):
        cands = ["the cat sat on the mat", "a stitch in time"]
        assert bleu(cands, list(cands)) == pytest.approx(100.0)

    def test_disjoint_unigrams_zero_before_smoothing(self):
        assert bleu(["aa bb cc dd"], ["ee ff gg hh"], smoothing="none") == 0.0
        smoothed = bleu(["aa bb cc dd"], ["ee ff gg hh"], smoothing="exp")
        assert 0.0 < smoothed < 15.0  # floor value only

    def test_hand_computed_example(self):
        # candidate "the cat sat" (3 tokens) vs reference "the cat sat down"
        # p1 = 3/3, p2 = 2/2, p3 = 1/1; no 4-grams exist, so orders 1..3 count
        # BP = exp(1 - 4/3)
        want = 100.0 * math.exp(1.0 - 4.0 / 3.0) * (1.0 * 1.0 * 1.0) ** (1.0 / 3.0)
        got = bleu(["the cat sat"], ["the cat sat down"])
        assert abs(got - want) < 1e-6

    def test_clipping_counts_each_reference_ngram_once(self):
        # "the the the" vs "the cat": unigram matches clip at 1
        # p1 = 1/3; orders 2,3 have zero matches -> exp smoothing; no BP (3 > 2)
        p1 = 1 / 3
        p2 = 1 / (2 * 2)   # smooth=2, total bigrams 2
        p3 = 1 / (4 * 1)   # smooth=4, total trigrams 1
        want = 100.0 * math.exp((math.log(p1) + math.log(p2) + math.log(p3)) / 3)
        got = bleu(["the the the"], ["the cat"])
        assert abs(got - want) < 1e-9

    def test_permutation_invariance(self):
        cands = ["a b c", "d e f g", "h i"]
        refs = ["a b x", "d e f q", "h j"]
        perm = [2, 0, 1]
        assert bleu(cands, refs) == pytest.approx(
            bleu([cands[i] for i in perm], [refs[i] for i in perm]))

    def test_duplication_invariance(self):
        # all orders have matches, so the smoothing floor stays inert and
        # duplication scales numerators and denominators together
        cands = ["a b c d e", "f g h i j"]
        refs = ["a b c d x", "f g h i y"]
        assert bleu(cands, refs) == pytest.approx(bleu(cands * 3, refs * 3))

    def test_brevity_penalty_for_short_candidates(self):
        # equal n-gram precision, shorter candidate must score lower
        long = bleu(["a b c d"], ["a b c d"])
        short = bleu(["a b"], ["a b c d"])
        assert short < long

    def test_input_validation(self):
        with pytest.raises(ValueError, match="empty"):
            bleu([], [])
        with pytest.raises(ValueError, match="candidates vs"):
            bleu(["a"], ["a", "b"])

    def test_empty_candidate_strings_score_zero(self):
        assert bleu([""], ["a b"]) == 0.0


class TestRougeL:
    def test_identical_is_one(self):
        assert rouge_l(["a b c"], ["a b c"]) == pytest.approx(1.0)

    def test_disjoint_is_zero(self):
        assert rouge_l(["a b"], ["c d"]) == 0.0

    def test_lcs_hand_example(self):
        # LCS("a b c d", "a c b d") has length 3 -> P = R = F = 0.75
        assert rouge_l(["a b c d"], ["a c b d"]) == pytest.approx(0.75)

    def test_mean_over_pairs(self):
        got = rouge_l(["a b c d", "x y"], ["a c b d", "x y"])
        assert got == pytest.approx((0.75 + 1.0) / 2)

    def test_asymmetric_lengths(self):
        # cand "a b" vs ref "a b c d": LCS 2, P = 1, R = 0.5, F = 2/3
        assert rouge_l(["a b"], ["a b c d"]) == pytest.approx(2 / 3)

    def test_input_validation(self):
        with pytest.raises(ValueError, match="empty"):
            rouge_l([], [])
