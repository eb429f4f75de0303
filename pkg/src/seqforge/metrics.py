"""Corpus BLEU and sentence-averaged ROUGE-L.

BLEU follows the mteval/13a recipe: punctuation-aware tokenization,
clipped n-gram precisions pooled over the corpus, exp smoothing for
zero match counts, brevity penalty, geometric mean over the orders that
have any n-grams at all (so 3-token candidates are scored on orders
1..3). Scores are 0..100. ROUGE-L is the longest-common-subsequence
F1 per pair, averaged, in 0..1.
"""

from __future__ import annotations

import math
import re
from collections import Counter

__all__ = ["bleu", "rouge_l", "tokenize_13a"]

_13A_RULES = (
    (re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])"), r" \1 "),  # punctuation
    (re.compile(r"([^0-9])([\.,])"), r"\1 \2 "),               # . , after non-digit
    (re.compile(r"([\.,])([^0-9])"), r" \1 \2"),               # . , before non-digit
    (re.compile(r"([0-9])(-)"), r"\1 \2 "),                    # digit-hyphen
)


def tokenize_13a(line: str) -> list[str]:
    line = line.replace("<skipped>", "")
    line = line.replace("-\n", "").replace("\n", " ")
    for entity, char in (("&quot;", '"'), ("&amp;", "&"), ("&lt;", "<"), ("&gt;", ">")):
        line = line.replace(entity, char)
    line = f" {line} "
    for pattern, repl in _13A_RULES:
        line = pattern.sub(repl, line)
    return line.split()


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: list[str], references: list[str], max_ngram: int = 4,
         smoothing: str = "exp", tokenizer=tokenize_13a) -> float:
    """Corpus-level BLEU in [0, 100] for one reference per candidate."""
    if not candidates:
        raise ValueError("empty candidate set")
    if len(candidates) != len(references):
        raise ValueError(
            f"{len(candidates)} candidates vs {len(references)} references")
    if smoothing not in ("exp", "none"):
        raise ValueError(f"unknown smoothing {smoothing!r}")

    matches = [0] * max_ngram
    totals = [0] * max_ngram
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        c_toks = tokenizer(cand)
        r_toks = tokenizer(ref)
        cand_len += len(c_toks)
        ref_len += len(r_toks)
        for n in range(1, max_ngram + 1):
            c_ngrams = _ngrams(c_toks, n)
            r_ngrams = _ngrams(r_toks, n)
            matches[n - 1] += sum(min(count, r_ngrams[g]) for g, count in c_ngrams.items())
            totals[n - 1] += max(len(c_toks) - n + 1, 0)

    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    effective = 0
    smooth = 1.0
    for m, t in zip(matches, totals):
        if t == 0:
            continue  # candidates shorter than n: drop the order entirely
        effective += 1
        if m > 0:
            p = m / t
        elif smoothing == "exp":
            smooth *= 2.0
            p = 1.0 / (smooth * t)
        else:
            return 0.0
        log_sum += math.log(p)
    if effective == 0:
        return 0.0
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return 100.0 * bp * math.exp(log_sum / effective)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidates: list[str], references: list[str],
            tokenizer=str.split) -> float:
    """Mean LCS-based F1 over sentence pairs, in [0, 1]."""
    if not candidates:
        raise ValueError("empty candidate set")
    if len(candidates) != len(references):
        raise ValueError(
            f"{len(candidates)} candidates vs {len(references)} references")
    scores = []
    for cand, ref in zip(candidates, references):
        c_toks = tokenizer(cand)
        r_toks = tokenizer(ref)
        lcs = _lcs_length(c_toks, r_toks)
        if lcs == 0:
            scores.append(0.0)
            continue
        precision = lcs / len(c_toks)
        recall = lcs / len(r_toks)
        scores.append(2.0 * precision * recall / (precision + recall))
    return float(sum(scores) / len(scores))
