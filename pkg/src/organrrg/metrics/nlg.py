"""Text-overlap metrics: corpus BLEU, ROUGE-L, and METEOR.

All three operate on whitespace token lists and return values in [0, 1].
Fixed, versioned choices (kept hermetic so scores are comparable across
runs of this package):

* BLEU: modified n-gram precision with brevity penalty, geometric mean over
  orders 1..n, add-epsilon (1e-9) smoothing on zero counts.
* ROUGE-L: LCS F-measure with beta = 1.2 (recall-weighted).
* METEOR: exact then suffix-strip stem unigram alignment,
  F_mean = 10PR/(R+9P), fragmentation penalty 0.5*(chunks/matches)^3.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

from . import kernels

EPSILON = 1e-9
ROUGE_BETA = 1.2
_STEM_SUFFIXES = ("ing", "ed", "es", "s")

Tokens = Sequence[str]


def _intern(*seqs: Tokens) -> list[list[int]]:
    table: dict[str, int] = {}
    out = []
    for seq in seqs:
        ids = []
        for tok in seq:
            if tok not in table:
                table[tok] = len(table)
            ids.append(table[tok])
        out.append(ids)
    return out


def bleu(candidates: list[Tokens], references: list[Tokens], n: int = 4) -> float:
    """Corpus-level BLEU@n over aligned candidate/reference token lists."""
    if not candidates:
        raise ValueError("empty candidate set")
    if len(candidates) != len(references):
        raise ValueError("candidates and references must align")
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")

    matched = [0] * n
    totals = [0] * n
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_ids, ref_ids = _intern(cand, ref)
        cand_len += len(cand_ids)
        ref_len += len(ref_ids)
        for k in range(1, n + 1):
            m, t = kernels.clipped_ngram_matches(cand_ids, ref_ids, k)
            matched[k - 1] += m
            totals[k - 1] += t

    log_precision = 0.0
    for m, t in zip(matched, totals):
        if t == 0:
            p = EPSILON
        elif m == 0:
            p = EPSILON / t
        else:
            p = m / t
        log_precision += math.log(p) / n

    if cand_len == 0:
        return 0.0
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_precision)


def rouge_l(candidate: Tokens, reference: Tokens) -> float:
    """LCS-based F-measure of one candidate against one reference."""
    if not candidate or not reference:
        return 0.0
    cand_ids, ref_ids = _intern(candidate, reference)
    lcs = kernels.lcs_length(cand_ids, ref_ids)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand_ids)
    recall = lcs / len(ref_ids)
    b2 = ROUGE_BETA * ROUGE_BETA
    return (1 + b2) * precision * recall / (recall + b2 * precision)


def stem(word: str) -> str:
    """Suffix-strip stemmer: removes the first matching suffix when at least
    three characters remain."""
    for suffix in _STEM_SUFFIXES:
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            return word[: -len(suffix)]
    return word


def meteor(candidate: Tokens, reference: Tokens) -> float:
    """Unigram-alignment METEOR with exact and stem matching stages."""
    if not candidate or not reference:
        return 0.0
    cand_stems = [stem(w) for w in candidate]
    ref_stems = [stem(w) for w in reference]
    ce, re_, cs, rs = _intern(candidate, reference, cand_stems, ref_stems)
    pairs = kernels.align_two_stage(ce, re_, cs, rs)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if i1 != i0 + 1 or j1 != j0 + 1:
            chunks += 1
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1.0 - penalty)


def corpus_nlg_scores(candidates: list[Tokens], references: list[Tokens]) -> dict[str, float]:
    """The standard reporting table: BLEU@1..4 (corpus-level), METEOR and
    ROUGE-L (averaged per sample)."""
    scores = {f"BLEU@{k}": bleu(candidates, references, k) for k in range(1, 5)}
    pairs = list(zip(candidates, references))
    scores["METEOR"] = sum(meteor(c, r) for c, r in pairs) / len(pairs)
    scores["ROUGE-L"] = sum(rouge_l(c, r) for c, r in pairs) / len(pairs)
    return scores
