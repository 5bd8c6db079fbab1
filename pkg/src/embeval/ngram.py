"""Exact-match n-gram baselines: Exact-P/R, corpus BLEU, smoothed SentBLEU."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyBagError
from .tokenizer import TokenSequence

NGram = tuple[str, ...]


@dataclass
class NGramBag:
    n: int
    counts: Counter

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def _pieces(tokens) -> list[str]:
    if isinstance(tokens, TokenSequence):
        return list(tokens.pieces)
    return list(tokens)


def ngram_bag(tokens, n: int) -> NGramBag:
    """Sliding-window n-grams with multiplicity; too-short input gives an empty bag."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pieces = _pieces(tokens)
    counts: Counter = Counter(
        tuple(pieces[i:i + n]) for i in range(len(pieces) - n + 1)
    )
    return NGramBag(n=n, counts=counts)


def exact_pr(cand, ref, n: int) -> tuple[float, float]:
    """Type-membership exact-match precision and recall at order n.

    Every candidate n-gram occurrence scores 1 if its type appears anywhere
    in the reference (so a token repeated three times against a single
    reference occurrence contributes 3 to the numerator); recall is the
    mirror image. Clipping is BLEU's business, not this measure's.
    """
    cand_bag = ngram_bag(cand, n)
    ref_bag = ngram_bag(ref, n)
    if cand_bag.total == 0 or ref_bag.total == 0:
        raise EmptyBagError(f"no {n}-grams on one side")
    precision = sum(c for w, c in cand_bag.counts.items() if w in ref_bag.counts) / cand_bag.total
    recall = sum(c for w, c in ref_bag.counts.items() if w in cand_bag.counts) / ref_bag.total
    return precision, recall


def _pair_stats(cand_pieces, ref_pieces, max_n):
    """Per-order (clipped matches, candidate totals) for one pair."""
    matches = [0] * max_n
    totals = [0] * max_n
    for n in range(1, max_n + 1):
        cand_bag = ngram_bag(cand_pieces, n)
        ref_bag = ngram_bag(ref_pieces, n)
        matches[n - 1] = sum(
            min(c, ref_bag.counts[w]) for w, c in cand_bag.counts.items() if w in ref_bag.counts
        )
        totals[n - 1] = cand_bag.total
    return matches, totals


def _brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def corpus_bleu(pairs: Sequence[tuple], max_n: int = 4) -> float:
    """Corpus-level BLEU with clipping, geometric averaging, brevity penalty.

    Matches and totals are accumulated over all pairs before dividing. Any
    order with zero accumulated matches makes the geometric mean zero, so
    the score is 0 rather than an exception.
    """
    if not pairs:
        raise ValueError("corpus BLEU needs at least one pair")
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = 0
    ref_len = 0
    for cand, ref in pairs:
        cand_pieces, ref_pieces = _pieces(cand), _pieces(ref)
        m, t = _pair_stats(cand_pieces, ref_pieces, max_n)
        for i in range(max_n):
            matches[i] += m[i]
            totals[i] += t[i]
        cand_len += len(cand_pieces)
        ref_len += len(ref_pieces)
    if cand_len == 0 or any(m == 0 for m in matches):
        return 0.0
    log_mean = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    return _brevity_penalty(cand_len, ref_len) * math.exp(log_mean)


def sentence_bleu(cand, ref, max_n: int = 4, smoothing: str = "add-one") -> float:
    """Sentence-level BLEU.

    With the default add-one smoothing each order's clipped precision is
    (matches+1)/(totals+1), so orders beyond the sentence length contribute
    a neutral 1/1. ``smoothing="none"`` reproduces corpus_bleu on the single
    pair for cross-checking.
    """
    if smoothing not in ("add-one", "none"):
        raise ValueError(f"unknown smoothing {smoothing!r}")
    cand_pieces, ref_pieces = _pieces(cand), _pieces(ref)
    if not cand_pieces or not ref_pieces:
        raise ValueError("sentence BLEU needs non-empty sentences")
    if smoothing == "none":
        return corpus_bleu([(cand_pieces, ref_pieces)], max_n=max_n)
    matches, totals = _pair_stats(cand_pieces, ref_pieces, max_n)
    log_mean = sum(
        math.log((m + 1) / (t + 1)) for m, t in zip(matches, totals)
    ) / max_n
    return _brevity_penalty(len(cand_pieces), len(ref_pieces)) * math.exp(log_mean)
