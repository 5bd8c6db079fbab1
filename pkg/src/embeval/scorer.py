"""Greedy-matched precision/recall/F1 over token similarity matrices.

Each reference token is credited with its best cosine match among the
candidate tokens (recall); each candidate token with its best match among
the reference tokens (precision); F1 is their harmonic mean. Matching is
relaxed: many-to-one is allowed. Weights come from idf tables when
configured, token filtering removes punctuation/continuation pieces when
configured, and a precomputed random-pair baseline can rescale the triple
for readability without changing rankings.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .embeddings import (
    EmbeddingMatrix,
    EmbeddingProvider,
    LayerPolicy,
    Sentence,
    SingleLayer,
    embed_sentence,
)
from .errors import (
    AlreadyRescaledError,
    DimensionMismatchError,
    EmptyAfterFilterError,
    EmptySentenceError,
    InvalidBaselineError,
    NotNormalizedError,
    PoolTooSmallError,
)
from .idf import IdfTable
from .rng import DOMAIN_BASELINE, substream
from .tokenizer import FilterPolicy, KEEP_ALL, TokenSequence, surviving_indices


@dataclass
class SimilarityMatrix:
    """Pairwise cosine similarities: rows are reference tokens, columns candidates.

    Entries are clamped to [-1, 1] at construction to absorb normalization
    round-off.
    """

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionMismatchError("similarity matrix must be 2-d")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def similarity_matrix(ref: EmbeddingMatrix, cand: EmbeddingMatrix) -> SimilarityMatrix:
    """Inner products of pre-normalized rows; entry (i, j) = ref_i . cand_j."""
    if not (ref.normalized and cand.normalized):
        raise NotNormalizedError("similarity requires row-normalized matrices")
    if ref.dim != cand.dim:
        raise DimensionMismatchError(f"dims differ: {ref.dim} vs {cand.dim}")
    return SimilarityMatrix(np.clip(ref.values @ cand.values.T, -1.0, 1.0))


@dataclass(frozen=True)
class ScoreTriple:
    precision: float
    recall: float
    f1: float
    rescaled: bool = False
    f1_degenerate: bool = False  # set when P+R was exactly 0 and F was pinned to 0


@dataclass(frozen=True)
class RescaleBaseline:
    """Empirical random-pair lower bound used for linear rescaling.

    Components are averages of unrescaled scores over random sentence pairs.
    A degenerate pool can push a component to 1; that is representable here
    and rejected when the baseline is actually used.
    """

    b_precision: float
    b_recall: float
    b_f1: float
    sample_count: int
    provider_fingerprint: str = ""


@dataclass(frozen=True)
class ScoreConfig:
    """Bundles the scoring switches.

    ``idf`` is a (reference table, candidate table) pair or None for
    unweighted scoring; recall weights come from the reference table over
    reference pieces, precision weights from the candidate table over
    candidate pieces.
    """

    idf: tuple[IdfTable, IdfTable] | None = None
    filters: FilterPolicy = KEEP_ALL
    layer_policy: LayerPolicy = SingleLayer(0)
    baseline: RescaleBaseline | None = None


def _side_weights(pieces: list[str], table: IdfTable | None) -> np.ndarray:
    if table is None:
        return np.ones(len(pieces))
    w = np.array([table.weight(p) for p in pieces], dtype=np.float64)
    # All-zero weights (every piece in every reference) carry no signal;
    # the uniform limit is the only continuous completion.
    if w.sum() <= 0.0:
        return np.ones(len(pieces))
    return w


def greedy_score(sim: SimilarityMatrix, ref_tokens: TokenSequence | Sequence[str],
                 cand_tokens: TokenSequence | Sequence[str],
                 cfg: ScoreConfig = ScoreConfig()) -> ScoreTriple:
    """Weighted greedy-matching P/R/F1 for one candidate-reference pair.

    recall = sum_i w_i max_j S_ij / sum_i w_i over surviving reference
    tokens; precision is symmetric over candidate columns. If the config
    carries a baseline the triple is rescaled component-wise.
    """
    k, l = sim.shape
    if len(ref_tokens) != k or len(cand_tokens) != l:
        raise DimensionMismatchError(
            f"matrix is {k}x{l} but sentences have {len(ref_tokens)}/{len(cand_tokens)} tokens"
        )
    if k == 0 or l == 0:
        raise EmptySentenceError("cannot score an empty sentence")
    keep_r = surviving_indices(ref_tokens, cfg.filters)
    keep_c = surviving_indices(cand_tokens, cfg.filters)
    if not keep_r or not keep_c:
        side = "reference" if not keep_r else "candidate"
        raise EmptyAfterFilterError(f"filter policy removed every {side} token")
    values = sim.values[np.ix_(keep_r, keep_c)]
    ref_pieces = [ref_tokens[i] if not isinstance(ref_tokens, TokenSequence)
                  else ref_tokens.pieces[i] for i in keep_r]
    cand_pieces = [cand_tokens[j] if not isinstance(cand_tokens, TokenSequence)
                   else cand_tokens.pieces[j] for j in keep_c]
    ref_table, cand_table = cfg.idf if cfg.idf is not None else (None, None)
    w_ref = _side_weights(ref_pieces, ref_table)
    w_cand = _side_weights(cand_pieces, cand_table)
    recall = float(values.max(axis=1) @ w_ref / w_ref.sum())
    precision = float(values.max(axis=0) @ w_cand / w_cand.sum())
    f1, degenerate = _harmonic(precision, recall)
    triple = ScoreTriple(precision, recall, f1, f1_degenerate=degenerate)
    if cfg.baseline is not None:
        triple = rescale(triple, cfg.baseline)
    return triple


def _harmonic(p: float, r: float) -> tuple[float, bool]:
    if p + r == 0.0:
        return 0.0, True
    return 2.0 * p * r / (p + r), False


def rescale(t: ScoreTriple, base: RescaleBaseline) -> ScoreTriple:
    """Map each component x to (x - b)/(1 - b) with its own baseline.

    F1 is rescaled with its own baseline rather than recomputed from the
    rescaled P and R, so ranking semantics are untouched.
    """
    if t.rescaled:
        raise AlreadyRescaledError("triple is already rescaled")
    for name, b in (("precision", base.b_precision), ("recall", base.b_recall),
                    ("f1", base.b_f1)):
        if b >= 1.0:
            raise InvalidBaselineError(f"{name} baseline {b} >= 1")
    return ScoreTriple(
        precision=(t.precision - base.b_precision) / (1.0 - base.b_precision),
        recall=(t.recall - base.b_recall) / (1.0 - base.b_recall),
        f1=(t.f1 - base.b_f1) / (1.0 - base.b_f1),
        rescaled=True,
        f1_degenerate=t.f1_degenerate,
    )


def score_pair(ref: Sentence, cand: Sentence, provider: EmbeddingProvider,
               cfg: ScoreConfig = ScoreConfig()) -> ScoreTriple:
    """Embed both sentences through the provider and run greedy scoring."""
    ref_tokens, ref_emb = embed_sentence(ref, provider, cfg.layer_policy)
    cand_tokens, cand_emb = embed_sentence(cand, provider, cfg.layer_policy)
    sim = similarity_matrix(ref_emb, cand_emb)
    return greedy_score(sim, ref_tokens, cand_tokens, cfg)


def compute_baseline(pool: Sequence[Sentence], pair_count: int,
                     provider: EmbeddingProvider, cfg: ScoreConfig,
                     seed: int) -> RescaleBaseline:
    """Average unrescaled scores over random distinct-sentence pairs.

    Pairs are drawn uniformly (pool index pairs with i != j) from the Philox
    substream (seed, baseline domain), so the result is reproducible.
    """
    if len(pool) < 2:
        raise PoolTooSmallError(f"pool has {len(pool)} sentences; need at least 2")
    if pair_count < 1:
        raise ValueError("pair_count must be >= 1")
    cfg = replace(cfg, baseline=None)
    rng = substream(seed, DOMAIN_BASELINE)
    totals = np.zeros(3)
    for _ in range(pair_count):
        i = int(rng.integers(len(pool)))
        j = int(rng.integers(len(pool) - 1))
        if j >= i:
            j += 1
        triple = score_pair(pool[i], pool[j], provider, cfg)
        totals += (triple.precision, triple.recall, triple.f1)
    means = totals / pair_count
    return RescaleBaseline(
        b_precision=float(means[0]), b_recall=float(means[1]), b_f1=float(means[2]),
        sample_count=pair_count, provider_fingerprint=provider.fingerprint(),
    )


def multi_reference_score(cand: Sentence, refs: Sequence[Sentence],
                          provider: EmbeddingProvider,
                          cfg: ScoreConfig = ScoreConfig()) -> tuple[ScoreTriple, int]:
    """Score against every reference; keep the best F1 (ties: lowest index)."""
    if not refs:
        raise ValueError("at least one reference is required")
    best: ScoreTriple | None = None
    best_idx = 0
    for idx, ref in enumerate(refs):
        triple = score_pair(ref, cand, provider, cfg)
        if best is None or triple.f1 > best.f1:
            best, best_idx = triple, idx
    return best, best_idx
