"""Smoothed inverse-document-frequency weights over a reference corpus.

A piece's weight is log((M+1)/(df+1)) where M is the number of reference
sentences and df the number of sentences containing the piece at least
once. The add-one smoothing sits on both counts, which keeps all weights in
[0, log(M+1)] and hands unseen pieces the maximum weight log(M+1). df
counts presence per sentence, not token frequency, because sentences are
scored individually. Tables depend only on the corpus they were built from,
never on system outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import DatasetFormatError, EmptyCorpusError
from .tokenizer import TokenSequence


@dataclass(frozen=True)
class IdfTable:
    weights: Mapping[str, float]
    corpus_size: int
    unseen_weight: float

    def weight(self, piece: str) -> float:
        return self.weights.get(piece, self.unseen_weight)


def build_idf(references: Sequence[TokenSequence | Sequence[str]]) -> IdfTable:
    """Build a table from reference sentences.

    weight(w) = log((M+1)/(df(w)+1)); unseen pieces get log(M+1).
    """
    if not references:
        raise EmptyCorpusError("idf needs at least one reference sentence")
    m = len(references)
    df: dict[str, int] = {}
    for sent in references:
        for piece in set(sent):
            df[piece] = df.get(piece, 0) + 1
    weights = {piece: math.log((m + 1) / (count + 1)) for piece, count in df.items()}
    return IdfTable(weights=weights, corpus_size=m, unseen_weight=math.log(m + 1))


def idf_weight(table: IdfTable, piece: str) -> float:
    """Stored weight, or the smoothed unseen fallback."""
    return table.weight(piece)


class IdfVariant(str, Enum):
    """How the reference- and candidate-side tables are sourced.

    REF_CORPUS: both sides share one table built from the evaluation
    references. LARGE_REF_CORPUS: identical mechanics, but the caller
    designates a larger reference corpus. SEPARATE_CANDIDATES: the candidate
    side gets its own table built from the candidate sentences while the
    reference side keeps the reference-corpus table.
    """

    REF_CORPUS = "ref-corpus"
    LARGE_REF_CORPUS = "large-ref-corpus"
    SEPARATE_CANDIDATES = "separate-candidates"


def build_idf_variant(references, candidates, variant: IdfVariant) -> tuple[IdfTable, IdfTable]:
    """(reference table, candidate table) for the chosen variant."""
    variant = IdfVariant(variant)
    ref_table = build_idf(references)
    if variant is IdfVariant.SEPARATE_CANDIDATES:
        if not candidates:
            raise EmptyCorpusError("separate-candidates idf needs candidate sentences")
        return ref_table, build_idf(candidates)
    return ref_table, ref_table


def save_idf(path, table: IdfTable) -> None:
    """Write a table file: a header line, then one {"piece","weight"} per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"corpus_size": table.corpus_size,
                             "unseen_weight": table.unseen_weight}) + "\n")
        for piece in sorted(table.weights):
            fh.write(json.dumps({"piece": piece, "weight": table.weights[piece]}) + "\n")


def load_idf(path) -> IdfTable:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().split("\n") if line.strip()]
    if not lines:
        raise DatasetFormatError(f"{path}: empty idf file")
    header = json.loads(lines[0])
    try:
        corpus_size = int(header["corpus_size"])
        unseen = float(header["unseen_weight"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: bad idf header: {exc}") from None
    weights = {}
    for line in lines[1:]:
        obj = json.loads(line)
        weights[obj["piece"]] = float(obj["weight"])
    return IdfTable(weights=weights, corpus_size=corpus_size, unseen_weight=unseen)
