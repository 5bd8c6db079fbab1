import numpy as np
import pytest

from embeval.embeddings import EmbeddingMatrix, StaticTable, normalize_rows
from embeval.tokenizer import Vocabulary


@pytest.fixture
def small_vocab():
    return Vocabulary(frozenset({"un", "##aff", "##able", "cat", "dog", "the",
                                 "sat", "##s", ".", "[UNK]"}))


@pytest.fixture
def orthonormal_table():
    """Seven words on orthogonal axes; unknowns fall back to hashed directions."""
    words = ["the", "cat", "sat", "dog", "ran", "mat", "."]
    vectors = {}
    for i, w in enumerate(words):
        v = np.zeros(8)
        v[i] = 1.0
        vectors[w] = v
    return StaticTable(vectors)


def unit_matrix(rows):
    return normalize_rows(EmbeddingMatrix(np.asarray(rows, dtype=float)))
