"""Per-token embedding supply: providers, normalization, layer handling.

Embeddings arrive from one of three pluggable sources — a static
piece-to-vector table, a store of precomputed per-sentence layer stacks, or
a remote service — and are always row-normalized before scoring. Multi-layer
stacks can be reduced either by picking one layer or by power-mean
aggregation across layers.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np
import requests

from .errors import (
    DimensionMismatchError,
    InadmissibleExponentError,
    LayerOutOfRangeError,
    MissingSentenceError,
    ProviderUnavailableError,
    ZeroVectorError,
)
from .rng import string_stream
from .tokenizer import TokenSequence

_ZERO_NORM = 1e-12


@dataclass
class EmbeddingMatrix:
    """Dense per-token vectors: rows are tokens, columns are dimensions."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionMismatchError(f"expected a 2-d matrix, got shape {self.values.shape}")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def normalize_rows(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Divide each row by its Euclidean norm.

    Idempotent on already-unit rows; a row with norm below 1e-12 raises
    :class:`ZeroVectorError`.
    """
    norms = np.linalg.norm(m.values, axis=1)
    if norms.size and float(norms.min()) < _ZERO_NORM:
        bad = int(np.argmin(norms))
        raise ZeroVectorError(f"row {bad} has norm {norms[bad]:.3e}")
    return EmbeddingMatrix(m.values / norms[:, None], normalized=True)


@dataclass
class LayerStack:
    """Ordered per-layer embedding matrices; layer 0 is the input embedding."""

    layers: list[EmbeddingMatrix]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("layer stack is empty")
        shape = self.layers[0].values.shape
        for i, layer in enumerate(self.layers):
            if layer.values.shape != shape:
                raise DimensionMismatchError(
                    f"layer {i} has shape {layer.values.shape}, expected {shape}"
                )

    @property
    def rows(self) -> int:
        return self.layers[0].rows

    def __len__(self) -> int:
        return len(self.layers)


def select_layer(stack: LayerStack, index: int) -> EmbeddingMatrix:
    """Return one layer's matrix unmodified."""
    if not 0 <= index < len(stack):
        raise LayerOutOfRangeError(f"layer {index} out of range for a {len(stack)}-layer stack")
    return stack.layers[index]


def _admissible_exponent(p: float) -> bool:
    # Odd integer powers keep sign for negative coordinates; even or
    # fractional ones would not. +/-inf and 1 are the closed-form cases.
    if p in (math.inf, -math.inf):
        return True
    return float(p).is_integer() and p >= 1 and int(p) % 2 == 1


def power_mean_aggregate(stack: LayerStack, exponents: Sequence[float]) -> EmbeddingMatrix:
    """Aggregate layers by elementwise power means, one block per exponent.

    Each layer is row-normalized first; per exponent p the result is
    ((1/L) sum_l v_l^p)^(1/p), with p=+inf the elementwise max, p=-inf the
    min, and p=1 the arithmetic mean. The per-exponent blocks are
    concatenated along the dimension axis and the result is row-normalized.
    Admissible exponents: -inf, +inf, 1, and odd positive integers.
    """
    if not exponents:
        raise InadmissibleExponentError("at least one exponent is required")
    for p in exponents:
        if not _admissible_exponent(p):
            raise InadmissibleExponentError(f"exponent {p!r} is not in the admissible set")
    normalized = np.stack([normalize_rows(layer).values for layer in stack.layers])
    blocks = []
    for p in exponents:
        if p == math.inf:
            blocks.append(normalized.max(axis=0))
        elif p == -math.inf:
            blocks.append(normalized.min(axis=0))
        elif p == 1:
            blocks.append(normalized.mean(axis=0))
        else:
            mean_pow = np.power(normalized, int(p)).mean(axis=0)
            blocks.append(np.sign(mean_pow) * np.abs(mean_pow) ** (1.0 / p))
    return normalize_rows(EmbeddingMatrix(np.concatenate(blocks, axis=1)))


@dataclass(frozen=True)
class SingleLayer:
    """Use exactly one layer of the stack."""

    index: int = 0


@dataclass(frozen=True)
class PowerMeans:
    """Aggregate all layers with these power-mean exponents."""

    exponents: tuple[float, ...] = (1.0,)


LayerPolicy = Union[SingleLayer, PowerMeans]


def apply_layer_policy(stack: LayerStack, policy: LayerPolicy) -> EmbeddingMatrix:
    if isinstance(policy, SingleLayer):
        return normalize_rows(select_layer(stack, policy.index))
    if isinstance(policy, PowerMeans):
        return power_mean_aggregate(stack, policy.exponents)
    raise TypeError(f"unknown layer policy {policy!r}")


@dataclass
class EmbeddingRecord:
    """Precomputed embeddings for one sentence."""

    id: str
    tokens: TokenSequence
    stack: LayerStack

    def __post_init__(self):
        if self.stack.rows != len(self.tokens):
            raise DimensionMismatchError(
                f"record {self.id!r}: stack has {self.stack.rows} rows "
                f"but the sentence has {len(self.tokens)} tokens"
            )


@dataclass(frozen=True)
class Sentence:
    """What a provider needs to serve embeddings: an id, raw text, or tokens.

    Static tables need ``tokens``; precomputed stores need ``id``; remote
    providers need ``id`` and ``text``.
    """

    id: str | None = None
    text: str | None = None
    tokens: TokenSequence | None = None


def _tokens_from_pieces(pieces: Sequence[str], continuation_prefix: str = "##") -> TokenSequence:
    word_index = []
    current = -1
    is_cont = []
    for piece in pieces:
        cont = piece.startswith(continuation_prefix)
        if not cont or current < 0:
            current += 1
        word_index.append(current)
        is_cont.append(cont)
    return TokenSequence(tuple(pieces), tuple(word_index), tuple(is_cont))


def _parse_record(obj: dict, continuation_prefix: str = "##") -> EmbeddingRecord:
    tokens = _tokens_from_pieces(obj["tokens"], continuation_prefix)
    layers = [EmbeddingMatrix(np.asarray(layer, dtype=np.float64)) for layer in obj["layers"]]
    return EmbeddingRecord(id=obj["id"], tokens=tokens, stack=LayerStack(layers))


class StaticTable:
    """Context-free piece-to-vector table.

    Pieces missing from the table fall back either to a dedicated unknown
    vector (when one is configured) or to a deterministic pseudo-random unit
    vector derived from the piece string, so fully synthetic runs stay
    reproducible without any model.
    """

    def __init__(self, vectors: Mapping[str, Sequence[float]],
                 unknown_vector: Sequence[float] | None = None):
        if not vectors:
            raise ValueError("static table has no vectors")
        self.vectors: dict[str, np.ndarray] = {}
        dim = None
        for piece, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if dim is None:
                dim = arr.shape[0]
            elif arr.shape != (dim,):
                raise DimensionMismatchError(
                    f"piece {piece!r} has dim {arr.shape}, expected ({dim},)"
                )
            self.vectors[piece] = arr
        self.dim = int(dim)
        self.unknown_vector = None
        if unknown_vector is not None:
            arr = np.asarray(unknown_vector, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise DimensionMismatchError("unknown vector dim does not match the table")
            self.unknown_vector = arr
        self._fingerprint = _digest_items(
            sorted((p, v.tobytes()) for p, v in self.vectors.items())
        )

    @classmethod
    def from_file(cls, path, unknown_piece: str | None = "[UNK]") -> "StaticTable":
        """Load JSON Lines of {"piece": ..., "vector": [...]}.

        If ``unknown_piece`` is present in the file its vector becomes the
        dedicated unknown fallback; otherwise the hash fallback applies.
        """
        vectors: dict[str, np.ndarray] = {}
        for obj in _read_jsonl(path):
            vectors[obj["piece"]] = np.asarray(obj["vector"], dtype=np.float64)
        unk = vectors.get(unknown_piece) if unknown_piece else None
        return cls(vectors, unknown_vector=unk)

    def vector(self, piece: str) -> np.ndarray:
        vec = self.vectors.get(piece)
        if vec is not None:
            return vec
        if self.unknown_vector is not None:
            return self.unknown_vector
        raw = string_stream("piece:" + piece).standard_normal(self.dim)
        return raw / np.linalg.norm(raw)

    def stack(self, sentence: Sentence) -> tuple[TokenSequence, LayerStack]:
        if sentence.tokens is None:
            raise ValueError("a static table needs pre-tokenized sentences")
        rows = [self.vector(p) for p in sentence.tokens]
        values = np.vstack(rows) if rows else np.zeros((0, self.dim))
        return sentence.tokens, LayerStack([EmbeddingMatrix(values)])

    def fingerprint(self) -> str:
        return f"static:sha256:{self._fingerprint}"


class PrecomputedStore:
    """Sentence-id keyed store of precomputed embedding records."""

    def __init__(self, records: Sequence[EmbeddingRecord], fingerprint: str | None = None):
        self.records: dict[str, EmbeddingRecord] = {}
        for rec in records:
            if rec.id in self.records:
                raise ValueError(f"duplicate record id {rec.id!r}")
            self.records[rec.id] = rec
        self._fingerprint = fingerprint or _digest_items(sorted(self.records))

    @classmethod
    def from_file(cls, path, continuation_prefix: str = "##") -> "PrecomputedStore":
        """Load JSON Lines of {"id", "tokens", "layers"} records."""
        records = [_parse_record(obj, continuation_prefix) for obj in _read_jsonl(path)]
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
        return cls(records, fingerprint=digest)

    def record(self, sentence_id: str) -> EmbeddingRecord:
        try:
            return self.records[sentence_id]
        except KeyError:
            raise MissingSentenceError(f"no embeddings stored for id {sentence_id!r}") from None

    def stack(self, sentence: Sentence) -> tuple[TokenSequence, LayerStack]:
        if sentence.id is None:
            raise ValueError("a precomputed store needs a sentence id")
        rec = self.record(sentence.id)
        if sentence.tokens is not None and tuple(sentence.tokens) != tuple(rec.tokens):
            raise DimensionMismatchError(
                f"id {sentence.id!r}: supplied tokens differ from the stored record"
            )
        return rec.tokens, rec.stack

    def fingerprint(self) -> str:
        return f"precomputed:sha256:{self._fingerprint}"


class RemoteClient:
    """Fetches embedding records from a remote service.

    Requests are JSON ``{"sentences": [{"id", "text"}...], "layers": [...]}``
    and responses are JSON Lines of embedding records. Failures are retried
    twice with exponential backoff, then surface as
    :class:`ProviderUnavailableError`; there is no silent fallback.
    """

    def __init__(self, endpoint: str, layers: Sequence[int] = (0,), timeout: float = 10.0,
                 retries: int = 2, backoff: float = 0.5):
        self.endpoint = endpoint
        self.layers = tuple(int(x) for x in layers)
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def fetch(self, sentence_id: str, text: str) -> EmbeddingRecord:
        payload = {"sentences": [{"id": sentence_id, "text": text}],
                   "layers": list(self.layers)}
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = requests.post(self.endpoint, json=payload, timeout=self.timeout)
                if not 200 <= resp.status_code < 300:
                    last = f"status {resp.status_code}"
                    continue
                records = {}
                for line in resp.text.splitlines():
                    if line.strip():
                        rec = _parse_record(json.loads(line))
                        records[rec.id] = rec
                if sentence_id not in records:
                    raise MissingSentenceError(
                        f"remote provider returned no record for id {sentence_id!r}"
                    )
                return records[sentence_id]
            except MissingSentenceError:
                raise
            except (requests.RequestException, ValueError, KeyError, TypeError,
                    DimensionMismatchError) as exc:
                last = repr(exc)
        raise ProviderUnavailableError(f"{self.endpoint}: giving up after retries ({last})")

    def stack(self, sentence: Sentence) -> tuple[TokenSequence, LayerStack]:
        if sentence.id is None or sentence.text is None:
            raise ValueError("a remote provider needs both sentence id and text")
        rec = self.fetch(sentence.id, sentence.text)
        return rec.tokens, rec.stack

    def fingerprint(self) -> str:
        return f"remote:{self.endpoint}:layers={','.join(map(str, self.layers))}"


EmbeddingProvider = Union[StaticTable, PrecomputedStore, RemoteClient]


def embed(tokens: TokenSequence | None, provider: EmbeddingProvider,
          policy: LayerPolicy = SingleLayer(0), *, sentence_id: str | None = None,
          text: str | None = None) -> EmbeddingMatrix:
    """Row-normalized matrix for a sentence, after applying the layer policy."""
    _, matrix = embed_sentence(
        Sentence(id=sentence_id, text=text, tokens=tokens), provider, policy
    )
    return matrix


def embed_sentence(sentence: Sentence, provider: EmbeddingProvider,
                   policy: LayerPolicy = SingleLayer(0)) -> tuple[TokenSequence, EmbeddingMatrix]:
    """Resolve a sentence through a provider: tokens plus normalized matrix."""
    tokens, stack = provider.stack(sentence)
    if stack.rows == 0:
        return tokens, EmbeddingMatrix(stack.layers[0].values, normalized=True)
    return tokens, apply_layer_policy(stack, policy)


def _read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def _digest_items(items) -> str:
    h = hashlib.sha256()
    for item in items:
        h.update(repr(item).encode("utf-8"))
    return h.hexdigest()[:16]


def write_static_table(path, vectors: Mapping[str, Sequence[float]]) -> None:
    """Write a static table file (JSON Lines, sorted by piece)."""
    with open(path, "w", encoding="utf-8") as fh:
        for piece in sorted(vectors):
            vec = [float(x) for x in np.asarray(vectors[piece], dtype=np.float64)]
            fh.write(json.dumps({"piece": piece, "vector": vec}) + "\n")


def write_records(path, records: Sequence[EmbeddingRecord]) -> None:
    """Write precomputed embedding records (JSON Lines)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "id": rec.id,
                "tokens": list(rec.tokens.pieces),
                "layers": [layer.values.tolist() for layer in rec.stack.layers],
            }
            fh.write(json.dumps(obj) + "\n")
