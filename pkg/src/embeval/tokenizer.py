"""WordPiece-style tokenization.

Sentences are pre-split on Unicode whitespace, then each word is segmented
by greedy longest-match-first against a fixed vocabulary. Non-initial
pieces carry a continuation prefix; a word with no valid segmentation (or
one that is too long) collapses to the unknown piece. No casing or accent
handling happens here: that belongs to whoever built the vocabulary.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Vocabulary:
    """The word-piece inventory tokenization draws from."""

    pieces: frozenset[str]
    continuation_prefix: str = "##"
    unknown_piece: str = "[UNK]"
    max_word_chars: int = 100

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("vocabulary has no pieces")
        if not self.continuation_prefix:
            raise ValueError("continuation prefix must be non-empty")
        if self.unknown_piece not in self.pieces:
            raise ValueError(f"unknown piece {self.unknown_piece!r} is not in the vocabulary")
        if self.max_word_chars <= 0:
            raise ValueError("max_word_chars must be positive")

    @classmethod
    def from_file(cls, path, **overrides) -> "Vocabulary":
        """Load a vocabulary file: one piece per line, UTF-8.

        The line number is the piece id. Lines are taken verbatim apart from
        the trailing newline, so pieces may contain leading/trailing spaces.
        """
        text = Path(path).read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(pieces=frozenset(lines), **overrides)


@dataclass(frozen=True)
class TokenSequence:
    """A sentence as ordered word pieces, with word-origin bookkeeping.

    ``word_index[i]`` is the index of the whitespace-delimited word piece i
    came from; ``is_continuation[i]`` is true iff the piece carries the
    continuation prefix.
    """

    pieces: tuple[str, ...]
    word_index: tuple[int, ...]
    is_continuation: tuple[bool, ...]

    def __post_init__(self):
        if not (len(self.pieces) == len(self.word_index) == len(self.is_continuation)):
            raise ValueError("token sequence fields have unequal lengths")
        if any(b < a for a, b in zip(self.word_index, self.word_index[1:])):
            raise ValueError("word_index must be non-decreasing")

    def __len__(self) -> int:
        return len(self.pieces)

    def __iter__(self):
        return iter(self.pieces)


def _split_word(word: str, vocab: Vocabulary) -> list[str]:
    if len(word) > vocab.max_word_chars:
        return [vocab.unknown_piece]
    out = []
    start = 0
    while start < len(word):
        end = len(word)
        found = None
        while start < end:
            sub = word[start:end]
            if start > 0:
                sub = vocab.continuation_prefix + sub
            if sub in vocab.pieces:
                found = sub
                break
            end -= 1
        if found is None:
            return [vocab.unknown_piece]
        out.append(found)
        start = end
    return out


def tokenize(text: str, vocab: Vocabulary) -> TokenSequence:
    """Tokenize a sentence into word pieces.

    Each whitespace-delimited word is split greedily: the first piece is the
    longest vocabulary prefix of the word, and so on for the remainder with
    the continuation prefix applied. Unknown or overlong words become a
    single unknown piece. Empty text gives an empty sequence.
    """
    pieces: list[str] = []
    word_index: list[int] = []
    is_cont: list[bool] = []
    for w_idx, word in enumerate(text.split()):
        for piece in _split_word(word, vocab):
            pieces.append(piece)
            word_index.append(w_idx)
            is_cont.append(piece.startswith(vocab.continuation_prefix))
    return TokenSequence(tuple(pieces), tuple(word_index), tuple(is_cont))


@dataclass(frozen=True)
class FilterPolicy:
    """Which token classes to exclude from matching.

    ``drop_punctuation`` excludes pieces made entirely of Unicode punctuation
    (general categories P*); ``drop_continuations`` excludes every sub-word
    piece except the first of each word. The empty policy keeps everything.
    """

    drop_punctuation: bool = False
    drop_continuations: bool = False
    continuation_prefix: str = "##"


KEEP_ALL = FilterPolicy()


def is_filtered(piece: str, policy: FilterPolicy) -> bool:
    """True iff the piece matches an active exclusion class."""
    is_cont = piece.startswith(policy.continuation_prefix)
    if policy.drop_continuations and is_cont:
        return True
    if policy.drop_punctuation:
        body = piece[len(policy.continuation_prefix):] if is_cont else piece
        if body and all(unicodedata.category(ch).startswith("P") for ch in body):
            return True
    return False


def surviving_indices(tokens, policy: FilterPolicy) -> list[int]:
    """Indices of pieces the policy keeps, in order."""
    return [i for i, piece in enumerate(tokens) if not is_filtered(piece, policy)]
