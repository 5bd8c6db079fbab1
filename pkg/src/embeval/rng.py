"""Deterministic random streams.

Every stochastic operation draws from a Philox4x64 counter-based generator
keyed by (seed, domain, stream). Distinct (domain, stream) pairs give
statistically independent substreams, so per-iteration work can run in any
order or in parallel and still reproduce bit-identically from the seed
recorded in the report.

Key layout (128 bits): seed in the high 64 bits, an 8-bit domain tag, then
a 56-bit stream index.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_MASK56 = (1 << 56) - 1

# Domain tags keep independent consumers of the same user seed apart.
DOMAIN_DEFAULT = 0
DOMAIN_BASELINE = 1
DOMAIN_BOOTSTRAP = 2
DOMAIN_HYBRID = 3
DOMAIN_TRIAL = 4


def substream(seed: int, domain: int = DOMAIN_DEFAULT, stream: int = 0) -> np.random.Generator:
    """Generator for the (seed, domain, stream) key."""
    key = ((seed & _MASK64) << 64) | ((domain & 0xFF) << 56) | (stream & _MASK56)
    return np.random.Generator(np.random.Philox(key=key))


def string_stream(label: str) -> np.random.Generator:
    """Generator keyed by a string (used for hash-derived fallback vectors).

    The key comes from SHA-256 of the UTF-8 bytes, so it is stable across
    runs, platforms, and processes.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest[:16], "big")))
