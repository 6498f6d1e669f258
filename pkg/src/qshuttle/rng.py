"""Labelled random streams derived from one master seed.

Every stochastic consumer asks for a stream by a stable text label such as
``"rb/ref/seq/17"``. The stream depends only on (seed, label), so results do
not change when work is reordered or split across processes.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def stream(seed: int, label: str) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    words = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF, *_label_words(label)]
    return np.random.default_rng(np.random.SeedSequence(words))
