"""Synthetic toy corpora for experiments and tests.

The main task is token reversal: the target sentence is the source read
backwards.  It is easy to verify, needs real reordering (so attention
matters), and both directions are learnable from small data.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .subword import NUM_RESERVED, UNK_ID


def toy_tokens(vocab_size: int = 30) -> list[str]:
    return [f"tok{i:02d}" for i in range(vocab_size)]


def reversal_pairs(n_pairs: int, vocab_size: int = 30, min_len: int = 3,
                   max_len: int = 10, seed: int = 0) -> list[tuple[str, str]]:
    """(source, reversed source) sentence pairs over a small token set."""
    rng = np.random.default_rng(seed)
    tokens = toy_tokens(vocab_size)
    pairs = []
    for _ in range(n_pairs):
        length = int(rng.integers(min_len, max_len + 1))
        words = [tokens[int(i)] for i in rng.integers(0, vocab_size, length)]
        pairs.append((" ".join(words), " ".join(reversed(words))))
    return pairs


class WordVocab:
    """Word-level id mapping with the shared reserved ids 0..3.

    Used by toy experiments that bypass subword segmentation.
    """

    def __init__(self, tokens: list[str]):
        self.token_to_id = {t: NUM_RESERVED + i for i, t in enumerate(tokens)}
        self.id_to_token = {i: t for t, i in self.token_to_id.items()}

    @property
    def vocab_size(self) -> int:
        return NUM_RESERVED + len(self.token_to_id)

    def encode(self, sentence: str) -> list[int]:
        return [self.token_to_id.get(w, UNK_ID) for w in sentence.split()]

    def decode(self, ids: list[int]) -> str:
        words = []
        for i in ids:
            if i in self.id_to_token:
                words.append(self.id_to_token[i])
            elif i >= NUM_RESERVED:
                raise DataError(f"id {i} out of range")
        return " ".join(words)
