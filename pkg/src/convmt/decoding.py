"""Beam-search decoding with length-normalized confidence scores."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model as M
from . import tensor as T
from .errors import DataError
from .subword import BOS_ID, EOS_ID


@dataclass(frozen=True)
class Hypothesis:
    """One beam-search candidate.

    ``ids`` is bos-prefixed and, when finished, eos-terminated.
    ``log_prob`` is the sum of the chosen tokens' log-softmax values.
    """

    ids: tuple[int, ...]
    log_prob: float
    finished: bool

    @property
    def emitted_length(self) -> int:
        """Number of emitted tokens (excluding bos, including eos)."""
        return len(self.ids) - 1

    def normalized_score(self, length_penalty: float = 1.0) -> float:
        return self.log_prob / (self.emitted_length ** length_penalty)

    @property
    def tokens(self) -> tuple[int, ...]:
        """Emitted tokens without bos/eos."""
        body = self.ids[1:]
        if self.finished and body and body[-1] == EOS_ID:
            body = body[:-1]
        return body


def translation_confidence(h: Hypothesis) -> float:
    """Per-token geometric-mean probability of a finished hypothesis."""
    if not h.finished:
        raise DataError("confidence is defined only for finished hypotheses")
    return math.exp(h.log_prob / h.emitted_length)


def beam_search(params: dict[str, T.Tensor], config: M.ModelConfig,
                source_ids, beam_width: int = 10, max_len: int = 64,
                length_penalty: float = 1.0) -> list[Hypothesis]:
    """Standard beam search over the model's target vocabulary.

    A hypothesis finishes on eos and is locked; search ends once
    ``beam_width`` hypotheses have finished or ``max_len`` tokens were
    emitted.  Hypotheses still live at ``max_len`` are returned flagged
    unfinished.  Ranking uses log-prob / length^length_penalty.
    """
    if beam_width < 1:
        raise DataError("beam_width must be >= 1")
    if max_len < 1:
        raise DataError("max_len must be >= 1")
    source_ids = np.asarray(source_ids, dtype=np.int64)
    if source_ids.ndim != 1 or source_ids.size == 0:
        raise DataError("source must be a non-empty 1-D id sequence")

    enc = M.encode(params, config, source_ids[None, :], train=False)
    live: list[Hypothesis] = [Hypothesis((BOS_ID,), 0.0, False)]
    finished: list[Hypothesis] = []

    for _step in range(max_len):
        if not live or len(finished) >= beam_width:
            break
        prefix = np.array([h.ids for h in live], dtype=np.int64)
        logits = M.decode_forward(params, config, enc, prefix, train=False)
        last = logits.data[:, -1, :]
        log_probs = last - _logsumexp(last)

        candidates: list[tuple[float, int, int]] = []  # (lp, parent, token)
        k = min(beam_width, log_probs.shape[1])
        for p, h in enumerate(live):
            row = log_probs[p]
            top = np.argpartition(-row, k - 1)[:k]
            for v in top:
                candidates.append((h.log_prob + float(row[v]), p, int(v)))
        candidates.sort(key=lambda c: (-c[0], c[2], c[1]))
        candidates = candidates[:beam_width]

        next_live: list[Hypothesis] = []
        for lp, p, v in candidates:
            ids = live[p].ids + (v,)
            if v == EOS_ID:
                finished.append(Hypothesis(ids, lp, True))
            else:
                next_live.append(Hypothesis(ids, lp, False))
        live = next_live

    results = finished + live  # leftover live hyps hit max_len: unfinished
    results.sort(key=lambda h: (-h.normalized_score(length_penalty), h.ids))
    return results[:beam_width]


def translate(params, config, source_token_ids, beam_width: int = 10,
              max_len: int = 64, length_penalty: float = 1.0
              ) -> list[Hypothesis]:
    """Beam search on raw token ids, appending the source eos the model
    was trained with."""
    ids = list(source_token_ids) + [EOS_ID]
    return beam_search(params, config, ids, beam_width, max_len,
                       length_penalty)


def _logsumexp(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
