"""Repetition constraints applied to next-token logits."""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError


@dataclass
class GenerationConstraints:
    beam_width: int = 4
    no_repeat_ngram: int = 5
    repetition_penalty: float = 1.2
    max_tokens_per_turn: int = 64
    # optional budget scaling with the speech just read; None disables it
    max_tokens_per_chunk: int | None = 8
    min_tokens_per_chunk: int = 0  # EOT is masked until this many tokens per chunk read
    # no-repeat history length in transcript tokens; None keeps the whole transcript
    ngram_horizon: int | None = 4096

    def __post_init__(self):
        if self.beam_width < 1:
            raise ConfigError("beam_width must be >= 1")
        if self.no_repeat_ngram < 1:
            raise ConfigError("no_repeat_ngram must be >= 1")
        if self.repetition_penalty < 1.0:
            raise ConfigError("repetition_penalty must be >= 1")
        if self.max_tokens_per_turn < 1:
            raise ConfigError("max_tokens_per_turn must be >= 1")
        if self.max_tokens_per_chunk is not None and self.max_tokens_per_chunk < 1:
            raise ConfigError("max_tokens_per_chunk must be >= 1")
        if self.ngram_horizon is not None and self.ngram_horizon < 1:
            raise ConfigError("ngram_horizon must be >= 1")
        if self.min_tokens_per_chunk < 0:
            raise ConfigError("min_tokens_per_chunk must be >= 0")
        if self.max_tokens_per_chunk is not None and self.min_tokens_per_chunk > self.max_tokens_per_chunk:
            raise ConfigError("min_tokens_per_chunk exceeds max_tokens_per_chunk")

    def turn_cap(self, n_chunks: int) -> int:
        if self.max_tokens_per_chunk is None:
            return self.max_tokens_per_turn
        return min(self.max_tokens_per_turn, self.max_tokens_per_chunk * n_chunks)

    def turn_floor(self, n_chunks: int) -> int:
        return min(self.min_tokens_per_chunk * n_chunks, self.turn_cap(n_chunks))


def banned_tokens(history: Sequence[int], n: int) -> set[int]:
    """Tokens that would complete an n-gram already present in ``history``."""
    if n < 1 or len(history) < n - 1:
        return set()
    if n == 1:
        return set(history)
    prefix = tuple(history[len(history) - n + 1:])
    banned = set()
    for i in range(len(history) - n + 1):
        if tuple(history[i:i + n - 1]) == prefix:
            banned.add(history[i + n - 1])
    return banned


def penalize(logits: np.ndarray, tokens: Iterable[int], penalty: float) -> np.ndarray:
    out = np.array(logits, copy=True)
    if penalty == 1.0:
        return out
    idx = np.fromiter(set(tokens), dtype=np.int64)
    if idx.size:
        sel = out[idx]
        out[idx] = np.where(sel > 0, sel / penalty, sel * penalty)
    return out


def apply_repetition_constraints(logits, history: Sequence[int], constraints: GenerationConstraints,
                                 banned: set[int] | None = None) -> np.ndarray:
    """Repetition penalty on seen tokens, then -inf on n-gram repeats.

    ``banned`` may be supplied by an incremental index; otherwise the history
    is scanned.
    """
    out = penalize(logits, history, constraints.repetition_penalty)
    if banned is None:
        banned = banned_tokens(history, constraints.no_repeat_ngram)
    if banned:
        out[np.fromiter(banned, dtype=np.int64)] = -np.inf
    return out


class NgramIndex:
    """Incremental (n-1)-gram -> next-token counts over a growing transcript.

    With a ``horizon`` only n-grams lying inside the most recent ``horizon``
    tokens are kept, so memory stays bounded on an unbounded stream.
    """

    def __init__(self, n: int, horizon: int | None = None):
        self.n = n
        self.horizon = horizon
        self.length = 0
        self.seen: set[int] = set()
        self._tail: deque[int] = deque(maxlen=max(n - 1, 1))
        self._grams: deque[tuple[tuple, int]] = deque()
        self._next: dict[tuple, Counter] = {}

    def append(self, token: int) -> None:
        n = self.n
        self.seen.add(token)
        self.length += 1
        if self.length >= n:
            key = tuple(self._tail)[len(self._tail) - (n - 1):] if n > 1 else ()
            self._next.setdefault(key, Counter())[token] += 1
            if self.horizon is not None:
                self._grams.append((key, token))
                while len(self._grams) > max(self.horizon - n + 1, 0):
                    old_key, old_tok = self._grams.popleft()
                    counts = self._next[old_key]
                    counts[old_tok] -= 1
                    if not counts[old_tok]:
                        del counts[old_tok]
                        if not counts:
                            del self._next[old_key]
        self._tail.append(token)

    def banned_after(self, suffix: Sequence[int]) -> set[int]:
        """Banned continuations of ``transcript[-horizon:] + suffix``."""
        n = self.n
        visible = self.length if self.horizon is None else min(self.length, self.horizon)
        if visible + len(suffix) < n - 1:
            return set()
        k = min(n - 1, visible)
        tail = list(self._tail)[len(self._tail) - k:] if k else []
        full_tail = tail + list(suffix)
        prefix = tuple(full_tail[len(full_tail) - (n - 1):]) if n > 1 else ()
        banned = set(self._next.get(prefix, ()))
        # n-grams that overlap the suffix are not in the index yet
        if suffix:
            banned |= banned_tokens(full_tail, n)
        return banned
