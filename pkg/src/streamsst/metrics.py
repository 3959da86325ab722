"""Streaming latency metrics: LAAL, StreamLAAL (with resegmentation), RTF."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

UNDEFINED = float("nan")


def laal(delays: Sequence[float], ref_len: int, duration_ms: float) -> float:
    """Length-adaptive average lagging of one hypothesis.

    The ideal pace divides the source duration by the longer of hypothesis
    and reference; averaging stops at the first token emitted at or after
    the end of the source. Returns ``UNDEFINED`` for an empty hypothesis.
    """
    if not len(delays):
        return UNDEFINED
    if duration_ms <= 0:
        raise ValueError("duration must be positive")
    rate = duration_ms / max(len(delays), ref_len)
    total = 0.0
    tau = len(delays)
    for i, d in enumerate(delays):
        total += d - i * rate
        if d >= duration_ms:
            tau = i + 1
            break
    return total / tau


def tokenize(text: str, lang: str = "en") -> list[str]:
    """Whitespace words, or characters for Chinese."""
    if lang.startswith("zh"):
        return [c for c in text if not c.isspace()]
    return text.split()


def resegment(hyp: Sequence[str], refs: Sequence[Sequence[str]]) -> tuple[list[tuple[int, int]], int]:
    """Split ``hyp`` into ``len(refs)`` contiguous spans with minimum total edit distance.

    The minimum over boundary placements equals the edit distance between the
    hypothesis and the concatenated references, so one alignment against the
    concatenation is computed and cut at reference boundaries. Insertions that
    fall exactly on a boundary stay with the earlier segment.

    Returns the ``(start, end)`` spans and the total distance.
    """
    if not refs:
        raise ValueError("at least one reference segment is required")
    n = len(hyp)
    concat = [w for r in refs for w in r]
    R = len(concat)
    ref_end = np.cumsum([len(r) for r in refs])
    if n == 0:
        return [(0, 0)] * len(refs), R

    vocab: dict[str, int] = {}
    h = np.array([vocab.setdefault(w, len(vocab)) for w in hyp])
    r = np.array([vocab.setdefault(w, len(vocab)) for w in concat])
    # dist[i, j]: edit distance of hyp[:i] vs concat[:j]
    dist = np.empty((n + 1, R + 1), dtype=np.int32)
    dist[0] = np.arange(R + 1)
    cols = np.arange(R + 1)
    for i in range(1, n + 1):
        prev = dist[i - 1]
        row = np.empty(R + 1, dtype=np.int32)
        row[0] = i
        row[1:] = np.minimum(prev[1:] + 1, prev[:-1] + (r != h[i - 1]))
        # deletions along the row: row[j] = min_k<=j row[k] + (j - k)
        row = np.minimum.accumulate(row - cols) + cols
        dist[i] = row

    # backtrace, recording the hypothesis index where each boundary column is crossed
    cut_at = {}
    i, j = n, R
    boundary_cols = set(int(e) for e in ref_end[:-1])
    while i > 0 or j > 0:
        if j in boundary_cols and j not in cut_at:
            cut_at[j] = i
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (r[j - 1] != h[i - 1]):
            i, j = i - 1, j - 1
        elif j > 0 and dist[i, j] == dist[i, j - 1] + 1:
            j -= 1
        else:
            i -= 1
    if 0 in boundary_cols and 0 not in cut_at:
        cut_at[0] = 0
    cuts = [0] + [cut_at[int(e)] for e in ref_end[:-1]] + [n]
    spans = [(cuts[s], cuts[s + 1]) for s in range(len(refs))]
    return spans, int(dist[n, R])


@dataclass
class RefSegment:
    tokens: list[str]
    start_ms: float
    end_ms: float

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms


def stream_laal(hyp: Sequence[str], delays: Sequence[float], refs: Sequence[RefSegment],
                weighting: str = "unweighted", spans=None) -> tuple[float, int]:
    """Mean per-segment LAAL after resegmenting the whole-talk hypothesis.

    Delays are re-based to each segment's start. Segments that receive no
    hypothesis tokens are excluded; their count is returned alongside.
    """
    if len(hyp) != len(delays):
        raise ValueError("one delay per hypothesis token required")
    if spans is None:
        spans, _ = resegment(hyp, [r.tokens for r in refs])
    values, weights, empty = [], [], 0
    for (a, b), ref in zip(spans, refs):
        if b == a:
            empty += 1
            continue
        seg_delays = [d - ref.start_ms for d in delays[a:b]]
        values.append(laal(seg_delays, len(ref.tokens), ref.duration_ms))
        weights.append(ref.duration_ms if weighting == "duration" else 1.0)
    if not values:
        return UNDEFINED, empty
    if weighting not in ("unweighted", "duration"):
        raise ValueError(f"unknown weighting {weighting!r}")
    return float(np.average(values, weights=weights)), empty


def rtf(compute_ms: float, speech_ms: float) -> float:
    if speech_ms <= 0:
        raise ValueError("speech duration must be positive")
    return compute_ms / speech_ms


@dataclass
class LatencyReport:
    laal_ms: float
    laal_ca_ms: float
    stream_laal_ms: float
    stream_laal_ca_ms: float
    rtf: float
    tokens: int = 0
    segments: int = 0
    empty_segments: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = asdict(self)
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def latency_report(hyp: Sequence[str], delays: Sequence[float], ca_delays: Sequence[float],
                   refs: Sequence[RefSegment], duration_ms: float, compute_ms: float,
                   weighting: str = "unweighted") -> LatencyReport:
    """All latency numbers for one talk. Resegmentation is shared by both variants."""
    ref_len = sum(len(r.tokens) for r in refs)
    if refs:
        spans, _ = resegment(hyp, [r.tokens for r in refs])
        s, empty = stream_laal(hyp, delays, refs, weighting, spans)
        s_ca, _ = stream_laal(hyp, ca_delays, refs, weighting, spans)
    else:
        s = s_ca = UNDEFINED
        empty = 0
    return LatencyReport(
        laal_ms=laal(delays, ref_len, duration_ms),
        laal_ca_ms=laal(ca_delays, ref_len, duration_ms),
        stream_laal_ms=s,
        stream_laal_ca_ms=s_ca,
        rtf=rtf(compute_ms, duration_ms),
        tokens=len(hyp),
        segments=len(refs),
        empty_segments=empty,
    )
