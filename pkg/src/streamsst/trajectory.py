"""Read/write trajectories from word alignments, robust segments, multi-latency merging.

Transcript indices in alignments are 1-based (``None`` marks an unaligned
translation token); times are milliseconds relative to the utterance start.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .encoder import CHUNK_MS
from .errors import AlignmentError, SegmentationError

SEGMENT_CHUNKS = 30


@dataclass
class Step:
    chunk_start: int
    chunk_end: int  # exclusive
    tokens: list[str] = field(default_factory=list)

    @property
    def n_chunks(self) -> int:
        return self.chunk_end - self.chunk_start


@dataclass
class Trajectory:
    steps: list[Step]
    boundaries_ms: list[float] = field(default_factory=list)
    clamped: bool = False

    def flatten(self) -> list[str]:
        return [t for s in self.steps for t in s.tokens]

    @property
    def n_chunks(self) -> int:
        return self.steps[-1].chunk_end - self.steps[0].chunk_start if self.steps else 0

    def delays_ms(self) -> list[float]:
        """Each token is written once its step's last chunk has been read."""
        return [s.chunk_end * CHUNK_MS for s in self.steps for _ in s.tokens]


def monotonize(indices: Sequence[int | None]) -> list[int]:
    """Running maximum; unaligned tokens inherit the previous index (first -> 1)."""
    out: list[int] = []
    cur = 1
    for k in indices:
        if k is not None and k > cur:
            cur = k
        out.append(cur)
    return out


def xy_from_pairs(pairs, n_translation: int) -> list[int | None]:
    """Collapse 0-based (translation i, transcript k) word pairs to 1-based indices.

    A translation word aligned to several transcript words keeps the latest.
    """
    out: list[int | None] = [None] * n_translation
    for i, k in pairs:
        if not 0 <= i < n_translation:
            raise AlignmentError(f"translation index {i} out of range")
        out[i] = k + 1 if out[i] is None else max(out[i], k + 1)
    return out


def map_delays(sx: Sequence[float], xy: Sequence[int]) -> list[float]:
    """Speech boundary of each translation token via its aligned transcript token."""
    out = []
    for i, k in enumerate(xy):
        if k is None or not 1 <= k <= len(sx):
            raise AlignmentError(f"translation token {i} aligned to transcript index {k} of {len(sx)}")
        out.append(sx[k - 1])
    return out


def n_chunks_for(duration_ms: float) -> int:
    return max(1, math.ceil(duration_ms / CHUNK_MS))


def build_trajectory(duration_ms: float, boundaries_ms: Sequence[float], tokens: Sequence[str]) -> Trajectory:
    """Group tokens by the 960 ms chunk containing their speech boundary.

    Chunks are half-open, so a boundary on an edge belongs to the later chunk.
    Boundaries past the last chunk are clamped into it; ``clamped`` flags
    boundaries beyond the utterance duration.
    """
    if len(boundaries_ms) != len(tokens):
        raise AlignmentError("one boundary per token required")
    n = n_chunks_for(duration_ms)
    steps = [Step(c, c + 1) for c in range(n)]
    clamped = False
    prev = -math.inf
    for b, tok in zip(boundaries_ms, tokens):
        if b < prev:
            raise AlignmentError("speech boundaries must be non-decreasing")
        prev = b
        if b > duration_ms:
            clamped = True
        c = min(int(b // CHUNK_MS), n - 1)
        steps[c].tokens.append(tok)
    return Trajectory(steps, list(boundaries_ms), clamped)


def augment_latency(traj: Trajectory, m: int) -> Trajectory:
    """Merge every ``m`` consecutive steps; a trailing partial group stays shorter."""
    if m < 1:
        raise ValueError("latency multiplier must be >= 1")
    steps = []
    for i in range(0, len(traj.steps), m):
        group = traj.steps[i:i + m]
        steps.append(Step(group[0].chunk_start, group[-1].chunk_end, [t for s in group for t in s.tokens]))
    return Trajectory(steps, list(traj.boundaries_ms), traj.clamped)


@dataclass
class Utterance:
    id: str
    start_ms: float
    end_ms: float
    transcript: list[str]
    translation: list[str]
    sx: list[float]  # right boundary of each transcript word, ms from utterance start
    xy_pairs: list[tuple[int, int]]

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms

    @property
    def n_chunks(self) -> int:
        return n_chunks_for(self.duration_ms)

    @classmethod
    def from_json(cls, d: dict) -> "Utterance":
        start = float(d["start_ms"])
        sx = []
        for entry in d.get("sx_alignment", []):
            if isinstance(entry, dict):
                sx.append(float(entry["end_ms"]))
            else:
                sx.append(float(entry[2]))
        return cls(
            id=str(d["id"]),
            start_ms=start,
            end_ms=float(d["end_ms"]),
            transcript=list(d.get("transcript", [])),
            translation=list(d.get("translation", [])),
            sx=sx,
            xy_pairs=[tuple(p) for p in d.get("xy_alignment", [])],
        )


def utterance_trajectory(u: Utterance) -> Trajectory:
    """Alignments -> monotone boundaries -> chunked trajectory for one utterance."""
    if any(b2 <= b1 for b1, b2 in zip(u.sx, u.sx[1:])):
        raise AlignmentError(f"{u.id}: speech-text boundaries not strictly increasing")
    if not u.translation:
        return build_trajectory(u.duration_ms, [], [])
    if not u.sx:
        raise AlignmentError(f"{u.id}: translation present but transcript has no boundaries")
    xy = monotonize(xy_from_pairs(u.xy_pairs, len(u.translation)))
    return build_trajectory(u.duration_ms, map_delays(u.sx, xy), u.translation)


@dataclass
class RobustSegment:
    start_ms: float
    start_chunk: int  # talk chunk grid index of the nominal or shifted start
    utterance_ids: list[str]
    trajectory: Trajectory
    span: int = SEGMENT_CHUNKS


@dataclass
class SegmentationResult:
    segments: list[RobustSegment]
    skipped: list[str]
    errors: dict[str, str]


def build_robust_segments(utterances: Sequence[Utterance], talk_end_ms: float | None = None,
                          span: int = SEGMENT_CHUNKS) -> SegmentationResult:
    """Cut a talk into ``span``-chunk windows, shifting a window back when it
    would start inside an utterance. Chunks without speech get empty runs.
    """
    utts = sorted(utterances, key=lambda u: u.start_ms)
    for a, b in zip(utts, utts[1:]):
        if b.start_ms < a.end_ms:
            raise SegmentationError(f"utterances {a.id} and {b.id} overlap")
    skipped = [u.id for u in utts if u.n_chunks > span]
    errors: dict[str, str] = {}
    trajs = {}
    for u in utts:
        if u.id in skipped:
            continue
        try:
            trajs[u.id] = utterance_trajectory(u)
        except AlignmentError as exc:
            errors[u.id] = str(exc)
    usable = [u for u in utts if u.id in trajs]
    if not utts:
        return SegmentationResult([], skipped, errors)
    end = talk_end_ms if talk_end_ms is not None else max(u.end_ms for u in utts)
    span_ms = span * CHUNK_MS

    segments = []
    start = 0.0
    while start < end:
        for u in utts:
            if u.start_ms < start < u.end_ms and u.id not in skipped:
                start = u.start_ms
                break
        ids, bounds, toks = [], [], []
        for u in usable:
            if u.start_ms < start or u.end_ms > start + span_ms:
                continue
            ids.append(u.id)
            offset = u.start_ms - start
            bounds.extend(offset + b for b in trajs[u.id].boundaries_ms)
            toks.extend(u.translation)
        traj = build_trajectory(span_ms, bounds, toks)
        segments.append(RobustSegment(start, int(start // CHUNK_MS), ids, traj))
        start += span_ms
    return SegmentationResult(segments, skipped, errors)
