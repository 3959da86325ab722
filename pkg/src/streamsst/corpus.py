"""Seeded synthetic talks standing in for a real aligned speech-translation corpus."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .encoder import CHUNK_FRAMES, CHUNK_MS, SpeechChunk
from .errors import ConfigError
from .metrics import RefSegment
from .trajectory import Utterance


@dataclass
class CorpusParams:
    utterances_per_talk: tuple[int, int] = (4, 10)
    min_utterance_ms: int = 2000
    max_utterance_ms: int = 28800
    max_gap_ms: int = 4000
    word_ms: tuple[int, int] = (180, 650)
    translation_ratio: tuple[float, float] = (0.8, 1.3)
    unaligned_prob: float = 0.1
    jitter: int = 2
    vocab: int = 256

    def __post_init__(self):
        self.utterances_per_talk = tuple(self.utterances_per_talk)
        self.word_ms = tuple(self.word_ms)
        self.translation_ratio = tuple(self.translation_ratio)
        if not 0 < self.min_utterance_ms <= self.max_utterance_ms:
            raise ConfigError("need 0 < min_utterance_ms <= max_utterance_ms")
        if self.utterances_per_talk[0] < 0 or self.utterances_per_talk[0] > self.utterances_per_talk[1]:
            raise ConfigError("bad utterances_per_talk range")


def _utterance(rng: np.random.Generator, uid: str, start: int, p: CorpusParams) -> dict:
    dur = int(rng.integers(p.min_utterance_ms, p.max_utterance_ms + 1))
    n_words = max(1, int(dur / rng.integers(p.word_ms[0], p.word_ms[1] + 1)))
    # strictly increasing integer word ends inside (0, dur]
    n_words = min(n_words, dur)
    ends = np.sort(rng.choice(np.arange(1, dur + 1), size=n_words, replace=False))
    ends[-1] = max(ends[-1], dur - int(rng.integers(0, 200)))
    starts = np.concatenate([[0], ends[:-1]])
    transcript = [f"s{int(x)}" for x in rng.integers(0, 5000, size=n_words)]
    ratio = rng.uniform(*p.translation_ratio)
    n_trans = max(1, int(round(n_words * ratio)))
    translation = [f"w{int(x)}" for x in rng.integers(4, p.vocab, size=n_trans)]
    pairs = []
    for i in range(n_trans):
        if rng.random() < p.unaligned_prob:
            continue
        k = int(round(i * (n_words - 1) / max(n_trans - 1, 1))) + int(rng.integers(-p.jitter, p.jitter + 1))
        pairs.append([i, int(np.clip(k, 0, n_words - 1))])
    return {
        "id": uid,
        "start_ms": start,
        "end_ms": start + dur,
        "transcript": transcript,
        "translation": translation,
        "sx_alignment": [[w, int(s), int(e)] for w, s, e in zip(transcript, starts, ends)],
        "xy_alignment": pairs,
    }


def generate_talk(rng: np.random.Generator, talk_id: str, p: CorpusParams) -> dict:
    n_utt = int(rng.integers(p.utterances_per_talk[0], p.utterances_per_talk[1] + 1))
    t = int(rng.integers(0, p.max_gap_ms + 1))
    utts = []
    for j in range(n_utt):
        u = _utterance(rng, f"{talk_id}_u{j:03d}", t, p)
        utts.append(u)
        t = u["end_ms"] + int(rng.integers(0, p.max_gap_ms + 1))
    duration = max(t, CHUNK_MS)
    return {"id": talk_id, "duration_ms": duration, "utterances": utts}


def generate_corpus(seed: int, n_talks: int, params: CorpusParams | None = None) -> dict:
    p = params or CorpusParams()
    rng = np.random.default_rng(seed)
    return {"seed": seed, "talks": [generate_talk(rng, f"talk{i:03d}", p) for i in range(n_talks)]}


def write_manifest(manifest: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_manifest(path) -> dict:
    data = json.loads(Path(path).read_text())
    if "talks" not in data:
        # a single talk given as {utterances: [...]}
        data = {"talks": [{"id": data.get("id", "talk"), **data}]}
    for talk in data["talks"]:
        talk.setdefault("duration_ms", max((u["end_ms"] for u in talk["utterances"]), default=0))
    return data


def talk_utterances(talk: dict) -> list[Utterance]:
    return [Utterance.from_json(u) for u in talk["utterances"]]


def talk_references(talk: dict) -> list[RefSegment]:
    return [RefSegment(list(u["translation"]), float(u["start_ms"]), float(u["end_ms"]))
            for u in sorted(talk["utterances"], key=lambda u: u["start_ms"])]


def talk_chunks(talk: dict, seed: int, feature_dim: int = 80) -> Iterator[SpeechChunk]:
    """Lazily generated feature frames: louder inside utterances than in gaps."""
    import zlib

    rng = np.random.default_rng([seed, zlib.crc32(talk["id"].encode())])
    n = int(np.ceil(talk["duration_ms"] / CHUNK_MS))
    spans = [(u["start_ms"], u["end_ms"]) for u in talk["utterances"]]
    frame_ms = CHUNK_MS / CHUNK_FRAMES
    for c in range(n):
        t = c * CHUNK_MS + frame_ms * np.arange(CHUNK_FRAMES)
        speech = np.zeros(CHUNK_FRAMES, dtype=bool)
        for a, b in spans:
            speech |= (t >= a) & (t < b)
        gain = np.where(speech, 1.0, 0.1)[:, None]
        frames = (rng.standard_normal((CHUNK_FRAMES, feature_dim)) * gain).astype(np.float32)
        yield SpeechChunk(c, frames)


def random_chunks(n: int, seed: int = 0, feature_dim: int = 80) -> Iterator[SpeechChunk]:
    rng = np.random.default_rng(seed)
    for c in range(n):
        yield SpeechChunk(c, rng.standard_normal((CHUNK_FRAMES, feature_dim)).astype(np.float32))
