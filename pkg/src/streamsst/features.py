"""Feature-frame stream I/O: JSONL (one chunk per line) or a binary ``.npy`` array."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .encoder import CHUNK_FRAMES, SpeechChunk
from .errors import ShapeError


def write_chunks(path, chunks: Iterable[SpeechChunk]) -> int:
    path = Path(path)
    chunks = list(chunks) if path.suffix == ".npy" else chunks
    if path.suffix == ".npy":
        for i, ch in enumerate(chunks):
            if ch.index != i:
                raise ShapeError("binary feature files hold chunks 0..n-1 in order")
        arr = np.stack([c.frames for c in chunks]) if chunks else np.zeros((0, CHUNK_FRAMES, 0), np.float32)
        np.save(path, arr)
        return len(chunks)
    n = 0
    with path.open("w") as f:
        for ch in chunks:
            f.write(json.dumps({"chunk_index": ch.index, "feature_dim": ch.frames.shape[1],
                                "frames": ch.frames.ravel().tolist()}) + "\n")
            n += 1
    return n


def read_chunks(path) -> Iterator[SpeechChunk]:
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path, mmap_mode="r")
        if arr.ndim != 3 or arr.shape[1] != CHUNK_FRAMES:
            raise ShapeError(f"expected (n, {CHUNK_FRAMES}, dim) array, got {arr.shape}")
        for i in range(arr.shape[0]):
            yield SpeechChunk(i, np.array(arr[i]))
        return
    with path.open() as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            frames = np.asarray(rec["frames"], dtype=np.float32)
            dim = rec.get("feature_dim") or frames.size // CHUNK_FRAMES
            if frames.size != CHUNK_FRAMES * dim:
                raise ShapeError(f"chunk {rec['chunk_index']}: {frames.size} values for {CHUNK_FRAMES}x{dim}")
            yield SpeechChunk(int(rec["chunk_index"]), frames.reshape(CHUNK_FRAMES, dim))
