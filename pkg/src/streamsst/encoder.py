"""Chunkwise-causal streaming speech encoder and the speech-to-embedding adapter."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError, StreamDiscontinuityError
from .numerics import (
    DTYPE,
    RotaryTable,
    as_matrix,
    conv1d_stride2,
    gelu,
    masked_softmax,
    merge_heads,
    rms_norm,
    rope_apply,
    split_heads,
    uniform_init,
)

CHUNK_FRAMES = 48
CHUNK_MS = 960


@dataclass(frozen=True)
class SpeechChunk:
    index: int
    frames: np.ndarray

    def __post_init__(self):
        frames = as_matrix(self.frames, "frames")
        if frames.shape[0] != CHUNK_FRAMES:
            raise ShapeError(f"chunk {self.index} has {frames.shape[0]} frames, expected {CHUNK_FRAMES}")
        object.__setattr__(self, "frames", frames)

    @property
    def start_ms(self) -> int:
        return self.index * CHUNK_MS

    @property
    def end_ms(self) -> int:
        return (self.index + 1) * CHUNK_MS


@dataclass
class EncoderConfig:
    layers: int = 4
    heads: int = 4
    model_dim: int = 64
    feature_dim: int = 80
    window: int = 10  # w^s, in chunks
    chunk_frames: int = CHUNK_FRAMES
    decoder_dim: int = 64
    rope_base: float = 10000.0
    max_pos: int = 8192
    init_scale: float = 0.08

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ConfigError("encoder model_dim must be divisible by heads")
        if (self.model_dim // self.heads) % 2:
            raise ConfigError("encoder head_dim must be even")
        if self.window < 1:
            raise ConfigError("encoder window must be >= 1")
        if self.chunk_frames != CHUNK_FRAMES:
            raise ConfigError(f"chunk_frames is fixed at {CHUNK_FRAMES}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


@dataclass
class EncoderLayer:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


@dataclass
class EncoderWeights:
    proj_in: np.ndarray
    layers: list[EncoderLayer]
    conv1: np.ndarray
    conv2: np.ndarray
    proj_out: np.ndarray

    @classmethod
    def random(cls, cfg: EncoderConfig, seed: int = 0) -> "EncoderWeights":
        rng = np.random.default_rng(seed)
        d, s = cfg.model_dim, cfg.init_scale
        layers = [
            EncoderLayer(
                wq=uniform_init(rng, (d, d), s),
                wk=uniform_init(rng, (d, d), s),
                wv=uniform_init(rng, (d, d), s),
                wo=uniform_init(rng, (d, d), s),
                w1=uniform_init(rng, (d, 4 * d), s),
                w2=uniform_init(rng, (4 * d, d), s),
            )
            for _ in range(cfg.layers)
        ]
        return cls(
            proj_in=uniform_init(rng, (cfg.feature_dim, d), s),
            layers=layers,
            conv1=uniform_init(rng, (2, d, d), s),
            conv2=uniform_init(rng, (2, d, d), s),
            proj_out=uniform_init(rng, (d, cfg.decoder_dim), s),
        )


def build_chunk_mask(n_chunks: int, chunk_frames: int, window: int) -> np.ndarray:
    """Frame-level mask: chunk i sees chunks [i - window + 1, i], fully within a chunk."""
    chunk_of = np.arange(n_chunks * chunk_frames) // chunk_frames
    return chunk_window_mask(chunk_of, chunk_of, window)


def chunk_window_mask(query_chunks, key_chunks, window: int) -> np.ndarray:
    q = np.asarray(query_chunks)[:, None]
    k = np.asarray(key_chunks)[None, :]
    return (k <= q) & (k >= q - window + 1)


class EncoderCache:
    """Pre-rotation per-layer K/V for the most recent ``window`` chunks.

    Storage is a linear buffer of twice the window that is compacted when
    full, so the live window is always a contiguous slice.
    """

    def __init__(self, cfg: EncoderConfig):
        self.window = cfg.window
        self.chunk_frames = cfg.chunk_frames
        cap = 2 * cfg.window * cfg.chunk_frames
        self._k = np.zeros((cfg.layers, cap, cfg.model_dim), dtype=DTYPE)
        self._v = np.zeros_like(self._k)
        self._start = 0
        self._end = 0
        self.oldest_chunk = 0
        self.next_chunk = 0

    @property
    def n_chunks(self) -> int:
        return (self._end - self._start) // self.chunk_frames

    @property
    def n_frames(self) -> int:
        return self._end - self._start

    def keys(self, layer: int) -> np.ndarray:
        return self._k[layer, self._start:self._end]

    def values(self, layer: int) -> np.ndarray:
        return self._v[layer, self._start:self._end]

    def chunk_ids(self) -> np.ndarray:
        return np.arange(self.oldest_chunk, self.next_chunk)

    def append(self, k_new: np.ndarray, v_new: np.ndarray, n_chunks: int) -> None:
        """Append (layers, frames, dim) K/V for ``n_chunks`` and evict FIFO."""
        n = k_new.shape[1]
        cap = self._k.shape[1]
        keep_frames = self.window * self.chunk_frames
        if n >= keep_frames:
            self._k[:, :keep_frames] = k_new[:, n - keep_frames:]
            self._v[:, :keep_frames] = v_new[:, n - keep_frames:]
            self._start, self._end = 0, keep_frames
        else:
            if self._end + n > cap:
                live = self._end - self._start
                self._k[:, :live] = self._k[:, self._start:self._end]
                self._v[:, :live] = self._v[:, self._start:self._end]
                self._start, self._end = 0, live
            self._k[:, self._end:self._end + n] = k_new
            self._v[:, self._end:self._end + n] = v_new
            self._end += n
            if self._end - self._start > keep_frames:
                self._start = self._end - keep_frames
        self.next_chunk += n_chunks
        self.oldest_chunk = self.next_chunk - self.n_chunks


class StreamEncoder:
    def __init__(self, cfg: EncoderConfig | None = None, weights: EncoderWeights | None = None, seed: int = 0):
        self.cfg = cfg or EncoderConfig()
        self.weights = weights or EncoderWeights.random(self.cfg, seed)
        self.table = RotaryTable(self.cfg.head_dim, self.cfg.max_pos, self.cfg.rope_base)

    def new_cache(self) -> EncoderCache:
        return EncoderCache(self.cfg)

    def flops(self, n_query: int, n_key: int) -> float:
        d = self.cfg.model_dim
        per_layer = 2 * n_query * (4 * d * d + 8 * d * d) + 4 * n_query * n_key * d
        return self.cfg.layers * per_layer + 2 * n_query * self.cfg.feature_dim * d

    def _attend(self, q, k, v, q_pos, k_pos, mask):
        cfg = self.cfg
        qh = split_heads(rope_apply(q, q_pos, self.table), cfg.heads)
        kh = split_heads(rope_apply(k, k_pos, self.table), cfg.heads)
        vh = split_heads(v, cfg.heads)
        scores = (qh @ kh.transpose(0, 2, 1)) * DTYPE(1.0 / np.sqrt(cfg.head_dim))
        return merge_heads(masked_softmax(scores, mask[None]) @ vh)

    def _ffn(self, layer: EncoderLayer, x):
        return gelu(rms_norm(x) @ layer.w1) @ layer.w2

    def encode_offline(self, frames: np.ndarray) -> np.ndarray:
        """Full-sequence pass under the chunk mask, absolute positions, no cache."""
        cfg = self.cfg
        frames = as_matrix(frames, "frames")
        if frames.shape[0] % cfg.chunk_frames:
            raise ShapeError("frame count must be a multiple of the chunk size")
        n = frames.shape[0]
        mask = build_chunk_mask(n // cfg.chunk_frames, cfg.chunk_frames, cfg.window)
        pos = np.arange(n)
        x = frames @ self.weights.proj_in
        for layer in self.weights.layers:
            h = rms_norm(x)
            att = self._attend(h @ layer.wq, h @ layer.wk, h @ layer.wv, pos, pos, mask)
            x = x + att @ layer.wo
            x = x + self._ffn(layer, x)
        return rms_norm(x)

    def encode_incremental(self, cache: EncoderCache, new_chunks: Sequence[SpeechChunk]) -> np.ndarray:
        """Encode ``m`` new chunks against the cached window; advances the cache."""
        cfg = self.cfg
        if not new_chunks:
            return np.zeros((0, cfg.model_dim), dtype=DTYPE)
        expected = cache.next_chunk
        for i, ch in enumerate(new_chunks):
            if ch.index != expected + i:
                raise StreamDiscontinuityError(
                    f"expected chunk {expected + i}, got {ch.index}"
                )
        m = len(new_chunks)
        first_new = new_chunks[0].index
        # older cached chunks are outside every new query's window
        lo = max(cache.oldest_chunk, first_new - cfg.window + 1)
        skip = (lo - cache.oldest_chunk) * cfg.chunk_frames
        n_ctx = cache.n_frames - skip
        q_chunks = np.repeat(np.arange(first_new, first_new + m), cfg.chunk_frames)
        k_chunks = np.concatenate([np.repeat(np.arange(lo, first_new), cfg.chunk_frames), q_chunks])
        mask = chunk_window_mask(q_chunks, k_chunks, cfg.window)
        n_new = m * cfg.chunk_frames
        k_pos = np.arange(n_ctx + n_new)
        q_pos = k_pos[n_ctx:]

        x = np.concatenate([c.frames for c in new_chunks]) @ self.weights.proj_in
        new_k = np.empty((cfg.layers, n_new, cfg.model_dim), dtype=DTYPE)
        new_v = np.empty_like(new_k)
        for li, layer in enumerate(self.weights.layers):
            h = rms_norm(x)
            k = h @ layer.wk
            v = h @ layer.wv
            new_k[li], new_v[li] = k, v
            k_all = np.concatenate([cache.keys(li)[skip:], k])
            v_all = np.concatenate([cache.values(li)[skip:], v])
            att = self._attend(h @ layer.wq, k_all, v_all, q_pos, k_pos, mask)
            x = x + att @ layer.wo
            x = x + self._ffn(layer, x)
        cache.append(new_k, new_v, m)
        return rms_norm(x)

    def adapt(self, encoded: np.ndarray) -> np.ndarray:
        """Downsample frames 4x with two stride-2 convolutions, project to decoder dim."""
        encoded = as_matrix(encoded, "encoded")
        if encoded.shape[0] % 4:
            raise ShapeError(f"adapter input rows {encoded.shape[0]} not divisible by 4")
        return adapt(encoded, self.weights.conv1, self.weights.conv2, self.weights.proj_out)


def adapt(encoded, conv1, conv2, proj) -> np.ndarray:
    encoded = np.asarray(encoded, dtype=DTYPE)
    if encoded.shape[0] % 4:
        raise ShapeError(f"adapter input rows {encoded.shape[0]} not divisible by 4")
    h = conv1d_stride2(conv1d_stride2(encoded, conv1), conv2)
    return (h @ np.asarray(proj, dtype=DTYPE)).astype(DTYPE)
