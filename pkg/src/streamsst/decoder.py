"""Toy multi-turn decoder with a pinned-instruction + sliding-window KV cache.

Keys and values are cached before rotation. Every forward call lays out the
instruction followed by the retained window at contiguous positions starting
from zero and rotates on the fly, so positions stay bounded on unbounded
streams.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import (
    DTYPE,
    RotaryTable,
    gelu,
    masked_softmax,
    merge_heads,
    rms_norm,
    rope_apply,
    split_heads,
    uniform_init,
)

PAD, USER, ASSISTANT, EOT = 0, 1, 2, 3
SPECIAL_IDS = (PAD, USER, ASSISTANT, EOT)
SPECIAL_NAMES = {PAD: "<pad>", USER: "<user>", ASSISTANT: "<assistant>", EOT: "<eot>"}

DEFAULT_INSTRUCTION = "Translate the following speech from English to Chinese ."


def token_text(token_id: int) -> str:
    return SPECIAL_NAMES.get(token_id, f"w{token_id}")


def encode_instruction(text: str = DEFAULT_INSTRUCTION, vocab: int = 256) -> list[int]:
    """Deterministic toy tokenization: one id per whitespace word."""
    import zlib

    span = vocab - len(SPECIAL_IDS)
    return [len(SPECIAL_IDS) + zlib.crc32(w.encode()) % span for w in text.split()]


@dataclass
class DecoderConfig:
    layers: int = 4
    heads: int = 4
    model_dim: int = 64
    vocab: int = 256
    window: int = 1000  # w^t, in tokens
    rope_base: float = 10000.0
    max_pos: int = 8192
    init_scale: float = 0.08
    eot_bias: float = 0.25  # toy model: keeps turns short
    pin_instruction: bool = True

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ConfigError("decoder model_dim must be divisible by heads")
        if (self.model_dim // self.heads) % 2:
            raise ConfigError("decoder head_dim must be even")
        if self.window < 1:
            raise ConfigError("decoder window must be >= 1")
        if self.vocab <= len(SPECIAL_IDS):
            raise ConfigError("vocabulary too small")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


@dataclass
class DecoderLayer:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


@dataclass
class DecoderWeights:
    embed: np.ndarray
    layers: list[DecoderLayer]
    lm_head: np.ndarray
    lm_bias: np.ndarray

    @classmethod
    def random(cls, cfg: DecoderConfig, seed: int = 0) -> "DecoderWeights":
        rng = np.random.default_rng(seed)
        d, s = cfg.model_dim, cfg.init_scale
        layers = [
            DecoderLayer(
                wq=uniform_init(rng, (d, d), s),
                wk=uniform_init(rng, (d, d), s),
                wv=uniform_init(rng, (d, d), s),
                wo=uniform_init(rng, (d, d), s),
                w1=uniform_init(rng, (d, 4 * d), s),
                w2=uniform_init(rng, (4 * d, d), s),
            )
            for _ in range(cfg.layers)
        ]
        bias = np.zeros(cfg.vocab, dtype=DTYPE)
        bias[EOT] = cfg.eot_bias
        return cls(
            embed=uniform_init(rng, (cfg.vocab, d), s),
            layers=layers,
            lm_head=uniform_init(rng, (d, cfg.vocab), s),
            lm_bias=bias,
        )


class LambdaCache:
    """Pinned instruction K/V plus a FIFO window of the most recent tokens.

    Both segments hold pre-rotation K/V of shape (layers, n, dim). The window
    lives in a linear buffer of twice its capacity that is compacted when
    full, which keeps the live window contiguous.
    """

    def __init__(self, cfg: DecoderConfig):
        self.window = cfg.window
        self.instr_k = np.zeros((cfg.layers, 0, cfg.model_dim), dtype=DTYPE)
        self.instr_v = np.zeros_like(self.instr_k)
        cap = 2 * cfg.window
        self._k = np.zeros((cfg.layers, cap, cfg.model_dim), dtype=DTYPE)
        self._v = np.zeros_like(self._k)
        self._start = 0
        self._end = 0
        self.total_appended = 0

    def set_instruction(self, k: np.ndarray, v: np.ndarray) -> None:
        self.instr_k = k.copy()
        self.instr_v = v.copy()
        self.instr_k.flags.writeable = False
        self.instr_v.flags.writeable = False

    @property
    def instruction_len(self) -> int:
        return self.instr_k.shape[1]

    @property
    def ring_len(self) -> int:
        return self._end - self._start

    def ring_keys(self, layer: int) -> np.ndarray:
        return self._k[layer, self._start:self._end]

    def ring_values(self, layer: int) -> np.ndarray:
        return self._v[layer, self._start:self._end]

    def append(self, k_new: np.ndarray, v_new: np.ndarray) -> None:
        n = k_new.shape[1]
        w = self.window
        if n >= w:
            self._k[:, :w] = k_new[:, n - w:]
            self._v[:, :w] = v_new[:, n - w:]
            self._start, self._end = 0, w
        else:
            if self._end + n > self._k.shape[1]:
                live = self._end - self._start
                self._k[:, :live] = self._k[:, self._start:self._end]
                self._v[:, :live] = self._v[:, self._start:self._end]
                self._start, self._end = 0, live
            self._k[:, self._end:self._end + n] = k_new
            self._v[:, self._end:self._end + n] = v_new
            self._end += n
            if self._end - self._start > w:
                self._start = self._end - w
        self.total_appended += n


def assemble_lambda(cache: LambdaCache, table: RotaryTable):
    """Instruction K/V followed by window K/V at positions 0..L-1, rotated.

    Returns one ``(rotated_keys, values, positions)`` triple per layer. The
    cache itself is left untouched.
    """
    out = []
    for layer in range(cache.instr_k.shape[0]):
        k = np.concatenate([cache.instr_k[layer], cache.ring_keys(layer)])
        v = np.concatenate([cache.instr_v[layer], cache.ring_values(layer)])
        pos = np.arange(k.shape[0])
        out.append((rope_apply(k, pos, table), v, pos))
    return out


@dataclass
class Overlay:
    """Per-hypothesis K/V appended after the shared window (beam search)."""

    k: np.ndarray
    v: np.ndarray

    @classmethod
    def empty(cls, cfg: DecoderConfig) -> "Overlay":
        z = np.zeros((cfg.layers, 0, cfg.model_dim), dtype=DTYPE)
        return cls(z, z.copy())

    def extend(self, k_new, v_new) -> "Overlay":
        return Overlay(np.concatenate([self.k, k_new], axis=1), np.concatenate([self.v, v_new], axis=1))

    def __len__(self) -> int:
        return self.k.shape[1]


class Decoder:
    def __init__(self, cfg: DecoderConfig | None = None, weights: DecoderWeights | None = None, seed: int = 0):
        self.cfg = cfg or DecoderConfig()
        self.weights = weights or DecoderWeights.random(self.cfg, seed)
        self.table = RotaryTable(self.cfg.head_dim, self.cfg.max_pos, self.cfg.rope_base)

    def new_cache(self) -> LambdaCache:
        return LambdaCache(self.cfg)

    def embed(self, ids) -> np.ndarray:
        return self.weights.embed[np.asarray(ids, dtype=np.int64)]

    def logits(self, hidden: np.ndarray) -> np.ndarray:
        return rms_norm(hidden) @ self.weights.lm_head + self.weights.lm_bias

    def flops(self, n_query: int, n_key: int, with_head: bool = True) -> float:
        d = self.cfg.model_dim
        per_layer = 2 * n_query * 12 * d * d + 4 * n_query * n_key * d
        head = 2 * n_query * d * self.cfg.vocab if with_head else 0
        return self.cfg.layers * per_layer + head

    def start(self, cache: LambdaCache, instruction_ids) -> None:
        """Prefill the instruction; pinned unless the ablation switch is off."""
        x = self.embed(instruction_ids)
        if self.cfg.pin_instruction:
            _, k, v = self.forward(cache, x, commit=False)
            cache.set_instruction(k, v)
        else:
            self.forward(cache, x, commit=True)

    def forward(self, cache: LambdaCache, x: np.ndarray, overlay: Overlay | None = None, commit: bool = True):
        """Run new input rows ``x`` against the cache.

        Returns ``(hidden, new_k, new_v)``. With ``commit`` the new K/V are
        appended to the window; otherwise the caller keeps them (overlays).

        Query ``t`` sees the instruction plus the ``window`` most recent
        entries up to and including itself, laid out as its own Λ view.
        """
        cfg, table = self.cfg, self.table
        w = cfg.window
        n = x.shape[0]
        L = cache.instruction_len
        ring_n = cache.ring_len
        ov_n = len(overlay) if overlay is not None else 0
        old_n = ring_n + ov_n
        drop = max(0, old_n - (w - 1))
        ctx_n = old_n - drop

        # offsets of keys and queries within the retained sequence
        key_off = np.arange(ctx_n + n)
        q_off = ctx_n + np.arange(n)
        lo = np.maximum(q_off - w + 1, 0)
        ring_mask = (key_off[None, :] <= q_off[:, None]) & (key_off[None, :] >= lo[:, None])
        pos_common = L + q_off
        pos_own = L + (q_off - lo)
        shifted = bool(np.any(lo))
        instr_pos = np.arange(L)
        key_pos = L + key_off
        scale = DTYPE(1.0 / np.sqrt(cfg.head_dim))

        new_k = np.empty((cfg.layers, n, cfg.model_dim), dtype=DTYPE)
        new_v = np.empty_like(new_k)
        for li, layer in enumerate(self.weights.layers):
            h = rms_norm(x)
            q = h @ layer.wq
            k = h @ layer.wk
            v = h @ layer.wv
            new_k[li], new_v[li] = k, v
            parts_k = [cache.ring_keys(li)]
            parts_v = [cache.ring_values(li)]
            if ov_n:
                parts_k.append(overlay.k[li])
                parts_v.append(overlay.v[li])
            seq_k = np.concatenate(parts_k + [k])[drop:]
            seq_v = np.concatenate(parts_v + [v])[drop:]

            qh = split_heads(rope_apply(q, pos_common, table), cfg.heads)
            kh = split_heads(rope_apply(seq_k, key_pos, table), cfg.heads)
            scores = qh @ kh.transpose(0, 2, 1)
            allowed = ring_mask
            values = seq_v
            if L:
                q_instr = split_heads(rope_apply(q, pos_own, table), cfg.heads) if shifted else qh
                ih = split_heads(rope_apply(cache.instr_k[li], instr_pos, table), cfg.heads)
                scores = np.concatenate([q_instr @ ih.transpose(0, 2, 1), scores], axis=-1)
                allowed = np.concatenate([np.ones((n, L), dtype=bool), ring_mask], axis=1)
                values = np.concatenate([cache.instr_v[li], seq_v])
            weights = masked_softmax(scores * scale, allowed[None])
            att = merge_heads(weights @ split_heads(values, cfg.heads))
            x = x + att @ layer.wo
            x = x + gelu(rms_norm(x) @ layer.w1) @ layer.w2
        if commit:
            cache.append(new_k, new_v)
        return x, new_k, new_v
