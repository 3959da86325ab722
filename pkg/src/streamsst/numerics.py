"""Dense float32 primitives shared by the encoder and the decoder.

Matrices are plain ``numpy.ndarray`` objects of dtype float32. Functions here
are pure: they never mutate their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigError, MaskError, ShapeError

DTYPE = np.float32


def as_matrix(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=DTYPE)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def uniform_init(rng: np.random.Generator, shape, scale: float = 0.08) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape).astype(DTYPE)


def rms_norm(x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    # per-row statistics only, so streaming and offline paths agree
    ms = np.mean(np.square(x, dtype=np.float32), axis=-1, keepdims=True)
    return (x / np.sqrt(ms + eps)).astype(DTYPE)


def gelu(x: np.ndarray) -> np.ndarray:
    return (0.5 * x * (1.0 + np.tanh(0.7978845608 * (x + 0.044715 * x**3)))).astype(DTYPE)


@dataclass(frozen=True)
class RotaryTable:
    """Precomputed cos/sin for rotary embedding over adjacent dimension pairs."""

    head_dim: int
    max_pos: int
    base: float = 10000.0
    cos: np.ndarray = field(init=False, repr=False)
    sin: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.head_dim <= 0 or self.head_dim % 2:
            raise ConfigError(f"head_dim must be a positive even number, got {self.head_dim}")
        if self.max_pos < 1:
            raise ConfigError("max_pos must be >= 1")
        inv_freq = self.base ** (-np.arange(0, self.head_dim, 2, dtype=np.float64) / self.head_dim)
        angles = np.arange(self.max_pos, dtype=np.float64)[:, None] * inv_freq[None, :]
        object.__setattr__(self, "cos", np.cos(angles).astype(DTYPE))
        object.__setattr__(self, "sin", np.sin(angles).astype(DTYPE))


def rope_apply(x: np.ndarray, positions, table: RotaryTable) -> np.ndarray:
    """Rotate each row of ``x`` by its position.

    The last axis may pack several heads side by side; every ``head_dim``
    block is rotated identically. Rows correspond to ``positions``.
    """
    x = np.asarray(x, dtype=DTYPE)
    pos = np.asarray(positions, dtype=np.int64)
    if x.shape[-1] % 2:
        raise ConfigError("vector dimension must be even for rotary embedding")
    if x.shape[-1] % table.head_dim:
        raise ConfigError(
            f"vector dim {x.shape[-1]} is not a multiple of table head_dim {table.head_dim}"
        )
    if pos.shape != (x.shape[-2],):
        raise ShapeError(f"{pos.shape[0] if pos.ndim else 0} positions for {x.shape[-2]} rows")
    if pos.size and (pos.min() < 0 or pos.max() >= table.max_pos):
        raise CapacityError(f"position {int(pos.max())} outside rotary table of size {table.max_pos}")
    n_blocks = x.shape[-1] // table.head_dim
    half = table.head_dim // 2
    cos = table.cos[pos]
    sin = table.sin[pos]
    xr = x.reshape(*x.shape[:-1], n_blocks, half, 2)
    even, odd = xr[..., 0], xr[..., 1]
    cos = cos[:, None, :]
    sin = sin[:, None, :]
    out = np.empty_like(xr)
    out[..., 0] = even * cos - odd * sin
    out[..., 1] = even * sin + odd * cos
    return out.reshape(x.shape)


def split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    n, d = x.shape
    if d % heads:
        raise ShapeError(f"dim {d} not divisible by {heads} heads")
    return x.reshape(n, heads, d // heads).transpose(1, 0, 2)


def merge_heads(x: np.ndarray) -> np.ndarray:
    h, n, hd = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * hd)


def masked_softmax(scores: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Softmax over the last axis restricted to ``allowed`` entries.

    Disallowed entries get exactly zero weight. ``allowed`` broadcasts against
    ``scores``.
    """
    allowed = np.broadcast_to(allowed, scores.shape)
    if not np.all(allowed.any(axis=-1)):
        raise MaskError("a query row has no allowed key")
    s = np.where(allowed, scores, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    w = np.exp(s)
    w /= w.sum(axis=-1, keepdims=True)
    return w.astype(DTYPE)


def masked_attention(q, k, v, mask, heads: int) -> np.ndarray:
    """Scaled dot-product multi-head attention under a boolean mask.

    ``mask[i, j]`` is True when query ``i`` may attend key ``j``.
    """
    q = np.asarray(q, dtype=DTYPE)
    k = np.asarray(k, dtype=DTYPE)
    v = np.asarray(v, dtype=DTYPE)
    mask = np.asarray(mask, dtype=bool)
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeError(f"inconsistent shapes q{q.shape} k{k.shape} v{v.shape}")
    if mask.shape != (q.shape[0], k.shape[0]):
        raise ShapeError(f"mask shape {mask.shape} != ({q.shape[0]}, {k.shape[0]})")
    qh, kh, vh = split_heads(q, heads), split_heads(k, heads), split_heads(v, heads)
    scale = 1.0 / np.sqrt(qh.shape[-1])
    scores = (qh @ kh.transpose(0, 2, 1)) * DTYPE(scale)
    weights = masked_softmax(scores, mask[None])
    return merge_heads(weights @ vh)


def conv1d_stride2(x, kernel, bias=None) -> np.ndarray:
    """Width-2, stride-2, unpadded 1-D convolution over frames.

    ``kernel`` has shape (2, in_dim, out_dim); output frame t combines input
    frames 2t and 2t+1.
    """
    x = np.asarray(x, dtype=DTYPE)
    kernel = np.asarray(kernel, dtype=DTYPE)
    if x.ndim != 2:
        raise ShapeError("conv input must be 2-D (frames x dim)")
    if x.shape[0] % 2:
        raise ShapeError(f"odd frame count {x.shape[0]} for stride-2 convolution")
    if kernel.shape[:2] != (2, x.shape[1]):
        raise ShapeError(f"kernel shape {kernel.shape} does not match input dim {x.shape[1]}")
    out = x[0::2] @ kernel[0] + x[1::2] @ kernel[1]
    if bias is not None:
        out = out + bias
    return out.astype(DTYPE)
