import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import attention_loop, rotate_pairs
from streamsst.errors import CapacityError, ConfigError, MaskError, ShapeError
from streamsst.numerics import RotaryTable, conv1d_stride2, masked_attention, rope_apply

TABLE = RotaryTable(head_dim=16, max_pos=4096)


def test_position_zero_is_identity(rng):
    x = rng.standard_normal((1, 16)).astype(np.float32)
    np.testing.assert_array_equal(rope_apply(x, [0], TABLE), x)


def test_rotation_preserves_norm(rng):
    x = rng.standard_normal((1, 16)).astype(np.float32)
    y = rope_apply(x, [7], TABLE)
    assert abs(np.linalg.norm(y) - np.linalg.norm(x)) <= 1e-6 * max(1.0, np.linalg.norm(x))


def test_matches_pairwise_rotation_oracle(rng):
    x = rng.standard_normal((5, 16)).astype(np.float32)
    pos = [0, 1, 17, 300, 4095]
    got = rope_apply(x, pos, TABLE)
    want = np.stack([rotate_pairs(x[i], p) for i, p in enumerate(pos)])
    np.testing.assert_allclose(got, want, atol=2e-5)


def test_packed_heads_rotate_independently(rng):
    x = rng.standard_normal((3, 48)).astype(np.float32)
    got = rope_apply(x, [2, 5, 9], TABLE)
    for b in range(3):
        np.testing.assert_array_equal(got[:, b * 16:(b + 1) * 16], rope_apply(x[:, b * 16:(b + 1) * 16], [2, 5, 9], TABLE))


def test_relative_example(rng):
    q, k = rng.standard_normal((2, 1, 16)).astype(np.float32)
    a = (rope_apply(q, [5], TABLE) @ rope_apply(k, [3], TABLE).T).item()
    b = (rope_apply(q, [9], TABLE) @ rope_apply(k, [7], TABLE).T).item()
    assert abs(a - b) <= 1e-5


@given(p=st.integers(0, 3000), delta=st.sampled_from([1, 10, 1000]), seed=st.integers(0, 2**16))
def test_dot_product_depends_only_on_offset(p, delta, seed):
    r = np.random.default_rng(seed)
    q, k = r.standard_normal((2, 1, 16)).astype(np.float32)
    base = (rope_apply(q, [delta], TABLE) @ rope_apply(k, [0], TABLE).T).item()
    moved = (rope_apply(q, [p + delta], TABLE) @ rope_apply(k, [p], TABLE).T).item()
    assert abs(base - moved) <= 1e-4 * max(1.0, abs(base))


def test_rope_errors():
    with pytest.raises(ConfigError):
        RotaryTable(head_dim=7, max_pos=10)
    with pytest.raises(ConfigError):
        rope_apply(np.zeros((1, 15), np.float32), [0], TABLE)
    with pytest.raises(ConfigError):
        rope_apply(np.zeros((1, 24), np.float32), [0], TABLE)
    with pytest.raises(CapacityError):
        rope_apply(np.zeros((1, 16), np.float32), [4096], TABLE)
    with pytest.raises(ShapeError):
        rope_apply(np.zeros((2, 16), np.float32), [0], TABLE)


def test_single_allowed_key_returns_its_value(rng):
    q, k, v = (rng.standard_normal((1, 8)).astype(np.float32) for _ in range(3))
    out = masked_attention(q, k, v, np.ones((1, 1), bool), heads=2)
    np.testing.assert_allclose(out, v, atol=1e-7)


def test_full_mask_equals_plain_attention(rng):
    q, k, v = (rng.standard_normal((6, 8)).astype(np.float32) for _ in range(3))
    out = masked_attention(q, k, v, np.ones((6, 6), bool), heads=1)
    s = q @ k.T / np.sqrt(8)
    w = np.exp(s - s.max(1, keepdims=True))
    np.testing.assert_allclose(out, (w / w.sum(1, keepdims=True)) @ v, atol=1e-6)


@pytest.mark.parametrize("heads", [1, 2, 4])
def test_attention_vs_loop(rng, heads):
    q, k, v = (rng.standard_normal((8, 8)).astype(np.float32) for _ in range(3))
    mask = rng.random((8, 8)) < 0.6
    mask[np.arange(8), rng.integers(0, 8, 8)] = True
    got = masked_attention(q, k, v, mask, heads)
    np.testing.assert_allclose(got, attention_loop(q, k, v, mask, heads), atol=1e-6)


def test_masked_keys_get_zero_weight(rng):
    q, k = rng.standard_normal((2, 4, 8)).astype(np.float32)
    v = np.zeros((4, 8), np.float32)
    v[3] = 1e6  # would dominate if it leaked through
    mask = np.array([[1, 1, 1, 0]] * 4, bool)
    assert np.abs(masked_attention(q, k, v, mask, 2)).max() == 0.0


def test_attention_errors(rng):
    q = rng.standard_normal((2, 8)).astype(np.float32)
    with pytest.raises(MaskError):
        masked_attention(q, q, q, np.array([[True, False], [False, False]]), 2)
    with pytest.raises(ShapeError):
        masked_attention(q, q, q, np.ones((2, 3), bool), 2)
    with pytest.raises(ShapeError):
        masked_attention(q, q[:, :4], q, np.ones((2, 2), bool), 2)


def test_conv_sum_kernel():
    x = np.array([[1.0, 2.0], [3.0, 5.0]], np.float32)
    eye = np.stack([np.eye(2), np.eye(2)]).astype(np.float32)
    np.testing.assert_array_equal(conv1d_stride2(x, eye), [[4.0, 7.0]])


@pytest.mark.parametrize("frames,expected", [(48, 24), (96, 48)])
def test_conv_halves(rng, frames, expected):
    k = rng.standard_normal((2, 4, 4)).astype(np.float32)
    assert conv1d_stride2(rng.standard_normal((frames, 4)), k).shape == (expected, 4)


def test_two_convs_quarter_frames(rng):
    k = rng.standard_normal((2, 4, 4)).astype(np.float32)
    assert conv1d_stride2(conv1d_stride2(rng.standard_normal((96, 4)), k), k).shape == (24, 4)


def test_conv_errors(rng):
    with pytest.raises(ShapeError):
        conv1d_stride2(np.zeros((3, 4)), np.zeros((2, 4, 4)))
    with pytest.raises(ShapeError):
        conv1d_stride2(np.zeros((4, 4)), np.zeros((2, 3, 4)))
