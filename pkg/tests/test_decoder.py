import numpy as np
import pytest

from oracles import full_history_logits
from streamsst.decoder import (EOT, USER, Decoder, DecoderConfig, LambdaCache, Overlay, assemble_lambda,
                               encode_instruction)
from streamsst.errors import ConfigError


def _tiny(window=40, **kw):
    return Decoder(DecoderConfig(layers=2, heads=2, model_dim=32, vocab=64, window=window, **kw), seed=4)


def test_empty_ring_positions():
    dec = _tiny()
    cache = dec.new_cache()
    dec.start(cache, [5, 6, 7, 8])
    views = assemble_lambda(cache, dec.table)
    assert len(views) == dec.cfg.layers
    k, v, pos = views[0]
    assert list(pos) == [0, 1, 2, 3]
    assert k.shape == (4, 32)


def test_seam_is_contiguous():
    dec = _tiny()
    cache = dec.new_cache()
    dec.start(cache, [5, 6, 7])
    dec.forward(cache, dec.embed([9, 10, 11, 12, 13]))
    _, _, pos = assemble_lambda(cache, dec.table)[1]
    assert list(pos) == list(range(8))


def test_assemble_rotates_pre_rotation_keys():
    dec = _tiny()
    cache = dec.new_cache()
    dec.start(cache, [5, 6])
    dec.forward(cache, dec.embed([9, 10]))
    k, v, _ = assemble_lambda(cache, dec.table)[0]
    raw = np.concatenate([cache.instr_k[0], cache.ring_keys(0)])
    np.testing.assert_array_equal(k[0], raw[0])  # position 0: unrotated
    assert not np.allclose(k[1:], raw[1:])
    np.testing.assert_array_equal(v, np.concatenate([cache.instr_v[0], cache.ring_values(0)]))


def test_ring_eviction_keeps_instruction():
    dec = _tiny(window=20)
    cache = dec.new_cache()
    dec.start(cache, [5, 6, 7])
    instr = cache.instr_k.copy()
    rng = np.random.default_rng(0)
    for _ in range(6):
        dec.forward(cache, dec.embed(rng.integers(4, 64, 7)))
        assert cache.ring_len <= 20
    before = cache.ring_keys(0).copy()
    _, k_new, _ = dec.forward(cache, dec.embed([USER] + [9] * 12 + [EOT]))
    assert cache.ring_len == 20
    np.testing.assert_array_equal(cache.ring_keys(0), np.concatenate([before[14:], k_new[0]]))
    np.testing.assert_array_equal(cache.instr_k, instr)
    assert not cache.instr_k.flags.writeable


def test_oversized_append_keeps_tail():
    cfg = DecoderConfig(layers=1, heads=2, model_dim=8, vocab=16, window=4)
    cache = LambdaCache(cfg)
    k = np.arange(10 * 8, dtype=np.float32).reshape(1, 10, 8)
    cache.append(k, k)
    np.testing.assert_array_equal(cache.ring_keys(0), k[0, 6:])


def test_matches_full_history_without_eviction():
    dec = _tiny(window=200)
    cache = dec.new_cache()
    ids = encode_instruction(vocab=64)
    dec.start(cache, ids)
    rng = np.random.default_rng(1)
    rows = [dec.embed(ids)]
    for n in (14, 1, 1, 3, 26, 1):
        x = dec.embed(rng.integers(4, 64, n))
        hidden, _, _ = dec.forward(cache, x)
        rows.append(x)
        want = full_history_logits(dec.weights, dec.cfg, np.concatenate(rows))[-n:]
        np.testing.assert_allclose(dec.logits(hidden), want, atol=1e-5)


@pytest.mark.parametrize("window,pinned", [(6, True), (9, True), (6, False)])
def test_batched_forward_equals_token_by_token(window, pinned):
    """Evicting inside one call must give every query the view it would get alone."""
    dec = _tiny(window=window, pin_instruction=pinned)
    rng = np.random.default_rng(window)
    a, b = dec.new_cache(), dec.new_cache()
    dec.start(a, [5, 6, 7])
    dec.start(b, [5, 6, 7])
    for n in (3, 14, 5, 1, 17):
        x = dec.embed(rng.integers(4, 64, n))
        h_batch, _, _ = dec.forward(a, x)
        h_seq = np.concatenate([dec.forward(b, x[i:i + 1])[0] for i in range(n)])
        np.testing.assert_allclose(h_batch, h_seq, atol=2e-5)
        np.testing.assert_array_equal(a.ring_keys(0), b.ring_keys(0))


def test_overlay_equals_commit():
    dec = _tiny(window=10)
    rng = np.random.default_rng(2)
    a, b = dec.new_cache(), dec.new_cache()
    for c in (a, b):
        dec.start(c, [5, 6])
    x0 = dec.embed(rng.integers(4, 64, 8))
    dec.forward(a, x0)
    dec.forward(b, x0)
    ov = Overlay.empty(dec.cfg)
    for t in rng.integers(4, 64, 5):
        x = dec.embed([t])
        h_commit, _, _ = dec.forward(a, x)
        h_ov, k, v = dec.forward(b, x, overlay=ov, commit=False)
        ov = ov.extend(k, v)
        np.testing.assert_allclose(h_ov, h_commit, atol=2e-5)
    assert b.ring_len == 8


def test_unpinned_instruction_gets_evicted():
    pinned, loose = _tiny(window=12), _tiny(window=12, pin_instruction=False)
    xs = pinned.embed(np.arange(10, 40))
    outs = []
    for dec in (pinned, loose):
        cache = dec.new_cache()
        dec.start(cache, [5, 6, 7, 8])
        assert cache.instruction_len == (4 if dec.cfg.pin_instruction else 0)
        dec.forward(cache, xs[:-1])
        outs.append(dec.forward(cache, xs[-1:])[0])
    assert not np.allclose(outs[0], outs[1], atol=1e-4)


def test_config_validation():
    with pytest.raises(ConfigError):
        DecoderConfig(window=0)
    with pytest.raises(ConfigError):
        DecoderConfig(vocab=4)
    with pytest.raises(ConfigError):
        DecoderConfig(model_dim=24, heads=8)
