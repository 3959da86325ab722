import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import ngram_repeats, penalty_scalar
from streamsst.errors import ConfigError
from streamsst.generation import (GenerationConstraints, NgramIndex, apply_repetition_constraints,
                                  banned_tokens, penalize)


def brute_banned(history, n, vocab):
    return {t for t in range(vocab) if ngram_repeats(list(history) + [t], n) is not None
            and ngram_repeats(list(history), n) is None}


def test_empty_history_unchanged(rng):
    x = rng.standard_normal(20).astype(np.float32)
    out = apply_repetition_constraints(x, [], GenerationConstraints())
    np.testing.assert_array_equal(out, x)


def test_penalty_one_is_identity(rng):
    x = rng.standard_normal(20).astype(np.float32)
    np.testing.assert_array_equal(penalize(x, [1, 2, 3], 1.0), x)


def test_penalty_sign_rule():
    out = penalize(np.array([2.4, -1.0, 3.0]), [0, 1], 1.2)
    np.testing.assert_allclose(out, [2.0, -1.2, 3.0])


def test_penalty_matches_scalar_oracle_on_random_vectors():
    r = np.random.default_rng(0)
    for _ in range(1000):
        v = r.standard_normal(64) * 3
        seen = set(r.integers(0, 64, r.integers(0, 20)).tolist())
        got = penalize(v, seen, 1.2)
        want = [penalty_scalar(x, i in seen, 1.2) for i, x in enumerate(v)]
        np.testing.assert_array_equal(got, want)


def test_five_gram_example():
    a, b, c, d, e = range(5)
    hist = [a, b, c, d, e, 9, a, b, c, d]
    assert banned_tokens(hist, 5) == {e}
    assert banned_tokens([a, b, c, d, e, 9, 9, c, d], 5) == set()


@given(hist=st.lists(st.integers(0, 4), max_size=30), n=st.integers(1, 5))
def test_banned_matches_brute_force(hist, n):
    # build a history with no repeats so the oracle's premise holds
    clean = []
    for t in hist:
        if ngram_repeats(clean + [t], n) is None:
            clean.append(t)
    assert banned_tokens(clean, n) == brute_banned(clean, n, 5)


@given(tokens=st.lists(st.integers(0, 5), max_size=40), suffix=st.lists(st.integers(0, 5), max_size=6),
       n=st.integers(1, 5))
def test_incremental_index_matches_scan(tokens, suffix, n):
    idx = NgramIndex(n)
    for t in tokens:
        idx.append(t)
    assert idx.banned_after(suffix) == banned_tokens(tokens + suffix, n)


@given(tokens=st.lists(st.integers(0, 4), max_size=60), suffix=st.lists(st.integers(0, 4), max_size=5),
       n=st.integers(1, 5), horizon=st.integers(1, 20))
def test_horizon_index_matches_windowed_scan(tokens, suffix, n, horizon):
    idx = NgramIndex(n, horizon)
    for t in tokens:
        idx.append(t)
    window = tokens[max(len(tokens) - horizon, 0):]
    assert idx.banned_after(suffix) == banned_tokens(window + suffix, n)
    assert sum(sum(c.values()) for c in idx._next.values()) <= max(horizon - n + 1, 0)


def test_banned_set_to_minus_inf():
    out = apply_repetition_constraints(np.zeros(8), [1, 2, 1], GenerationConstraints(no_repeat_ngram=2))
    assert out[2] == -np.inf and np.isfinite(np.delete(out, 2)).all()


def test_turn_budget():
    c = GenerationConstraints(max_tokens_per_turn=10, max_tokens_per_chunk=4, min_tokens_per_chunk=2)
    assert c.turn_cap(1) == 4 and c.turn_cap(5) == 10
    assert c.turn_floor(1) == 2 and c.turn_floor(9) == 10
    assert GenerationConstraints().turn_cap(3) == 24
    assert GenerationConstraints(max_tokens_per_chunk=None).turn_cap(3) == 64


@pytest.mark.parametrize("kw", [dict(beam_width=0), dict(no_repeat_ngram=0), dict(repetition_penalty=0.9),
                                dict(max_tokens_per_turn=0), dict(max_tokens_per_chunk=0),
                                dict(min_tokens_per_chunk=5, max_tokens_per_chunk=4),
                                dict(ngram_horizon=0)])
def test_validation(kw):
    with pytest.raises(ConfigError):
        GenerationConstraints(**kw)
