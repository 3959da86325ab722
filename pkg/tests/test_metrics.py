import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import exhaustive_resegment, laal_by_hand, levenshtein
from streamsst.metrics import RefSegment, laal, latency_report, resegment, rtf, stream_laal, tokenize

words = st.lists(st.sampled_from(list("abcde")), max_size=8)


def test_single_token_at_end():
    assert laal([3000], 1, 3000) == 3000


def test_worked_example():
    assert laal([1000, 1000, 2000], 3, 3000) == pytest.approx(1000 / 3, abs=0.01)
    assert laal_by_hand([1000, 1000, 2000], 3, 3000) == pytest.approx(333.33, abs=0.01)


def test_ideal_pace_is_zero():
    dur, n = 6000, 6
    assert laal([i * dur / n for i in range(n)], n, dur) == pytest.approx(0.0, abs=1e-9)


def test_long_hypothesis_uses_own_length():
    # with ref_len 2 and 4 tokens the pace is duration/4
    assert laal([0, 1000, 2000, 3000], 2, 4000) == pytest.approx(0.0)


def test_empty_hypothesis_undefined():
    assert math.isnan(laal([], 3, 1000))


def test_bad_duration():
    with pytest.raises(ValueError):
        laal([1], 1, 0)


@given(d=st.lists(st.integers(0, 10_000), min_size=1, max_size=12), ref=st.integers(0, 15),
       dur=st.integers(1, 10_000))
def test_laal_matches_hand_formula(d, ref, dur):
    d = sorted(d)
    assert laal(d, ref, dur) == pytest.approx(laal_by_hand(d, ref, dur))


def test_concat_recovers_boundaries():
    refs = [["a", "b"], ["c"], ["d", "e", "f"]]
    spans, dist = resegment([w for r in refs for w in r], refs)
    assert dist == 0 and spans == [(0, 2), (2, 3), (3, 6)]


def test_deletion_in_second_segment():
    refs = [["a", "b", "c"], ["d", "e", "f"], ["g", "h"]]
    hyp = ["a", "b", "c", "d", "f", "g", "h"]
    spans, dist = resegment(hyp, refs)
    assert dist == 1 and spans == [(0, 3), (3, 5), (5, 7)]


def test_empty_hypothesis():
    spans, dist = resegment([], [["a"], ["b", "c"]])
    assert spans == [(0, 0), (0, 0)] and dist == 3


def test_no_refs():
    with pytest.raises(ValueError):
        resegment(["a"], [])


@given(hyp=st.lists(st.sampled_from(list("abcd")), max_size=10),
       refs=st.lists(st.lists(st.sampled_from(list("abcd")), max_size=5), min_size=1, max_size=4))
def test_resegment_is_optimal(hyp, refs):
    spans, dist = resegment(hyp, refs)
    assert dist == exhaustive_resegment(hyp, refs)
    assert spans[0][0] == 0 and spans[-1][1] == len(hyp)
    assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))
    assert sum(levenshtein(hyp[a:b], r) for (a, b), r in zip(spans, refs)) == dist


def test_stream_single_segment_equals_laal():
    ref = RefSegment(list("abcd"), 0.0, 4000.0)
    hyp, d = list("abcd"), [500, 1500, 2600, 4000]
    val, empty = stream_laal(hyp, d, [ref])
    assert val == pytest.approx(laal(d, 4, 4000)) and empty == 0


def test_stream_two_identical_segments():
    refs = [RefSegment(list("ab"), 0, 2000), RefSegment(list("cd"), 5000, 7000)]
    d = [600, 1500, 5600, 6500]
    val, _ = stream_laal(list("abcd"), d, refs)
    assert val == pytest.approx(laal([600, 1500], 2, 2000))


def test_shift_covariance():
    refs = [RefSegment(list("abc"), 0, 9000), RefSegment(list("de"), 10_000, 20_000)]
    d = np.array([800, 2000, 3000, 11_000, 12_500])
    a, _ = stream_laal(list("abcde"), d, refs)
    b, _ = stream_laal(list("abcde"), d + 500, refs)
    assert b - a == pytest.approx(500.0)


def test_duration_weighting():
    refs = [RefSegment(list("ab"), 0, 1000), RefSegment(list("cd"), 1000, 4000)]
    d = [500, 900, 2000, 3000]
    u, _ = stream_laal(list("abcd"), d, refs)
    w, _ = stream_laal(list("abcd"), d, refs, weighting="duration")
    s1, s2 = laal([500, 900], 2, 1000), laal([1000, 2000], 2, 3000)
    assert u == pytest.approx((s1 + s2) / 2)
    assert w == pytest.approx((s1 * 1000 + s2 * 3000) / 4000)
    with pytest.raises(ValueError):
        stream_laal(list("abcd"), d, refs, weighting="other")


def test_empty_segments_excluded():
    refs = [RefSegment(list("ab"), 0, 1000), RefSegment(list("xyz"), 1000, 2000)]
    val, empty = stream_laal(list("ab"), [400, 800], refs)
    assert empty == 1 and val == pytest.approx(laal([400, 800], 2, 1000))
    val, empty = stream_laal([], [], refs)
    assert math.isnan(val) and empty == 2


def test_rtf():
    assert rtf(0, 1000) == 0
    assert rtf(600_000, 1_200_000) == 0.5
    with pytest.raises(ValueError):
        rtf(1, 0)


def test_report_json_nan_to_null():
    rep = latency_report([], [], [], [RefSegment(["a"], 0, 1000)], 1000, 10)
    js = rep.to_json()
    assert js["stream_laal_ms"] is None and js["rtf"] == 0.01


def test_tokenize():
    assert tokenize("a  b c") == ["a", "b", "c"]
    assert tokenize("你 好吗", "zh") == ["你", "好", "吗"]
