import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from remshift.endostats import (
    DecayStat, DyadState, competition, competition_vector, decay_value, elapsed_at_events,
    estimate_medians, repetition_indicator,
)
from remshift.events import EventSequence


def test_decay_without_history_is_zero():
    seq = EventSequence([], [], [], 3)
    assert decay_value(DecayStat("repetition", 1.0), (0, 1), 2.0, seq) == 0.0


def test_decay_half_value():
    m = 3.0
    t_last = 1.0
    seq = EventSequence([t_last], [0], [1], 2)
    t = t_last + 2 * m * math.log(2)
    assert decay_value(DecayStat("repetition", m), (0, 1), t, seq) == pytest.approx(0.5, rel=1e-14)


def test_decay_is_directed():
    seq = EventSequence([1.0], [0], [1], 2)
    assert decay_value(DecayStat("reciprocity", 1.0), (1, 0), 2.0, seq) > 0
    assert decay_value(DecayStat("repetition", 1.0), (1, 0), 2.0, seq) == 0.0


def test_repetition_indicator_is_predictable():
    seq = EventSequence([1.0], [0], [1], 2)
    assert repetition_indicator((0, 1), 0.5, EventSequence([], [], [], 2)) == 0
    assert repetition_indicator((0, 1), 1.0, seq) == 0
    assert repetition_indicator((0, 1), 1.0 + 1e-9, seq) == 1
    assert repetition_indicator((0, 1), 1e6, seq) == 1


def test_medians_examples():
    seq = EventSequence([1.0, 2.0, 4.0], [0, 0, 0], [1, 1, 1], 2)
    m_rep, m_rec = estimate_medians(seq)
    assert m_rep == 1.5
    assert m_rec is None


def test_competition_examples():
    assert competition_vector([[0, 5], [5, 0]]).tolist() == [5, 5]
    line = np.abs(np.subtract.outer([0.0, 3.0, 10.0], [0.0, 3.0, 10.0]))
    assert competition_vector(line).tolist() == [3, 3, 7]
    # a zero-minute diagonal must never win
    assert competition(0, np.array([[0.0, 4.0], [4.0, 0.0]])) == 4.0
    assert math.isnan(competition(0, np.array([[0.0, np.nan], [np.nan, 0.0]])))


def test_invalid_decay():
    with pytest.raises(Exception):
        DecayStat("triadic", 1.0)
    with pytest.raises(Exception):
        DecayStat("repetition", 0.0)


histories = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=30)


@given(histories, st.floats(0.1, 10.0))
def test_streaming_state_matches_batch_index(dyads, m):
    times = np.arange(1, len(dyads) + 1, dtype=float)
    s, r = map(np.array, zip(*dyads))
    seq = EventSequence(times, s, r, 3)
    state = DyadState(3)
    qs, qr = np.divmod(np.arange(9), 3)
    for k in range(len(seq)):
        t = times[k] + 0.5
        state.update(int(s[k]), int(r[k]), times[k])
        a = state.elapsed(qs, qr, t)
        b = seq.elapsed(qs, qr, np.full(9, t))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        for kind in ("repetition", "reciprocity"):
            v = DecayStat(kind, m).value(*b)
            assert np.all((v >= 0) & (v <= 1))


@given(histories)
def test_medians_match_two_pass_computation(dyads):
    times = np.arange(1, len(dyads) + 1, dtype=float)
    s, r = map(np.array, zip(*dyads))
    seq = EventSequence(times, s, r, 3)
    rep, rec = [], []
    for k in range(len(seq)):
        prev_same = [times[j] for j in range(k) if s[j] == s[k] and r[j] == r[k]]
        prev_rev = [times[j] for j in range(k) if s[j] == r[k] and r[j] == s[k]]
        if prev_same:
            rep.append(times[k] - max(prev_same))
        if prev_rev:
            rec.append(times[k] - max(prev_rev))
    got_rep, got_rec = elapsed_at_events(seq)
    assert sorted(got_rep) == sorted(rep) and sorted(got_rec) == sorted(rec)
    m_rep, m_rec = estimate_medians(seq)
    assert m_rep == (float(np.median(rep)) if rep else None)
    assert m_rec == (float(np.median(rec)) if rec else None)


@given(histories, st.floats(0.1, 5.0))
def test_decay_non_increasing_between_events(dyads, m):
    times = np.arange(1, len(dyads) + 1, dtype=float)
    s, r = map(np.array, zip(*dyads))
    seq = EventSequence(times, s, r, 3)
    stat = DecayStat("repetition", m)
    d = (int(s[0]), int(r[0]))
    grid = np.linspace(times[0] + 1e-6, times[0] + 0.999, 20)
    vals = [decay_value(stat, d, t, seq) for t in grid]
    assert np.all(np.diff(vals) <= 0)
