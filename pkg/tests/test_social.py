from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oppsim.core import Contact
from oppsim.social import (CalledTwice, CentralityState, CommunityState, InterestSocialState,
                           PeerSocialState, accrue_contact, close_sample, cwindow_update,
                           dlife_importance, dlife_weight, dump_states, kclique_update,
                           teci_coefficients, teci_weight)

from oracles import kclique_communities

# sum of 24/(24+d) for d = 0..23, summed term by term in exact arithmetic
UNIFORM_TECI = float(sum(Fraction(24, 24 + d) for d in range(24)))


def test_uniform_teci_constant():
    assert UNIFORM_TECI == pytest.approx(16.888135935454688, abs=1e-12)


def test_accrue_zero_length_is_noop():
    s = InterestSocialState(0, [1, 2])
    accrue_contact(s, {1, 2}, 0.0, 3)
    assert not s.tcti.any()


def test_accrue_sums():
    s = InterestSocialState(0, [1])
    accrue_contact(s, {1}, 300.0, 9)
    accrue_contact(s, {1}, 400.0, 9)
    assert s.tcti[s.index[1], 9] == 700.0


def test_accrue_credits_every_interest_in_full():
    s = InterestSocialState(0, [1, 2, 3])
    accrue_contact(s, {1, 2}, 600.0, 5)
    assert s.tcti[s.index[1], 5] == 600.0
    assert s.tcti[s.index[2], 5] == 600.0
    assert s.tcti[s.index[3], 5] == 0.0


def test_accrue_ignores_unknown_keys():
    s = InterestSocialState(0, [1])
    accrue_contact(s, {7}, 600.0, 5)
    assert not s.tcti.any()


def test_close_sample_examples():
    s = InterestSocialState(0, [1])
    accrue_contact(s, {1}, 120.0, 4)
    close_sample(s, 1, 4, 1)
    assert s.atcti[0, 4] == 120.0
    assert s.tcti[0, 4] == 0.0
    accrue_contact(s, {1}, 60.0, 4)
    close_sample(s, 1, 4, 2)
    assert s.atcti[0, 4] == 90.0


@pytest.mark.parametrize("exact", [False, True])
def test_close_sample_mean_of_four_days(exact):
    s = InterestSocialState(0, [1], exact=exact)
    for j, v in enumerate([100, 50, 30, 20], start=1):
        accrue_contact(s, {1}, v, 0)
        close_sample(s, 1, 0, j)
    assert s.atcti[0, 0] == 50
    assert s.days[0, 0] == 4


def test_close_twice_raises():
    s = InterestSocialState(0, [1])
    close_sample(s, 1, 3, 1)
    with pytest.raises(CalledTwice):
        close_sample(s, 1, 3, 1)


@settings(max_examples=200)
@given(st.lists(st.integers(0, 3600 * 10), min_size=1, max_size=30))
def test_cma_equals_mean_exactly(daily):
    s = InterestSocialState(0, [1], exact=True)
    for j, v in enumerate(daily, start=1):
        accrue_contact(s, {1}, Fraction(v, 7), 2)
        close_sample(s, 1, 2, j)
    assert s.atcti[0, 2] == sum(Fraction(v, 7) for v in daily) / len(daily)


def state_with(row):
    s = InterestSocialState(0, [1])
    s.atcti[0, :] = row
    return s


def test_teci_examples():
    assert teci_weight(InterestSocialState(0, [1]), 1, 5) == 0.0
    assert teci_weight(state_with([1.0 if i == 5 else 0.0 for i in range(24)]), 1, 5) == 1.0
    assert teci_weight(state_with([1.0] * 24), 1, 11) == pytest.approx(UNIFORM_TECI, rel=1e-12)


def test_teci_wraps_around_the_day():
    # only sample 2 is set; from sample 5 it is 21 steps ahead
    s = InterestSocialState(0, [1])
    s.atcti[0, 2] = 1.0
    assert teci_weight(s, 1, 5) == pytest.approx(24 / 45)


def test_coefficients_strictly_decreasing():
    c = teci_coefficients(24)
    assert c[0] == 1.0
    assert np.all(np.diff(c) < 0)
    exact = teci_coefficients(24, exact=True)
    assert sum(exact) == sum(Fraction(24, 24 + d) for d in range(24))


cells = st.lists(st.floats(0, 1e5), min_size=24, max_size=24)


@given(cells, st.integers(0, 23), st.integers(0, 23), st.floats(0, 1e4))
def test_teci_monotone(row, i, cell, bump):
    before = teci_weight(state_with(row), 1, i)
    assert before >= 0
    row[cell] += bump
    assert teci_weight(state_with(row), 1, i) >= before


def test_dlife_weight_examples():
    s = PeerSocialState(0, [1, 2])
    assert dlife_weight(s, 1, 7) == 0.0
    accrue_contact(s, {1}, 3600.0, 7)
    close_sample(s, 1, 7, 1)
    assert dlife_weight(s, 1, 7) == 3600.0
    u = PeerSocialState(0, [1])
    for i in range(24):
        accrue_contact(u, {1}, 1.0, i)
        close_sample(u, 1, i, 1)
    assert dlife_weight(u, 1, 0) == pytest.approx(UNIFORM_TECI, rel=1e-12)


def test_dlife_importance_examples():
    assert dlife_importance(np.zeros((1, 1)), np.ones(1)).tolist() == pytest.approx([0.2])
    pair = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert dlife_importance(pair, np.ones(2)).tolist() == pytest.approx([1.0, 1.0])
    line = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    imp = np.ones(3)
    for _ in range(2):
        imp = dlife_importance(line, imp)
    assert imp.tolist() == pytest.approx([1.64, 1.8, 1.64])


def communities(n, k=5, threshold=7200.0):
    return {i: CommunityState(i, k=k, familiar_threshold=threshold) for i in range(n)}


def test_familiar_threshold_boundary():
    st_ = communities(2)
    kclique_update(st_, Contact(0, 1, 0.0, 7199.0))
    assert 1 not in st_[0].familiar and 1 not in st_[0].community
    st_ = communities(2)
    kclique_update(st_, Contact(0, 1, 0.0, 7200.0))
    assert 1 in st_[0].familiar and 1 in st_[0].community
    assert 0 in st_[1].community


def test_kclique_complete_graph_k3():
    st_ = communities(4, k=3)
    t = 0.0
    edges = [(a, b) for a in range(4) for b in range(a + 1, 4)]
    for a, b in edges:
        kclique_update(st_, Contact(a, b, t, t + 7200.0))
        t += 8000.0
    oracle = kclique_communities(edges, 3)
    assert oracle == [frozenset(range(4))]
    for s in st_.values():
        assert s.community == set(oracle[0])


def test_kclique_joins_through_shared_familiars():
    # node 0 is familiar with 1..4; node 5 is familiar with 1..4 as well, so a
    # short contact between 0 and 5 pulls 5 into 0's community
    st_ = communities(6, k=5)
    t = 0.0
    for x in (0, 5):
        for y in (1, 2, 3, 4):
            kclique_update(st_, Contact(x, y, t, t + 7200.0))
            t += 8000.0
    assert 5 not in st_[0].community
    kclique_update(st_, Contact(0, 5, t, t + 10.0))
    assert 5 in st_[0].community and 0 in st_[5].community
    assert 5 not in st_[0].familiar


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6), st.integers(1, 9000)),
                max_size=40))
def test_community_invariants(seq):
    st_ = communities(7, k=3)
    t = 0.0
    prev = {i: set(s.community) for i, s in st_.items()}
    for a, b, d in seq:
        if a == b:
            continue
        kclique_update(st_, Contact(a, b, t, t + d))
        t += d + 1
        for i, s in st_.items():
            assert i in s.community
            assert s.familiar <= s.community
            assert prev[i] <= s.community
            prev[i] = set(s.community)


def test_cwindow_examples():
    c = CentralityState(0)
    cwindow_update(c)
    assert c.global_centrality == 0.0 and c.local_centrality == 0.0
    c = CentralityState(0)
    for window in ([1, 2], [1, 2, 3, 4]):
        for p in window:
            c.record(p)
        cwindow_update(c)
    assert c.global_centrality == 3.0


def test_cwindow_mean_from_raw_log():
    log = [(0, 1), (1, 2), (2, 3), (3, 4)] + [(4, p) for p in range(1, 7)]
    c = CentralityState(0)
    for w in range(5):
        for pw, p in log:
            if pw == w:
                c.record(p)
        cwindow_update(c, community={0, 1, 2})
    counts = [len({p for pw, p in log if pw == w}) for w in range(5)]
    assert c.global_centrality == sum(counts) / 5 == 2.0
    local = [len({p for pw, p in log if pw == w} & {1, 2}) for w in range(5)]
    assert c.local_centrality == sum(local) / 5


def test_cwindow_carry_over_seeds_next_window():
    c = CentralityState(0)
    c.record(3)
    cwindow_update(c, carry_over=[3])
    cwindow_update(c)
    assert c.global_centrality == 1.0


def test_dump_states_is_stable_and_exact():
    a = InterestSocialState(1, [2], samples_per_day=2, exact=True)
    accrue_contact(a, {2}, Fraction(1, 3), 0)
    close_sample(a, 2, 0, 1)
    p = PeerSocialState(0, [1], samples_per_day=2, importance=0.2)
    text = dump_states([a, p])
    lines = text.splitlines()
    assert lines[0] == "node,kind,key,sample,value"
    assert lines[1].startswith("0,tcti,1,0,")
    assert "1,atcti,2,0,1/3" in lines
    assert "0,importance,,,0.2" in lines
    assert dump_states([p, a]) == text


@pytest.mark.parametrize("exact", [False, True])
def test_frozen_weights_ignore_later_closes(exact):
    s = InterestSocialState(0, [1, 2], exact=exact)
    accrue_contact(s, {1}, 100, 3)
    close_sample(s, 1, 3, 1)
    view = s.frozen_weights(3)
    accrue_contact(s, {1}, 300, 3)
    s.close_all(3, 2)
    assert view.get(1) == 100 and view[2] == 0 and view.get(9, -1) == -1
    assert s.weight(1, 3) == 200
    assert list(view) == [1, 2] and len(view) == 2
