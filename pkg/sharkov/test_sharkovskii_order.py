import pytest
from hypothesis import given, settings, strategies as st

from sharkov.errors import InvalidArgumentError
from sharkov.hyper_core import HyperNumber
from sharkov.sharkovskii_order import (
    OrderVerdict,
    StarVerdict,
    chain,
    compare,
    decompose,
    forced_periods,
    precedes,
    star_compare,
)


@pytest.mark.parametrize("n, ell, m", [(12, 2, 3), (1, 0, 1), (96, 5, 3), (7, 0, 7), (64, 6, 1)])
def test_decompose(n, ell, m):
    key = decompose(n)
    assert (key.ell, key.m) == (ell, m)
    assert key.reconstruct() == n


def test_decompose_rejects_zero():
    with pytest.raises(InvalidArgumentError):
        decompose(0)


@pytest.mark.parametrize(
    "p, q, expected",
    [
        (3, 5, OrderVerdict.BEFORE),
        (8, 4, OrderVerdict.BEFORE),
        (3, 6, OrderVerdict.BEFORE),
        (7, 7, OrderVerdict.EQUAL),
        (5, 3, OrderVerdict.AFTER),
        (5, 4, OrderVerdict.BEFORE),
        (2, 1, OrderVerdict.BEFORE),
        (12, 20, OrderVerdict.BEFORE),
    ],
)
def test_compare(p, q, expected):
    assert compare(p, q) is expected
    assert compare(q, p) is expected.flipped()


def test_compare_rejects_non_positive():
    with pytest.raises(InvalidArgumentError):
        compare(0, 3)


def test_chain_starts_with_odd_numbers_and_ends_with_powers_of_two():
    assert chain(10) == [3, 5, 7, 9, 6, 10, 8, 4, 2, 1]


@pytest.mark.parametrize(
    "p, expected",
    [
        (3, [1, 2, 4, 5, 6, 7, 8, 9, 10]),
        (1, []),
        (4, [1, 2]),
    ],
)
def test_forced_periods(p, expected):
    assert forced_periods(p, 10) == expected


def test_forced_periods_in_sharkovskii_order():
    assert forced_periods(3, 10, order_by_sharkovskii=True) == [5, 7, 9, 6, 10, 8, 4, 2, 1]


@given(st.integers(1, 300), st.integers(1, 300), st.integers(1, 300))
@settings(max_examples=200)
def test_order_is_a_strict_total_order(p, q, r):
    assert not precedes(p, p)
    if p != q:
        assert precedes(p, q) != precedes(q, p)
    if precedes(p, q) and precedes(q, r):
        assert precedes(p, r)


@pytest.mark.parametrize(
    "r, s, expected",
    [
        (HyperNumber.constant(3), HyperNumber.constant(5), StarVerdict.HOLDS),
        (HyperNumber.periodic([3, 4]), HyperNumber.constant(5), StarVerdict.ULTRAFILTER_DEPENDENT),
        (HyperNumber.constant(7), HyperNumber.constant(7), StarVerdict.FAILS),
        (HyperNumber((5, 5), HyperNumber.constant(3).tail), HyperNumber.constant(5), StarVerdict.HOLDS),
    ],
)
def test_star_compare(r, s, expected):
    assert star_compare(r, s) is expected


def test_star_compare_rejects_non_integer_entries():
    with pytest.raises(InvalidArgumentError):
        star_compare(HyperNumber.constant(2.5), HyperNumber.constant(3))


def _reference_rank(n):
    ell = 0
    while n % 2 == 0:
        n //= 2
        ell += 1
    # odd parts above one, by power of two then by odd part; powers of two last, descending
    return (0, ell, n) if n > 1 else (1, -ell, 0)


def test_compare_agrees_with_a_reference_rank_on_every_pair_up_to_200():
    for p in range(1, 201):
        for q in range(1, 201):
            rp, rq = _reference_rank(p), _reference_rank(q)
            expected = OrderVerdict.EQUAL if p == q else OrderVerdict.BEFORE if rp < rq else OrderVerdict.AFTER
            assert compare(p, q) is expected, (p, q)


def test_known_chain_is_strictly_increasing_pairwise():
    known = [3, 5, 7, 9, 6, 10, 12, 8, 4, 2, 1]
    for i, p in enumerate(known):
        for q in known[i + 1:]:
            assert compare(p, q) is OrderVerdict.BEFORE, (p, q)
            assert compare(q, p) is OrderVerdict.AFTER, (q, p)
    assert [n for n in chain(12) if n in known] == known


def test_forced_periods_partition_every_bound_up_to_200():
    for p in range(1, 201):
        full = forced_periods(p, 200)
        forcing_full = [q for q in range(1, 201) if precedes(q, p)]
        for b in range(p, 201):
            forced = {q for q in full if q <= b}
            forcing = {q for q in forcing_full if q <= b}
            assert forced | {p} | forcing == set(range(1, b + 1)), (p, b)
            assert not forced & forcing and p not in forced | forcing
        for b in (p, (p + 200) // 2, 200):
            assert forced_periods(p, b) == [q for q in full if q <= b]


def _brute_star_compare(r, s):
    start = max(len(r.prefix), len(s.prefix)) + 1
    span = r.tail.period * s.tail.period
    truths = [precedes(int(r.entry(n)), int(s.entry(n))) for n in range(start, start + span)]
    if all(truths):
        return StarVerdict.HOLDS
    if not any(truths):
        return StarVerdict.FAILS
    return StarVerdict.ULTRAFILTER_DEPENDENT


hypernaturals = st.builds(
    HyperNumber.periodic,
    st.lists(st.integers(1, 48), min_size=1, max_size=4),
    st.lists(st.integers(1, 48), max_size=3),
)


@given(hypernaturals, hypernaturals)
@settings(max_examples=500)
def test_star_compare_agrees_with_an_index_by_index_count(r, s):
    assert star_compare(r, s) is _brute_star_compare(r, s)
