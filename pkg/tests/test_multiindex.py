import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from branchpde.multiindex import (
    MultiIndex,
    add,
    factorial_product,
    precedes,
    subtract,
    total_order,
    unit,
    zero,
)

indices = st.lists(st.integers(min_value=0, max_value=6), min_size=1, max_size=4).map(
    lambda v: MultiIndex(tuple(v)))


def paired(draw_dim=3):
    return st.tuples(
        st.lists(st.integers(0, 6), min_size=draw_dim, max_size=draw_dim),
        st.lists(st.integers(0, 6), min_size=draw_dim, max_size=draw_dim),
    ).map(lambda p: (MultiIndex(tuple(p[0])), MultiIndex(tuple(p[1]))))


def test_total_order_examples():
    assert total_order(MultiIndex((0, 0))) == 0
    assert total_order(MultiIndex((1, 2))) == 3
    assert total_order(MultiIndex((3, 0, 1))) == 4


def test_precedes_examples():
    assert precedes(MultiIndex((0, 1)), MultiIndex((1, 1)))          # lower total
    assert precedes(MultiIndex((0, 2)), MultiIndex((1, 1)))          # equal total, first entry
    assert precedes(MultiIndex((1, 0, 1)), MultiIndex((1, 1, 0)))    # equal prefix, next entry


def test_precedes_rule_three_brute_force():
    # brute-force check of the third rule over all |m| = 2 indices in d = 3
    pool = [MultiIndex(e) for e in itertools.product(range(3), repeat=3) if sum(e) == 2]
    for k, l in itertools.permutations(pool, 2):
        expected = k.exponents < l.exponents  # totals are equal here
        assert precedes(k, l) == expected


def test_strict_total_order_on_enumeration():
    pool = [MultiIndex(e) for e in itertools.product(range(5), repeat=3) if sum(e) <= 4]
    for k, l in itertools.combinations(pool, 2):
        assert precedes(k, l) != precedes(l, k)
        assert precedes(k, l) or precedes(l, k)
    ordered = sorted(pool, key=lambda m: m.sort_key)
    for a, b, c in zip(ordered, ordered[1:], ordered[2:]):
        assert precedes(a, b) and precedes(b, c) and precedes(a, c)


def test_precedes_rejects_length_mismatch():
    with pytest.raises(ValueError):
        precedes(MultiIndex((1,)), MultiIndex((1, 0)))


@given(paired())
def test_add_preserves_total_order(pair):
    a, b = pair
    assert total_order(add(a, b)) == total_order(a) + total_order(b)


@given(paired())
def test_precedes_trichotomy(pair):
    k, l = pair
    assert (k == l) + precedes(k, l) + precedes(l, k) == 1


def test_add_and_subtract():
    assert add(MultiIndex((1, 0)), MultiIndex((0, 2))) == MultiIndex((1, 2))
    assert subtract(MultiIndex((1, 2)), MultiIndex((0, 2))) == MultiIndex((1, 0))
    assert subtract(MultiIndex((1, 0)), MultiIndex((0, 1))) is None


def test_unit_vectors():
    assert unit(2, 3) == MultiIndex((0, 1, 0))
    assert unit(1, 1) == MultiIndex((1,))
    with pytest.raises(ValueError):
        unit(4, 3)
    for d in range(1, 5):
        for p in range(1, d + 1):
            assert factorial_product(unit(p, d)) == 1


def test_factorial_product():
    assert factorial_product(MultiIndex((3, 2))) == 12
    assert factorial_product(zero(4)) == 1
    assert factorial_product(MultiIndex((5, 3, 2))) == 120 * 6 * 2


def test_validation_and_rendering():
    with pytest.raises(ValueError):
        MultiIndex((1, -1))
    with pytest.raises(ValueError):
        MultiIndex(())
    assert str(MultiIndex((1, 0, 2))) == "(1,0,2)"
    assert len({MultiIndex((1, 0)), MultiIndex((1, 0)), MultiIndex((0, 1))}) == 2
