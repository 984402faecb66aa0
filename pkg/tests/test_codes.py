import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchpde.codes import (
    FDeriv,
    IDENTITY,
    MechanismElement,
    MechanismTable,
    PhiDeriv,
    canonicalize,
    enumerate_partitions,
    f_star,
    format_mechanism,
    phi_deriv,
)
from branchpde.multiindex import MultiIndex, add, factorial_product, unit, zero

from oracles import Poly, brute_force_mechanism, fd_partial_richardson, mechanism_as_dict


# -- partition enumeration ------------------------------------------------------


def test_partition_chain_rule_order_one():
    terms = enumerate_partitions(MultiIndex((1,)), (zero(1),))
    assert len(terms) == 1
    t = terms[0]
    assert t.coeff == 1 and t.nu == MultiIndex((1,))
    assert [(f.l, f.argument, f.multiplicity) for f in t.factors] == [(MultiIndex((1,)), 0, 1)]


def test_partition_second_derivative_classical():
    # (g o u)'' = g'' (u')^2 + g' u''
    terms = {(t.nu, t.factors): t.coeff for t in enumerate_partitions(MultiIndex((2,)), (zero(1),))}
    assert len(terms) == 2
    squared = {t.nu: (t.coeff, t.factors) for t in enumerate_partitions(MultiIndex((2,)), (zero(1),))}
    assert squared[MultiIndex((2,))][0] == 1
    assert squared[MultiIndex((1,))][0] == 1


def test_partition_mixed_second_derivative():
    # d2/dx1dx2 g(u) = g'' u_x1 u_x2 + g' u_x1x2
    terms = enumerate_partitions(MultiIndex((1, 1)), (zero(2),))
    by_nu = {t.nu: t for t in terms}
    assert set(by_nu) == {MultiIndex((1,)), MultiIndex((2,))}
    assert all(t.coeff == 1 for t in terms)
    cross = by_nu[MultiIndex((2,))]
    child_ls = sorted((f.l for f in cross.factors), key=lambda m: m.sort_key)
    assert child_ls == [MultiIndex((0, 1)), MultiIndex((1, 0))]


def test_partition_rejects_zero_target():
    with pytest.raises(ValueError):
        enumerate_partitions(zero(2), (zero(2),))


def test_partition_constraints_hold_machine_checkable():
    signature = (MultiIndex((1, 0)), MultiIndex((0, 2)))
    for target in [MultiIndex((2, 1)), MultiIndex((0, 3)), MultiIndex((2, 2))]:
        terms = enumerate_partitions(target, signature)
        assert terms
        seen = set()
        for t in terms:
            key = (t.nu, t.factors)
            assert key not in seen  # duplicate-free
            seen.add(key)
            # reconstruct the constraint sums from the factors
            per_arg = [0] * len(signature)
            weighted = [0] * len(target)
            ls = sorted({f.l for f in t.factors}, key=lambda m: m.sort_key)
            for f in t.factors:
                assert f.l.order >= 1
                per_arg[f.argument] += f.multiplicity
                for j in range(len(target)):
                    weighted[j] += f.multiplicity * f.l[j]
            assert tuple(per_arg) == t.nu.exponents
            assert tuple(weighted) == target.exponents
            assert 1 <= t.nu.order <= target.order
            assert len(ls) <= target.order


def test_partition_expansion_matches_polynomial_differentiation():
    # random polynomial u, g; expansion vs finite differences of g(args of u)
    rng = np.random.default_rng(7)
    for trial in range(12):
        d = int(rng.integers(1, 3))
        n = int(rng.integers(1, 3))
        signature = []
        while len(signature) < n:
            lam = MultiIndex(tuple(int(v) for v in rng.integers(0, 3, d)))
            if lam not in signature:
                signature.append(lam)
        signature = tuple(signature)
        u = Poly.random(d, 3, rng)
        g = Poly.random(n, 2, rng)
        args = [u.diff_multi(lam) for lam in signature]

        def composite(x):
            return g([a(x) for a in args])

        order = int(rng.integers(1, 5))
        target_vec = np.zeros(d, dtype=int)
        for _ in range(order):
            target_vec[rng.integers(d)] += 1
        target = MultiIndex(tuple(int(v) for v in target_vec))
        x = rng.uniform(-0.6, 0.6, d)

        expansion = 0.0
        for t in enumerate_partitions(target, signature):
            gpart = g
            for q, times in enumerate(t.nu.exponents):
                for _ in range(times):
                    gpart = gpart.diff(q)
            value = float(t.coeff) * gpart([a(x) for a in args])
            for f in t.factors:
                value *= u.diff_multi(add(f.l, signature[f.argument]))(x) ** f.multiplicity
            expansion += value

        fd = fd_partial_richardson(composite, x, target, h=0.02)
        assert expansion == pytest.approx(fd, rel=1e-4, abs=1e-6)


# -- canonicalization ------------------------------------------------------------


def test_canonicalize_aggregates_coefficients():
    el = MechanismElement((FDeriv(Fraction(1, 2), MultiIndex((1,))),
                           FDeriv(Fraction(2), MultiIndex((0,)))))
    canon = canonicalize(el)
    assert canon.coefficient == 1
    coeffs = [c.coeff for c in canon.codes]
    assert coeffs == [Fraction(1), Fraction(1)]


def test_canonicalize_sorts_phi_children():
    el = MechanismElement((PhiDeriv(MultiIndex((2,))), PhiDeriv(MultiIndex((1,)))))
    canon = canonicalize(el)
    assert [c.mu for c in canon.codes] == [MultiIndex((1,)), MultiIndex((2,))]


@settings(max_examples=60)
@given(st.lists(
    st.one_of(
        st.tuples(st.integers(-3, 3).filter(lambda v: v != 0), st.integers(0, 3), st.integers(0, 3)),
        st.tuples(st.integers(1, 3), st.integers(0, 2)),
    ),
    min_size=1, max_size=5))
def test_canonicalize_idempotent(raw):
    codes = []
    for item in raw:
        if len(item) == 3:
            codes.append(FDeriv(Fraction(item[0], 2), MultiIndex((item[1], item[2]))))
        else:
            codes.append(PhiDeriv(MultiIndex((item[0], item[1]))))
    el = MechanismElement(tuple(codes))
    once = canonicalize(el)
    assert canonicalize(once) == once


def test_phi_deriv_normalizes_zero_to_identity():
    assert phi_deriv(zero(3)) is IDENTITY
    with pytest.raises(ValueError):
        PhiDeriv(zero(2))
    with pytest.raises(ValueError):
        FDeriv(Fraction(0), zero(1))


# -- mechanisms -------------------------------------------------------------------


def test_identity_mechanism_is_single_f_star():
    table = MechanismTable((zero(3),), 1)
    mech = table.mechanism(IDENTITY)
    assert mech.size == 1
    assert mech.elements[0].codes == (f_star(1),)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
def test_allen_cahn_mechanism_size(d):
    table = MechanismTable((zero(d),), 1)
    assert table.q(f_star(1)) == 1 + d


def test_allen_cahn_mechanism_golden_dump():
    table = MechanismTable((zero(1),), 1)
    text = format_mechanism(f_star(1), table.mechanism(f_star(1)))
    assert text == (
        "code: f*\n"
        "mechanism size q = 2\n"
        "  1: (f*, (d^(1)f)*)\n"
        "  2: ((-1/2 d^(2)f)*, d^(1)phi, d^(1)phi)"
    )


def test_mechanism_against_brute_force_enumeration():
    cases = [
        # allen-cahn like
        ((zero(1),), Fraction(1), [IDENTITY, f_star(1), PhiDeriv(MultiIndex((2,)))]),
        # burgers d=1: value and first derivative, diffusivity 1
        ((zero(1), MultiIndex((1,))), Fraction(1),
         [IDENTITY, f_star(2), PhiDeriv(MultiIndex((2,))), FDeriv(Fraction(1), MultiIndex((1, 1)))]),
        # second-order argument signature
        ((zero(1), MultiIndex((1,)), MultiIndex((2,))), Fraction(1),
         [f_star(3), PhiDeriv(MultiIndex((3,)))]),
        # multidimensional signature
        ((zero(2), MultiIndex((1, 0)), MultiIndex((0, 1))), Fraction(4),
         [f_star(3), PhiDeriv(MultiIndex((1, 1)))]),
    ]
    for signature, diffusivity, codes in cases:
        table = MechanismTable(signature, diffusivity)
        for code in codes:
            expected = brute_force_mechanism(code, signature, diffusivity)
            actual = mechanism_as_dict(table.mechanism(code))
            assert actual == expected, f"mismatch for {code} under {signature}"


def test_symmetric_pair_coefficients_are_summed():
    # the (i, j) and (j, i) diffusion outcomes coincide after sorting and must
    # carry a doubled coefficient
    table = MechanismTable((zero(1), MultiIndex((1,))), 1)
    mech = table.mechanism(f_star(2))
    cross = [el for el in mech.elements
             if any(isinstance(c, FDeriv) and c.nu == MultiIndex((1, 1)) for c in el.codes)
             and any(isinstance(c, PhiDeriv) for c in el.codes)]
    assert len(cross) == 1
    assert cross[0].coefficient == -1


def test_mechanism_scaling_by_code_coefficient():
    table = MechanismTable((zero(1),), 1)
    base = table.mechanism(f_star(1))
    scaled = table.mechanism(FDeriv(Fraction(3, 2), zero(1)))
    assert scaled.size == base.size
    for b, s in zip(base.elements, scaled.elements):
        assert s.shape() == b.shape()
        assert s.coefficient == b.coefficient * Fraction(3, 2)


def test_mechanism_memoized_and_stable():
    table = MechanismTable((zero(2),), 1)
    first = table.mechanism(f_star(1))
    second = table.mechanism(f_star(1))
    assert first is second
    assert first == MechanismTable((zero(2),), 1).mechanism(f_star(1))


def test_mechanism_diffusivity_scales_diffusion_coefficient():
    plain = MechanismTable((zero(1),), 1).mechanism(f_star(1))
    scaled = MechanismTable((zero(1),), 4).mechanism(f_star(1))
    def diffusion_coeff(mech):
        for el in mech.elements:
            if any(isinstance(c, PhiDeriv) for c in el.codes):
                return el.coefficient
    assert diffusion_coeff(plain) == Fraction(-1, 2)
    assert diffusion_coeff(scaled) == Fraction(-2)


def test_mechanism_table_pickles_without_lock():
    import pickle

    table = MechanismTable((zero(1),), 1)
    table.mechanism(f_star(1))
    clone = pickle.loads(pickle.dumps(table))
    assert clone.mechanism(f_star(1)) == table.mechanism(f_star(1))
