"""Symbolic code algebra: tree-node labels, the multivariate Faa di Bruno
partition enumeration, and construction of the branching mechanism M(c).

A code labels a node of the random tree and fixes both its terminal
evaluation and its branching rule:

  * Identity              -- evaluates to phi at the horizon;
  * FDeriv(a, nu)         -- the operator (a * d^nu f)^* applied to the
                             solution's gradient arguments;
  * PhiDeriv(mu)          -- the spatial derivative operator d^mu.

Coefficients are exact rationals end to end; floats appear only when a leaf
is evaluated.  That makes canonical forms exact, so structurally equal
elements can be recognized and memoization keys are unambiguous.

Mechanism elements that coincide after canonical sorting are merged with
*summed* coefficients.  Symmetric second-order pairs (i,j)/(j,i) in the
diffusion part of M(g^*) produce equal tuples up to child order, and both
appear in the underlying integral identity, so the merged element must carry
the doubled coefficient for the expectation to be preserved.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .multiindex import (
    MultiIndex,
    add,
    componentwise_le,
    factorial_product,
    subtract,
    unit,
    zero,
)


@dataclass(frozen=True)
class Identity:
    def __str__(self) -> str:
        return "Id"


@dataclass(frozen=True)
class FDeriv:
    """The operator (coeff * d^nu f)^*; nu indexes the arguments of f."""

    coeff: Fraction
    nu: MultiIndex

    def __post_init__(self) -> None:
        if not isinstance(self.coeff, Fraction):
            object.__setattr__(self, "coeff", Fraction(self.coeff))
        if self.coeff == 0:
            raise ValueError("FDeriv coefficient must be nonzero")

    def __str__(self) -> str:
        body = "f" if self.nu.is_zero() else f"d^{self.nu}f"
        if self.coeff == 1:
            return "f*" if self.nu.is_zero() else f"({body})*"
        return f"({self.coeff} {body})*"


@dataclass(frozen=True)
class PhiDeriv:
    """The spatial derivative operator d^mu, mu != 0."""

    mu: MultiIndex

    def __post_init__(self) -> None:
        if self.mu.is_zero():
            raise ValueError("PhiDeriv with zero index must be the Identity code")

    def __str__(self) -> str:
        return f"d^{self.mu}phi"


Code = Identity | FDeriv | PhiDeriv

IDENTITY = Identity()


def f_star(n: int) -> FDeriv:
    """The code f^* = (1 * d^0 f)^*."""
    return FDeriv(Fraction(1), zero(n))


def phi_deriv(mu: MultiIndex) -> Code:
    """d^mu as a code, normalized so that d^0 is the Identity."""
    if mu.is_zero():
        return IDENTITY
    return PhiDeriv(mu)


@dataclass(frozen=True)
class MechanismElement:
    """One branching outcome: the tuple of child codes, in canonical form
    (f-derivative children first ordered by nu, then phi-derivative children
    ordered by mu; the aggregated rational coefficient sits on the first
    f-derivative child)."""

    codes: tuple[Code, ...]

    def __str__(self) -> str:
        return "(" + ", ".join(str(c) for c in self.codes) + ")"

    @property
    def coefficient(self) -> Fraction:
        out = Fraction(1)
        for c in self.codes:
            if isinstance(c, FDeriv):
                out *= c.coeff
        return out

    def shape(self) -> tuple:
        """Everything but the coefficient: the merge/dedupe key."""
        f_nus = tuple(sorted((c.nu.sort_key for c in self.codes if isinstance(c, FDeriv))))
        phi_mus = tuple(sorted((c.mu.sort_key for c in self.codes if isinstance(c, PhiDeriv))))
        n_id = sum(1 for c in self.codes if isinstance(c, Identity))
        return (n_id, f_nus, phi_mus)


def canonicalize(element: MechanismElement) -> MechanismElement:
    """Sort children and aggregate the rational coefficient onto the first
    f-derivative child.  Idempotent."""
    ids = [c for c in element.codes if isinstance(c, Identity)]
    fds = sorted((c for c in element.codes if isinstance(c, FDeriv)), key=lambda c: c.nu.sort_key)
    phis = sorted((c for c in element.codes if isinstance(c, PhiDeriv)), key=lambda c: c.mu.sort_key)
    if fds:
        agg = Fraction(1)
        for c in fds:
            agg *= c.coeff
        fds = [FDeriv(agg, fds[0].nu)] + [FDeriv(Fraction(1), c.nu) for c in fds[1:]]
    return MechanismElement(tuple(ids) + tuple(fds) + tuple(phis))


def _with_coefficient(element: MechanismElement, coeff: Fraction) -> MechanismElement:
    codes = list(element.codes)
    for i, c in enumerate(codes):
        if isinstance(c, FDeriv):
            codes[i] = FDeriv(coeff, c.nu)
            return MechanismElement(tuple(codes))
    raise ValueError("element has no f-derivative child to carry a coefficient")


@dataclass(frozen=True)
class Mechanism:
    """The full set M(c) of branching outcomes for one code."""

    elements: tuple[MechanismElement, ...]

    @property
    def size(self) -> int:
        return len(self.elements)


@dataclass(frozen=True)
class PartitionFactor:
    """One repeated child block of a Faa di Bruno term: the spatial index l,
    the argument position q (0-based) and the multiplicity k of the child
    derivative d^(l + lambda^q)."""

    l: MultiIndex
    argument: int
    multiplicity: int


@dataclass(frozen=True)
class PartitionTerm:
    """One term of the multivariate Faa di Bruno expansion of d^target g^*(u):
    coeff * d^nu g(...) * prod over factors of (d^(l + lambda^q) u)^k."""

    coeff: Fraction
    nu: MultiIndex
    factors: tuple[PartitionFactor, ...]


def _compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    """All tuples of `parts` naturals summing to `total`, in a fixed order."""
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return out


@lru_cache(maxsize=None)
def enumerate_partitions(target: MultiIndex, signature: tuple[MultiIndex, ...]) -> tuple[PartitionTerm, ...]:
    """Complete, duplicate-free enumeration of the Faa di Bruno terms for
    d^target of g(d^lambda1 u, ..., d^lambdan u).

    Terms are indexed by a multiset of distinct nonzero spatial indices
    l^1 < ... < l^s, each split over the n arguments with multiplicities
    k_r^q >= 0, |k_r| >= 1, subject to sum_r |k_r| l^r = target; nu is the
    induced argument-derivative index and the coefficient is

        prod_j target_j!  /  prod_{r,q} k_r^q! (l^r_1! ... l^r_d!)^(k_r^q).
    """
    if target.order == 0:
        raise ValueError("partition target must have |target| >= 1")
    n = len(signature)
    d = len(target)
    for lam in signature:
        if len(lam) != d:
            raise ValueError("signature index length does not match target")

    # candidate parts: all nonzero l <= target componentwise, graded order
    ranges = [range(t + 1) for t in target.exponents]
    parts = sorted(
        (MultiIndex(e) for e in itertools.product(*ranges) if sum(e) > 0),
        key=lambda m: m.sort_key,
    )
    target_fact = factorial_product(target)

    solutions: list[list[tuple[MultiIndex, int]]] = []

    def recurse(start: int, remaining: MultiIndex, chosen: list[tuple[MultiIndex, int]]) -> None:
        if remaining.order == 0:
            solutions.append(list(chosen))
            return
        for idx in range(start, len(parts)):
            l = parts[idx]
            if not componentwise_le(l, remaining):
                continue
            rem = subtract(remaining, l)
            w = 1
            while rem is not None:
                chosen.append((l, w))
                recurse(idx + 1, rem, chosen)
                chosen.pop()
                rem = subtract(rem, l)
                w += 1

    recurse(0, target, [])

    terms: list[PartitionTerm] = []
    for chosen in solutions:
        split_options = [_compositions(w, n) for _, w in chosen]
        for k_matrix in itertools.product(*split_options):
            nu = [0] * n
            coeff = Fraction(target_fact)
            factors: list[PartitionFactor] = []
            for (l, w), k_row in zip(chosen, k_matrix):
                l_fact = factorial_product(l)
                for q, kq in enumerate(k_row):
                    if kq == 0:
                        continue
                    nu[q] += kq
                    coeff /= math.factorial(kq) * l_fact**kq
                    factors.append(PartitionFactor(l, q, kq))
            terms.append(PartitionTerm(coeff, MultiIndex(tuple(nu)), tuple(factors)))
    return tuple(terms)


def _merge_elements(raw: list[MechanismElement]) -> tuple[MechanismElement, ...]:
    """Group canonical elements by shape; coefficients of coinciding shapes
    are summed so the element sum over M(c) is preserved exactly.  Elements
    whose coefficients cancel are dropped."""
    merged: dict[tuple, tuple[Fraction, MechanismElement]] = {}
    for el in raw:
        key = el.shape()
        if key in merged:
            total, rep = merged[key]
            merged[key] = (total + el.coefficient, rep)
        else:
            merged[key] = (el.coefficient, el)
    out = []
    for key in sorted(merged.keys()):
        total, rep = merged[key]
        if total == 0:
            continue
        out.append(_with_coefficient(rep, total))
    return tuple(out)


class MechanismTable:
    """Mechanism sets for a fixed gradient signature and diffusivity,
    memoized per code.

    The cache is guarded by a lock so sampler threads may share one table;
    the computation is deterministic, so redundant recomputation in forked
    worker processes is harmless.
    """

    def __init__(self, signature: tuple[MultiIndex, ...], diffusivity: Fraction | int = 1):
        if len(signature) == 0:
            raise ValueError("signature must contain at least one index")
        d = len(signature[0])
        if any(len(lam) != d for lam in signature):
            raise ValueError("signature indices must share one length")
        if len(set(signature)) != len(signature):
            raise ValueError("signature indices must be pairwise distinct")
        self.signature = tuple(signature)
        self.diffusivity = Fraction(diffusivity)
        if self.diffusivity <= 0:
            raise ValueError("diffusivity must be positive")
        self.n = len(signature)
        self.d = d
        self._cache: dict[Code, Mechanism] = {}
        self._lock = threading.Lock()

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_lock")
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def mechanism(self, code: Code) -> Mechanism:
        if isinstance(code, FDeriv) and code.coeff != 1:
            # M((a g)^*) is M(g^*) with every element coefficient scaled by a.
            base = self.mechanism(FDeriv(Fraction(1), code.nu))
            return Mechanism(tuple(_with_coefficient(el, el.coefficient * code.coeff)
                                   for el in base.elements))
        with self._lock:
            hit = self._cache.get(code)
        if hit is not None:
            return hit
        mech = self._build(code)
        with self._lock:
            return self._cache.setdefault(code, mech)

    def q(self, code: Code) -> int:
        return self.mechanism(code).size

    def _partition_element(self, term: PartitionTerm, extra: list[Code]) -> MechanismElement:
        codes: list[Code] = list(extra)
        codes.append(FDeriv(term.coeff, term.nu))
        for factor in term.factors:
            child = add(factor.l, self.signature[factor.argument])
            codes.extend([phi_deriv(child)] * factor.multiplicity)
        return canonicalize(MechanismElement(tuple(codes)))

    def _build(self, code: Code) -> Mechanism:
        n, d = self.n, self.d
        if isinstance(code, Identity):
            return Mechanism((canonicalize(MechanismElement((f_star(n),))),))

        raw: list[MechanismElement] = []
        if isinstance(code, FDeriv):
            assert code.coeff == 1
            nu_g = code.nu
            # first-derivative chain part, split by whether the argument
            # carries a spatial derivative
            for p in range(n):
                g_child = FDeriv(Fraction(1), add(nu_g, unit(p + 1, n)))
                lam = self.signature[p]
                if lam.is_zero():
                    raw.append(canonicalize(MechanismElement((f_star(n), g_child))))
                else:
                    for term in enumerate_partitions(lam, self.signature):
                        raw.append(self._partition_element(term, [g_child]))
            # second-derivative diffusion part
            half = -self.diffusivity / 2
            for i in range(n):
                for j in range(n):
                    g2 = FDeriv(half, add(nu_g, add(unit(i + 1, n), unit(j + 1, n))))
                    for k in range(d):
                        raw.append(canonicalize(MechanismElement((
                            g2,
                            phi_deriv(add(self.signature[i], unit(k + 1, d))),
                            phi_deriv(add(self.signature[j], unit(k + 1, d))),
                        ))))
            return Mechanism(_merge_elements(raw))

        if isinstance(code, PhiDeriv):
            for term in enumerate_partitions(code.mu, self.signature):
                raw.append(self._partition_element(term, []))
            return Mechanism(_merge_elements(raw))

        raise TypeError(f"not a code: {code!r}")


def format_mechanism(code: Code, mechanism: Mechanism) -> str:
    """Plain-text table of M(c) for logs and golden files."""
    lines = [f"code: {code}", f"mechanism size q = {mechanism.size}"]
    for i, el in enumerate(mechanism.elements, start=1):
        lines.append(f"  {i}: {el}")
    return "\n".join(lines)
