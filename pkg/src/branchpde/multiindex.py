"""Multi-index arithmetic and the graded ordering used by the code algebra.

A multi-index is a fixed-length vector of naturals recording derivative
orders, either over the space coordinates (length d) or over the arguments
of the nonlinearity (length n).  Values are immutable and hashable so they
can key memoization caches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class MultiIndex:
    exponents: tuple[int, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.exponents, tuple):
            object.__setattr__(self, "exponents", tuple(self.exponents))
        if len(self.exponents) == 0:
            raise ValueError("multi-index needs at least one entry")
        for e in self.exponents:
            if not isinstance(e, int) or isinstance(e, bool) or e < 0:
                raise ValueError(f"multi-index entries must be naturals, got {self.exponents!r}")

    def __len__(self) -> int:
        return len(self.exponents)

    def __getitem__(self, i: int) -> int:
        return self.exponents[i]

    def __iter__(self):
        return iter(self.exponents)

    def __str__(self) -> str:
        return "(" + ",".join(str(e) for e in self.exponents) + ")"

    @property
    def order(self) -> int:
        """Total derivative order |m| = sum of the entries."""
        return sum(self.exponents)

    @property
    def sort_key(self) -> tuple:
        # Graded key: total order first, then entry-wise comparison.
        return (self.order, self.exponents)

    def is_zero(self) -> bool:
        return self.order == 0


def total_order(m: MultiIndex) -> int:
    return m.order


def precedes(k: MultiIndex, l: MultiIndex) -> bool:
    """Strict graded order: |k| < |l|, or equal totals and k lexicographically
    smaller at the first differing entry."""
    if len(k) != len(l):
        raise ValueError(f"length mismatch: {k} vs {l}")
    return k.sort_key < l.sort_key


def add(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {a} vs {b}")
    return MultiIndex(tuple(x + y for x, y in zip(a.exponents, b.exponents)))


def subtract(a: MultiIndex, b: MultiIndex) -> MultiIndex | None:
    """Componentwise a - b, or None if any entry would go negative."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {a} vs {b}")
    out = tuple(x - y for x, y in zip(a.exponents, b.exponents))
    if any(e < 0 for e in out):
        return None
    return MultiIndex(out)


def unit(position: int, dim: int) -> MultiIndex:
    """The vector with 1 at `position` (1-based) and 0 elsewhere."""
    if not 1 <= position <= dim:
        raise ValueError(f"position {position} out of range for dimension {dim}")
    return MultiIndex(tuple(1 if i == position - 1 else 0 for i in range(dim)))


def zero(dim: int) -> MultiIndex:
    return MultiIndex((0,) * dim)


def factorial_product(m: MultiIndex) -> int:
    """Exact product of entry factorials, m_1! * ... * m_k!."""
    out = 1
    for e in m.exponents:
        out *= math.factorial(e)
    return out


def componentwise_le(a: MultiIndex, b: MultiIndex) -> bool:
    return all(x <= y for x, y in zip(a.exponents, b.exponents))
