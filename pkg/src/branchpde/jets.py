"""Exact arbitrary-order derivatives of the univariate profiles behind the
benchmark terminal conditions and closed-form solutions.

Every benchmark solution has ridge form u = h(w.x + b) for an elementary
profile h, so d-dimensional differentiation reduces to the univariate jet
(h(y), h'(y), ..., h^(K)(y)).  Each profile computes its jet through an exact
Taylor-coefficient recurrence rather than a hand-written derivative table:
branching trees may request any order, and a fixed table would silently
truncate.  Orders beyond the configured cap raise instead, since they signal
runaway branching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .multiindex import MultiIndex

DEFAULT_MAX_JET_ORDER = 32


class DomainError(ValueError):
    """Profile or nonlinearity evaluated outside its admissible domain."""


class JetOrderError(RuntimeError):
    """Requested derivative order exceeds the configured cap."""


def _derivatives_from_taylor(coeffs: list[float]) -> np.ndarray:
    # entry j of the jet is h^(j)(y) = j! * (Taylor coefficient j)
    out = np.empty(len(coeffs))
    fact = 1.0
    for j, c in enumerate(coeffs):
        if j > 0:
            fact *= j
        out[j] = c * fact
    return out


class Profile:
    """A named univariate function h evaluable with all derivatives."""

    def value(self, y: float) -> float:
        return float(self.derivative_jet(y, 0)[0])

    def derivative_jet(self, y: float, order: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class TanhProfile(Profile):
    """h(y) = shift + scale * tanh(y)."""

    scale: float = 1.0
    shift: float = 0.0

    def value(self, y: float) -> float:
        return self.shift + self.scale * math.tanh(y)

    def derivative_jet(self, y: float, order: int) -> np.ndarray:
        v = [math.tanh(y)]
        w = [1.0 - v[0] * v[0]]  # Taylor coefficients of 1 - v(h)^2
        for k in range(order):
            v.append(w[k] / (k + 1))
            m = k + 1
            w.append(-sum(v[i] * v[m - i] for i in range(m + 1)))
        jet = _derivatives_from_taylor(v) * self.scale
        jet[0] += self.shift
        return jet


@dataclass(frozen=True)
class ExpProfile(Profile):
    """h(y) = scale * exp(y)."""

    scale: float = 1.0

    def value(self, y: float) -> float:
        return self.scale * math.exp(y)

    def derivative_jet(self, y: float, order: int) -> np.ndarray:
        return np.full(order + 1, self.scale * math.exp(y))


@dataclass(frozen=True)
class CosProfile(Profile):
    """h(y) = scale * cos(y)."""

    scale: float = 1.0

    def value(self, y: float) -> float:
        return self.scale * math.cos(y)

    def derivative_jet(self, y: float, order: int) -> np.ndarray:
        c = [math.cos(y)]
        s = [math.sin(y)]
        for k in range(order):
            c.append(-s[k] / (k + 1))
            s.append(c[k] / (k + 1))
        return _derivatives_from_taylor(c) * self.scale


@dataclass(frozen=True)
class LogOnePlusSquareProfile(Profile):
    """h(y) = log(1 + y^2), defined on all of R."""

    def value(self, y: float) -> float:
        return math.log1p(y * y)

    def derivative_jet(self, y: float, order: int) -> np.ndarray:
        # u(h) = 1 + (y+h)^2, v = log(u); solve v'*u = u' for the coefficients.
        u = [1.0 + y * y, 2.0 * y, 1.0] + [0.0] * max(0, order - 2)
        v = [math.log(u[0])]
        for k in range(order):
            acc = (k + 1) * u[k + 1] if k + 1 < len(u) else 0.0
            for i in range(k):
                acc -= (i + 1) * v[i + 1] * u[k - i]
            v.append(acc / ((k + 1) * u[0]))
        return _derivatives_from_taylor(v[: order + 1])


@dataclass(frozen=True)
class PowerProfile(Profile):
    """h(y) = coeff * y**exponent; y > 0 required unless the exponent is a
    nonnegative integer."""

    coeff: float = 1.0
    exponent: float = 1.0

    def _is_polynomial(self) -> bool:
        return self.exponent >= 0 and float(self.exponent).is_integer()

    def value(self, y: float) -> float:
        if not self._is_polynomial() and y <= 0:
            raise DomainError(f"power profile with exponent {self.exponent} needs y > 0, got {y}")
        return self.coeff * y**self.exponent

    def derivative_jet(self, y: float, order: int) -> np.ndarray:
        if not self._is_polynomial() and y <= 0:
            raise DomainError(f"power profile with exponent {self.exponent} needs y > 0, got {y}")
        jet = np.empty(order + 1)
        falling = self.coeff
        p = self.exponent
        for j in range(order + 1):
            jet[j] = 0.0 if falling == 0.0 else falling * y ** (p - j)
            falling *= p - j
        return jet


@dataclass(frozen=True)
class PolynomialProfile(Profile):
    """h(y) = sum_k coeffs[k] * y**k (coefficients in ascending order)."""

    coeffs: tuple[float, ...]

    def value(self, y: float) -> float:
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * y + c
        return acc

    def derivative_jet(self, y: float, order: int) -> np.ndarray:
        jet = np.zeros(order + 1)
        work = list(self.coeffs)
        for j in range(order + 1):
            acc = 0.0
            for c in reversed(work):
                acc = acc * y + c
            jet[j] = acc
            work = [k * ck for k, ck in enumerate(work)][1:]
            if not work:
                break
        return jet


def jet(profile: Profile, point: float, order: int, max_order: int = DEFAULT_MAX_JET_ORDER) -> np.ndarray:
    """Jet (h(point), h'(point), ..., h^(order)(point)) of a profile."""
    if order < 0:
        raise ValueError("order must be a natural")
    if order > max_order:
        raise JetOrderError(f"derivative order {order} exceeds the cap {max_order}; "
                            "this usually indicates runaway branching")
    return profile.derivative_jet(point, order)


@dataclass(frozen=True)
class Ridge:
    """A ridge function x -> h(w.x + offset)."""

    weights: tuple[float, ...]
    offset: float
    profile: Profile

    def inner(self, x) -> float:
        acc = self.offset
        for w, xi in zip(self.weights, x):
            acc += w * float(xi)
        return acc

    def value(self, x) -> float:
        return self.profile.value(self.inner(x))

    def partial(self, mu: MultiIndex, x, max_order: int = DEFAULT_MAX_JET_ORDER) -> float:
        return ridge_partial(mu, self.weights, self.offset, self.profile, x, max_order=max_order)

    def jet_at(self, x, order: int, max_order: int = DEFAULT_MAX_JET_ORDER) -> np.ndarray:
        return jet(self.profile, self.inner(x), order, max_order)


def ridge_partial(mu: MultiIndex, weights, offset: float, profile: Profile, x,
                  max_order: int = DEFAULT_MAX_JET_ORDER) -> float:
    """Partial derivative d^mu of x -> h(w.x + offset): (prod_i w_i^mu_i) * h^(|mu|)(w.x + offset)."""
    if len(mu) != len(weights):
        raise ValueError(f"multi-index length {len(mu)} does not match {len(weights)} weights")
    scale = 1.0
    for w, m in zip(weights, mu.exponents):
        if m:
            scale *= w**m
    if scale == 0.0:
        return 0.0
    order = mu.order
    y = offset
    for w, xi in zip(weights, x):
        y += w * float(xi)
    return scale * float(jet(profile, y, order, max_order)[order])
