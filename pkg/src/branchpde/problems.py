"""Benchmark PDE registry.

Every instance is normalized to the template

    du/dt + (nu/2) * Laplacian(u) + f(d^lambda1 u, ..., d^lambdan u) = 0,
    u(T, x) = phi(x),

which is the only form the branching mechanism supports.  Equations whose
published form lacks the Laplacian share, or carries a drift or discount
term, have those pieces folded into f; the residual tests assert that the
folded template reproduces the original equation on its closed-form
solution.

All closed-form solutions are ridge functions of w.x plus a time shift, so
spatial derivatives of any order reduce to univariate jets.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .codes import MechanismTable, enumerate_partitions
from .jets import (
    DEFAULT_MAX_JET_ORDER,
    CosProfile,
    DomainError,
    LogOnePlusSquareProfile,
    PolynomialProfile,
    PowerProfile,
    Ridge,
    TanhProfile,
)
from .multiindex import MultiIndex, unit, zero


class Problem:
    """A PDE instance: dimensions, gradient signature, diffusivity, the
    nonlinearity / terminal derivative oracles and the exact solution."""

    name: str = "problem"

    def __init__(self, d: int, T: float, x_min: float, x_max: float,
                 lambdas: tuple[MultiIndex, ...], diffusivity: Fraction | int = 1,
                 max_jet_order: int = DEFAULT_MAX_JET_ORDER):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        if not T > 0:
            raise ValueError("horizon T must be positive")
        if not x_min < x_max:
            raise ValueError("x_min must be below x_max")
        if len(set(lambdas)) != len(lambdas):
            raise ValueError("gradient signature indices must be pairwise distinct")
        self.d = d
        self.T = float(T)
        self.x_min = float(x_min)
        self.x_max = float(x_max)
        self.lambdas = tuple(lambdas)
        self.diffusivity = Fraction(diffusivity)
        if self.diffusivity <= 0:
            raise ValueError("diffusivity must be positive")
        self.max_jet_order = max_jet_order
        self._table: MechanismTable | None = None

    # -- structural accessors -------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @property
    def x_mid(self) -> float:
        return (self.x_min + self.x_max) / 2.0

    @property
    def nu_diff(self) -> float:
        return float(self.diffusivity)

    def mechanism_table(self) -> MechanismTable:
        if self._table is None:
            self._table = MechanismTable(self.lambdas, self.diffusivity)
        return self._table

    # -- defaults used by the experiment harness ------------------------------

    default_activation = "tanh"

    def default_m_samples(self) -> int:
        raise NotImplementedError

    def desk_m_samples(self) -> int:
        return max(50, self.default_m_samples() // 50)

    # -- oracles ---------------------------------------------------------------

    def f_partial(self, nu: MultiIndex, z: np.ndarray) -> float:
        """Exact partial derivative d^nu of the (folded) nonlinearity at z."""
        raise NotImplementedError

    def solution_ridge(self, t: float) -> Ridge:
        """Ridge representation of x -> u(t, x)."""
        raise NotImplementedError

    def phi_ridge(self) -> Ridge:
        return self.solution_ridge(self.T)

    def phi_partial(self, mu: MultiIndex, x) -> float:
        """d^mu phi(x) for the terminal condition phi = u(T, .)."""
        return self.phi_ridge().partial(mu, x, max_order=self.max_jet_order)

    def phi_value(self, x) -> float:
        return self.phi_ridge().value(x)

    def phi_lambda_args(self, x) -> np.ndarray:
        """The argument vector (d^lambda1 phi(x), ..., d^lambdan phi(x)),
        computed from a single jet of the terminal ridge."""
        ridge = self.phi_ridge()
        order = max(lam.order for lam in self.lambdas)
        jet_vals = ridge.jet_at(x, order, max_order=self.max_jet_order)
        out = np.empty(self.n)
        for i, lam in enumerate(self.lambdas):
            scale = 1.0
            for w, m in zip(ridge.weights, lam.exponents):
                if m:
                    scale *= w**m
            out[i] = scale * jet_vals[lam.order]
        return out

    def exact_solution(self, t: float, x) -> float:
        return self.solution_ridge(t).value(x)


# -- helpers shared by several problems ---------------------------------------


def _single_support(nu: MultiIndex) -> tuple[int, int] | None:
    """(position, order) if nu is supported on one entry, else None."""
    pos = -1
    for i, e in enumerate(nu.exponents):
        if e > 0:
            if pos >= 0:
                return None
            pos = i
    if pos < 0:
        return None
    return pos, nu[pos]


def _log_of_quadratic_partial(nu: MultiIndex, s_value: float,
                              s_gradient, s_hessian) -> float:
    """d^nu of z -> log(S(z)) for a quadratic form S via the chain rule.

    s_gradient(i) and s_hessian(i, j) return the exact first and second
    partials of S; all higher partials vanish, so only partitions into
    blocks of order <= 2 contribute.
    """
    if s_value <= 0:
        raise DomainError(f"log argument must be positive, got {s_value}")
    if nu.order == 0:
        return math.log(s_value)
    total = 0.0
    m = len(nu)
    for term in enumerate_partitions(nu, (zero(m),)):
        prod = 1.0
        for factor in term.factors:
            o = factor.l.order
            if o == 1:
                pos = next(i for i, e in enumerate(factor.l.exponents) if e)
                base = s_gradient(pos)
            elif o == 2:
                idx = [i for i, e in enumerate(factor.l.exponents) for _ in range(e)]
                base = s_hessian(idx[0], idx[1])
            else:
                base = 0.0
            if base == 0.0:
                prod = 0.0
                break
            prod *= base**factor.multiplicity
        if prod == 0.0:
            continue
        j = term.nu[0]  # derivative order of the outer log
        outer = (-1.0) ** (j - 1) * math.factorial(j - 1) / s_value**j
        total += float(term.coeff) * outer * prod
    return total


# -- the six benchmarks --------------------------------------------------------


class AllenCahn(Problem):
    """du/dt + (1/2) Lap u + u - u^3 = 0 with a tanh traveling wave."""

    name = "allen-cahn"

    def __init__(self, d: int = 1, T: float = 0.5):
        super().__init__(d=d, T=T, x_min=-8.0, x_max=8.0, lambdas=(zero(d),))

    def default_m_samples(self) -> int:
        return 100_000

    def desk_m_samples(self) -> int:
        return 2000

    def f_partial(self, nu: MultiIndex, z: np.ndarray) -> float:
        u = float(z[0])
        k = nu[0]
        if k == 0:
            return u - u**3
        if k == 1:
            return 1.0 - 3.0 * u * u
        if k == 2:
            return -6.0 * u
        if k == 3:
            return -6.0
        return 0.0

    def solution_ridge(self, t: float) -> Ridge:
        w = -1.0 / (2.0 * math.sqrt(self.d))
        return Ridge(weights=(w,) * self.d, offset=0.75 * (self.T - t),
                     profile=TanhProfile(scale=-0.5, shift=-0.5))


class Exponential(Problem):
    """du/dt + (alpha/d) sum_i du/dx_i + (1/2) Lap u
    + exp(-u) (1 - 2 exp(-u)) d = 0; the drift is folded into f."""

    name = "exponential"

    def __init__(self, d: int = 1, T: float = 0.05, alpha: float = 10.0):
        lambdas = (zero(d),) + tuple(unit(i + 1, d) for i in range(d))
        super().__init__(d=d, T=T, x_min=-4.0, x_max=4.0, lambdas=lambdas)
        self.alpha = alpha

    def default_m_samples(self) -> int:
        return 30_000 if self.d == 1 else 3_000

    def desk_m_samples(self) -> int:
        return 1000

    def f_partial(self, nu: MultiIndex, z: np.ndarray) -> float:
        u = float(z[0])
        drift = self.alpha / self.d
        if nu.order == 0:
            return drift * float(np.sum(z[1:])) + self.d * (math.exp(-u) - 2.0 * math.exp(-2.0 * u))
        support = _single_support(nu)
        if support is None:
            return 0.0
        pos, order = support
        if pos == 0:
            sign = (-1.0) ** order
            return self.d * (sign * math.exp(-u) - 2.0 * (-2.0) ** order * math.exp(-2.0 * u))
        return drift if order == 1 else 0.0

    def solution_ridge(self, t: float) -> Ridge:
        return Ridge(weights=(1.0,) * self.d, offset=self.alpha * (self.T - t),
                     profile=LogOnePlusSquareProfile())


class Burgers(Problem):
    """du/dt + (d^2/2) Lap u + (u - (2+d)/(2d)) (d sum_k du/dx_k) = 0
    with a logistic traveling wave; diffusivity d^2."""

    name = "burgers"

    def __init__(self, d: int = 1, T: float | None = None):
        if T is None:
            T = 0.5 if d == 1 else 0.1
        lambdas = (zero(d),) + tuple(unit(i + 1, d) for i in range(d))
        super().__init__(d=d, T=T, x_min=-4.0, x_max=4.0, lambdas=lambdas,
                         diffusivity=Fraction(d * d))

    def default_m_samples(self) -> int:
        return 100_000

    def desk_m_samples(self) -> int:
        return 2000

    def f_partial(self, nu: MultiIndex, z: np.ndarray) -> float:
        shift = (2.0 + self.d) / (2.0 * self.d)
        if nu.order == 0:
            return (float(z[0]) - shift) * self.d * float(np.sum(z[1:]))
        n0 = nu[0]
        spatial = [(i, e) for i, e in enumerate(nu.exponents) if i > 0 and e > 0]
        if n0 == 1 and not spatial:
            return self.d * float(np.sum(z[1:]))
        if n0 == 0 and len(spatial) == 1 and spatial[0][1] == 1:
            return self.d * (float(z[0]) - shift)
        if n0 == 1 and len(spatial) == 1 and spatial[0][1] == 1:
            return float(self.d)
        return 0.0

    def solution_ridge(self, t: float) -> Ridge:
        # logistic(s) = 1/2 + tanh(s/2)/2 with s = t + sum_i x_i / d
        return Ridge(weights=(1.0 / (2.0 * self.d),) * self.d, offset=t / 2.0,
                     profile=TanhProfile(scale=0.5, shift=0.5))


class Merton(Problem):
    """HJB equation of the consumption-investment problem,
    du/dt - (mu u_x)^2 / (2 sigma^2 u_xx) + g/(1-g) u_x^(1-1/g) = rho u,
    folded into the template by adding (1/2) u_xx inside f and moving the
    discount into f as -rho u.  One-dimensional by construction."""

    name = "merton"
    default_activation = "relu"

    def __init__(self, d: int = 1, T: float = 0.1):
        if d != 1:
            raise ValueError("the consumption-investment benchmark is one-dimensional")
        super().__init__(d=1, T=T, x_min=100.0, x_max=200.0,
                         lambdas=(zero(1), MultiIndex((1,)), MultiIndex((2,))))
        self.drift = 0.03
        self.volatility = 0.1
        self.risk_aversion = 0.5
        self.discount_rate = 0.01
        g, s, mu, rho = self.risk_aversion, self.volatility, self.drift, self.discount_rate
        self.wave_rate = (2 * s * s * g * rho - (1 - g) * mu * mu) / (2 * s * s * g * g)

    def default_m_samples(self) -> int:
        return 10_000

    def desk_m_samples(self) -> int:
        return 1000

    _SECOND_DERIV_GUARD = 1e-10

    def f_partial(self, nu: MultiIndex, z: np.ndarray) -> float:
        n0, n1, n2 = nu.exponents
        z0, z1, z2 = (float(v) for v in z)
        g = self.risk_aversion
        out = 0.0
        # -rho z0 and -(1/2) z2 (the added Laplacian share)
        if (n0, n1, n2) == (0, 0, 0):
            out += -self.discount_rate * z0 - 0.5 * z2
        elif (n0, n1, n2) == (1, 0, 0):
            out += -self.discount_rate
        elif (n0, n1, n2) == (0, 0, 1):
            out += -0.5
        # -(mu^2 / (2 sigma^2)) z1^2 / z2
        if n0 == 0 and n1 <= 2:
            if abs(z2) < self._SECOND_DERIV_GUARD:
                raise DomainError(f"second-derivative argument too close to zero: {z2}")
            c = self.drift**2 / (2.0 * self.volatility**2)
            d1 = {0: z1 * z1, 1: 2.0 * z1, 2: 2.0}[n1]
            d2 = (-1.0) ** n2 * math.factorial(n2) * z2 ** (-1 - n2)
            out += -c * d1 * d2
        # g/(1-g) * z1^(1 - 1/g)
        if n0 == 0 and n2 == 0:
            e = 1.0 - 1.0 / g
            falling = g / (1.0 - g)
            for j in range(n1):
                falling *= e - j
            if falling != 0.0:
                p = e - n1
                if z1 <= 0 and (p < 0 or not float(p).is_integer()):
                    raise DomainError(f"first-derivative argument must be positive, got {z1}")
                out += falling * z1**p
        return out

    def solution_ridge(self, t: float) -> Ridge:
        g = self.risk_aversion
        a = self.wave_rate
        ratio = (1.0 + (a - 1.0) * math.exp(-a * (self.T - t))) / a
        if ratio <= 0:
            raise DomainError("value-function ratio turned nonpositive")
        coeff = ratio**g / (1.0 - g)
        return Ridge(weights=(1.0,), offset=0.0,
                     profile=PowerProfile(coeff=coeff, exponent=1.0 - g))


class LogGradient3(Problem):
    """du/dt + (alpha/d) sum_i du/dx_i
    + log((1/d) sum_i ((d2u/dx_i^2)^2 + (d3u/dx_i^3)^2)) = 0 with a cosine
    wave; drift and the missing Laplacian share are folded into f."""

    name = "log-gradient-3"

    def __init__(self, d: int = 1, T: float = 0.02, alpha: float = 10.0):
        lambdas = tuple(MultiIndex(tuple(order if j == i else 0 for j in range(d)))
                        for order in (1, 2, 3) for i in range(d))
        super().__init__(d=d, T=T, x_min=-3.0, x_max=3.0, lambdas=lambdas)
        self.alpha = alpha

    def default_m_samples(self) -> int:
        return 6_000 if self.d == 1 else 200

    def desk_m_samples(self) -> int:
        return 500

    # argument layout: z[0:d] first derivatives, z[d:2d] second, z[2d:3d] third
    def _quadratic(self, z: np.ndarray) -> float:
        d = self.d
        return float(np.sum(z[d:2 * d] ** 2) + np.sum(z[2 * d:3 * d] ** 2)) / d

    def f_partial(self, nu: MultiIndex, z: np.ndarray) -> float:
        d = self.d
        out = 0.0
        if nu.order == 0:
            out += self.alpha / d * float(np.sum(z[:d])) - 0.5 * float(np.sum(z[d:2 * d]))
        else:
            support = _single_support(nu)
            if support is not None and support[1] == 1:
                pos = support[0]
                if pos < d:
                    out += self.alpha / d
                elif pos < 2 * d:
                    out += -0.5
        # log part: S depends only on the second/third-derivative arguments
        if any(e > 0 for e in nu.exponents[:d]):
            return out
        z_val = z.astype(float)

        def s_grad(i: int) -> float:
            return 2.0 * float(z_val[i]) / d if i >= d else 0.0

        def s_hess(i: int, j: int) -> float:
            return 2.0 / d if (i == j and i >= d) else 0.0

        out += _log_of_quadratic_partial(nu, self._quadratic(z_val), s_grad, s_hess)
        return out

    def solution_ridge(self, t: float) -> Ridge:
        return Ridge(weights=(1.0,) * self.d, offset=self.alpha * (self.T - t),
                     profile=CosProfile())


class CosineGradient4(Problem):
    """du/dt + (alpha/d) sum_i du/dx_i + u - (Lap u / (12 d))^2
    + (1/d) sum_i cos(pi d4u/dx_i^4 / 24) = 0 with a quartic wave; drift and
    the missing Laplacian share are folded into f.

    The quartic constants are pinned so the wave solves the equation exactly:
    matching coefficients of phi - (phi''/12)^2 - 1 forces b = 3/8, c = b/6
    and the constant term 1 + b^2/36.
    """

    name = "cosine-gradient-4"

    QUARTIC_B = 3.0 / 8.0
    QUARTIC_C = 1.0 / 16.0
    QUARTIC_CONST = 257.0 / 256.0

    def __init__(self, d: int = 1, T: float = 0.04, alpha: float = 10.0):
        lambdas = (zero(d),) + tuple(
            MultiIndex(tuple(order if j == i else 0 for j in range(d)))
            for order in (1, 2, 4) for i in range(d))
        super().__init__(d=d, T=T, x_min=-5.0, x_max=5.0, lambdas=lambdas)
        self.alpha = alpha

    def default_m_samples(self) -> int:
        return 2_500 if self.d == 1 else 50

    def desk_m_samples(self) -> int:
        return 250

    # argument layout: z[0] value, z[1:1+d] first, z[1+d:1+2d] second,
    # z[1+2d:1+3d] fourth derivatives
    def f_partial(self, nu: MultiIndex, z: np.ndarray) -> float:
        d = self.d
        first = slice(1, 1 + d)
        second = slice(1 + d, 1 + 2 * d)
        fourth = slice(1 + 2 * d, 1 + 3 * d)
        s2 = float(np.sum(z[second]))
        out = 0.0
        if nu.order == 0:
            out += float(z[0]) + self.alpha / d * float(np.sum(z[first]))
            out += -0.5 * s2 - (s2 / (12.0 * d)) ** 2
            out += float(np.sum(np.cos(np.pi * z[fourth].astype(float) / 24.0))) / d
            return out
        # value and first-derivative arguments enter linearly
        support = _single_support(nu)
        if support is not None:
            pos, order = support
            if pos == 0:
                return 1.0 if order == 1 else 0.0
            if 1 <= pos < 1 + d:
                return self.alpha / d if order == 1 else 0.0
            if 1 + 2 * d <= pos:
                arg = math.pi * float(z[pos]) / 24.0
                return math.cos(arg + order * math.pi / 2.0) * (math.pi / 24.0) ** order / d
        # remaining nonzero contributions come from the squared-Laplacian
        # term and are supported on the second-derivative arguments
        sec = nu.exponents[1 + d:1 + 2 * d]
        if sum(sec) != nu.order:
            return 0.0
        if nu.order == 1:
            return -0.5 - 2.0 * s2 / (12.0 * d) ** 2
        if nu.order == 2 and max(sec) <= 2:
            return -2.0 / (12.0 * d) ** 2
        return 0.0

    def solution_ridge(self, t: float) -> Ridge:
        poly = PolynomialProfile((self.QUARTIC_CONST, self.QUARTIC_C, self.QUARTIC_B, 1.0, 1.0))
        return Ridge(weights=(1.0,) * self.d, offset=self.alpha * (self.T - t), profile=poly)


class NullNonlinearity(Problem):
    """Heat-equation check problem: the signature of a semilinear problem but
    f identically zero, with a polynomial terminal condition whose Gaussian
    convolution is known in closed form."""

    name = "heat-check"

    def __init__(self, kind: str = "linear", d: int = 1, T: float = 0.5,
                 diffusivity: Fraction | int = 1):
        super().__init__(d=d, T=T, x_min=-2.0, x_max=2.0, lambdas=(zero(d),),
                         diffusivity=diffusivity)
        if kind not in ("linear", "quadratic"):
            raise ValueError("kind must be linear or quadratic")
        self.kind = kind

    def default_m_samples(self) -> int:
        return 100_000

    def f_partial(self, nu: MultiIndex, z: np.ndarray) -> float:
        return 0.0

    def solution_ridge(self, t: float) -> Ridge:
        # phi depends on x_1 only; the Gaussian mean shifts the even terms
        if self.kind == "linear":
            coeffs = (0.0, 1.0)
        else:
            coeffs = (self.nu_diff * (self.T - t), 0.0, 1.0)
        weights = tuple(1.0 if i == 0 else 0.0 for i in range(self.d))
        return Ridge(weights=weights, offset=0.0, profile=PolynomialProfile(coeffs))


REGISTRY: dict[str, type[Problem]] = {
    AllenCahn.name: AllenCahn,
    Exponential.name: Exponential,
    Burgers.name: Burgers,
    Merton.name: Merton,
    LogGradient3.name: LogGradient3,
    CosineGradient4.name: CosineGradient4,
}


def get_problem(name: str, d: int | None = None, T: float | None = None) -> Problem:
    """Instantiate a registered problem, optionally overriding d and T."""
    try:
        cls = REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(REGISTRY))
        raise KeyError(f"unknown problem {name!r}; known problems: {known}") from None
    kwargs = {}
    if d is not None:
        kwargs["d"] = d
    if T is not None:
        kwargs["T"] = T
    return cls(**kwargs)
