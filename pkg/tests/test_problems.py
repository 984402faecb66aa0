import math

import numpy as np
import pytest

from branchpde.jets import DomainError
from branchpde.multiindex import MultiIndex, zero
from branchpde.problems import (
    REGISTRY,
    AllenCahn,
    Burgers,
    CosineGradient4,
    Exponential,
    LogGradient3,
    Merton,
    NullNonlinearity,
    get_problem,
)

from oracles import fd_partial_richardson, fd_time_derivative

ALL_PROBLEMS = [
    AllenCahn(d=1), AllenCahn(d=2),
    Exponential(d=1), Exponential(d=2),
    Burgers(d=1), Burgers(d=2),
    Merton(),
    LogGradient3(d=1), LogGradient3(d=2),
    CosineGradient4(d=1), CosineGradient4(d=2),
]

# finite-difference step for the template residual, per problem; scaled to
# the domain so high-order stencils stay accurate
_RESIDUAL_STEPS = {
    "allen-cahn": 0.02,
    "exponential": 0.01,
    "burgers": 0.02,
    "merton": 0.5,
    "log-gradient-3": 0.02,
    "cosine-gradient-4": 0.05,
}


def interior_points(problem, count):
    fractions = np.linspace(0.25, 0.75, count)
    out = []
    for k, frac in enumerate(fractions):
        t = problem.T * (0.3 + 0.4 * (k % 3) / 2.0)
        x = np.full(problem.d, problem.x_mid)
        x[0] = problem.x_min + frac * (problem.x_max - problem.x_min)
        out.append((t, x))
    return out


def template_residual(problem, t, x):
    """du/dt + (nu/2) Lap u + f(args), everything from the exact solution by
    Richardson-extrapolated central differences."""
    h = _RESIDUAL_STEPS[problem.name]
    u = problem.exact_solution
    dudt = fd_time_derivative(lambda s: u(s, x), t, h=problem.T * 1e-2)
    lap = 0.0
    for i in range(problem.d):
        mu = MultiIndex(tuple(2 if j == i else 0 for j in range(problem.d)))
        lap += fd_partial_richardson(lambda y: u(t, y), x, mu, h)
    z = np.array([fd_partial_richardson(lambda y: u(t, y), x, lam, h)
                  for lam in problem.lambdas])
    return dudt + 0.5 * problem.nu_diff * lap + problem.f_partial(zero(problem.n), z)


@pytest.mark.parametrize("problem", ALL_PROBLEMS, ids=lambda p: f"{p.name}-d{p.d}")
def test_terminal_consistency(problem):
    # u(T, x) equals phi(x) wherever both are defined
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = np.full(problem.d, problem.x_mid)
        x[0] = rng.uniform(problem.x_min, problem.x_max)
        assert problem.exact_solution(problem.T, x) == pytest.approx(
            problem.phi_partial(zero(problem.d), x), abs=1e-12)


@pytest.mark.parametrize("problem", [p for p in ALL_PROBLEMS if p.d == 1],
                         ids=lambda p: p.name)
def test_template_residual_vanishes(problem):
    for t, x in interior_points(problem, 20):
        assert abs(template_residual(problem, t, x)) <= 1e-4


@pytest.mark.parametrize("problem", ALL_PROBLEMS, ids=lambda p: f"{p.name}-d{p.d}")
def test_f_partial_matches_finite_differences(problem):
    # derivative of order k vs central differences of order k-1, random z
    rng = np.random.default_rng(11)
    h = 1e-4
    for _ in range(40):
        z = rng.uniform(0.5, 1.5, problem.n)
        order = int(rng.integers(1, 4))
        nu_vec = np.zeros(problem.n, dtype=int)
        for _ in range(order):
            nu_vec[rng.integers(problem.n)] += 1
        nu = MultiIndex(tuple(int(v) for v in nu_vec))
        var = next(i for i, e in enumerate(nu.exponents) if e)
        lower = MultiIndex(tuple(e - 1 if i == var else e for i, e in enumerate(nu.exponents)))
        zp, zm = z.copy(), z.copy()
        zp[var] += h
        zm[var] -= h
        fd = (problem.f_partial(lower, zp) - problem.f_partial(lower, zm)) / (2 * h)
        assert problem.f_partial(nu, z) == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_allen_cahn_f_partial_examples():
    prob = AllenCahn(d=1)
    assert prob.f_partial(MultiIndex((1,)), np.array([0.0])) == 1.0
    for z in (-2.0, 0.3, 5.0):
        assert prob.f_partial(MultiIndex((3,)), np.array([z])) == -6.0
    assert prob.f_partial(MultiIndex((4,)), np.array([1.0])) == 0.0


def test_burgers_f_partial_examples():
    prob = Burgers(d=1)
    # f(z0, z1) = (z0 - 3/2) z1 in one dimension
    z = np.array([0.7, -0.4])
    assert prob.f_partial(zero(2), z) == pytest.approx((0.7 - 1.5) * -0.4)
    assert prob.f_partial(MultiIndex((1, 1)), z) == 1.0
    assert prob.f_partial(MultiIndex((2, 0)), z) == 0.0


def test_allen_cahn_phi_examples():
    prob = AllenCahn(d=1, T=0.5)
    assert prob.phi_partial(zero(1), np.array([0.0])) == pytest.approx(-0.5, abs=1e-14)
    expected = -0.5 - 0.5 * math.tanh(3.0 / 8.0)
    assert prob.exact_solution(0.0, np.array([0.0])) == pytest.approx(expected, rel=1e-13)
    assert expected == pytest.approx(-0.67918, abs=5e-6)


def test_cosine_phi_second_derivative():
    prob = LogGradient3(d=1, T=0.02, alpha=10.0)
    # phi(x) = cos(x): second derivative at 0 is -1
    assert prob.phi_partial(MultiIndex((2,)), np.array([0.0])) == pytest.approx(-1.0, abs=1e-14)
    # at t = 0 the wave has moved by alpha T = 0.2
    ridge = prob.solution_ridge(0.0)
    assert ridge.partial(MultiIndex((2,)), np.array([0.0])) == pytest.approx(
        -math.cos(0.2), rel=1e-13)


def test_burgers_exact_solution_at_origin():
    prob = Burgers(d=1, T=0.1)
    assert prob.exact_solution(0.0, np.array([0.0])) == pytest.approx(0.5, abs=1e-15)
    prob5 = Burgers(d=5)
    assert prob5.exact_solution(0.0, np.zeros(5)) == pytest.approx(0.5, abs=1e-15)


def test_merton_terminal_reduces_to_payoff():
    prob = Merton()
    g = prob.risk_aversion
    for x in (110.0, 150.0, 190.0):
        expected = x ** (1 - g) / (1 - g)
        assert prob.exact_solution(prob.T, np.array([x])) == pytest.approx(expected, rel=1e-12)


def test_merton_domain_guards():
    prob = Merton()
    with pytest.raises(DomainError):
        prob.f_partial(zero(3), np.array([1.0, 1.0, 0.0]))
    with pytest.raises(DomainError):
        prob.f_partial(MultiIndex((0, 1, 0)), np.array([1.0, -1.0, 1.0]))
    with pytest.raises(DomainError):
        prob.phi_partial(zero(1), np.array([-5.0]))


def test_registry_names_and_overrides():
    assert set(REGISTRY) == {"allen-cahn", "exponential", "burgers", "merton",
                             "log-gradient-3", "cosine-gradient-4"}
    prob = get_problem("allen-cahn", d=3)
    assert prob.d == 3 and prob.T == 0.5 and (prob.x_min, prob.x_max) == (-8.0, 8.0)
    assert get_problem("burgers", d=15).T == 0.1
    assert get_problem("burgers").T == 0.5
    assert get_problem("burgers", d=4).nu_diff == 16.0
    assert get_problem("merton").default_activation == "relu"
    with pytest.raises(KeyError):
        get_problem("unknown-problem")
    with pytest.raises(ValueError):
        get_problem("merton", d=2)


def test_published_scale_sample_counts():
    assert get_problem("allen-cahn").default_m_samples() == 100_000
    assert get_problem("exponential").default_m_samples() == 30_000
    assert get_problem("exponential", d=5).default_m_samples() == 3_000
    assert get_problem("merton").default_m_samples() == 10_000
    assert get_problem("log-gradient-3").default_m_samples() == 6_000
    assert get_problem("log-gradient-3", d=5).default_m_samples() == 200
    assert get_problem("cosine-gradient-4").default_m_samples() == 2_500
    assert get_problem("cosine-gradient-4", d=5).default_m_samples() == 50


def test_problem_constants():
    ac = get_problem("allen-cahn")
    assert (ac.x_min, ac.x_max, ac.T) == (-8.0, 8.0, 0.5)
    ex = get_problem("exponential")
    assert (ex.x_min, ex.x_max, ex.T, ex.alpha) == (-4.0, 4.0, 0.05, 10.0)
    mt = get_problem("merton")
    assert (mt.x_min, mt.x_max, mt.T) == (100.0, 200.0, 0.1)
    assert (mt.drift, mt.volatility, mt.risk_aversion, mt.discount_rate) == (0.03, 0.1, 0.5, 0.01)
    lg = get_problem("log-gradient-3")
    assert (lg.x_min, lg.x_max, lg.T, lg.alpha) == (-3.0, 3.0, 0.02, 10.0)
    cg = get_problem("cosine-gradient-4")
    assert (cg.x_min, cg.x_max, cg.T, cg.alpha) == (-5.0, 5.0, 0.04, 10.0)
    assert get_problem("burgers", d=3).nu_diff == 9.0


def test_quartic_constants_solve_the_equation():
    # matching coefficients of phi - (phi''/12)^2 - 1 pins the quartic
    b, c, d0 = CosineGradient4.QUARTIC_B, CosineGradient4.QUARTIC_C, CosineGradient4.QUARTIC_CONST
    assert 2 * b / 3 - 0.25 == pytest.approx(0.0, abs=1e-15)
    assert c - b / 6 == pytest.approx(0.0, abs=1e-15)
    assert d0 - b * b / 36 - 1.0 == pytest.approx(0.0, abs=1e-15)


def test_lambda_signatures():
    assert AllenCahn(d=2).lambdas == (zero(2),)
    bg = Burgers(d=2)
    assert bg.lambdas == (zero(2), MultiIndex((1, 0)), MultiIndex((0, 1)))
    lg = LogGradient3(d=1)
    assert lg.lambdas == (MultiIndex((1,)), MultiIndex((2,)), MultiIndex((3,)))
    cg = CosineGradient4(d=1)
    assert cg.lambdas == (zero(1), MultiIndex((1,)), MultiIndex((2,)), MultiIndex((4,)))
    assert Merton().lambdas == (zero(1), MultiIndex((1,)), MultiIndex((2,)))


def test_phi_lambda_args_consistency():
    rng = np.random.default_rng(5)
    for problem in ALL_PROBLEMS:
        x = np.full(problem.d, problem.x_mid)
        x[0] = rng.uniform(problem.x_min, problem.x_max)
        args = problem.phi_lambda_args(x)
        expected = np.array([problem.phi_partial(lam, x) for lam in problem.lambdas])
        assert np.allclose(args, expected, rtol=1e-12, atol=1e-12)


def test_null_nonlinearity_problem():
    prob = NullNonlinearity("quadratic", d=2, T=0.3)
    assert prob.f_partial(zero(1), np.array([2.0])) == 0.0
    assert prob.exact_solution(0.0, np.array([1.5, 0.0])) == pytest.approx(1.5**2 + 0.3)
    assert prob.exact_solution(prob.T, np.array([1.5, 0.0])) == pytest.approx(1.5**2)
    lin = NullNonlinearity("linear", d=1)
    assert lin.exact_solution(0.1, np.array([0.7])) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        NullNonlinearity("cubic")
