import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmc_convergence.errors import DegenerateInputError, InputError
from hmc_convergence.flow import PhaseState
from hmc_convergence.potentials import (
    directional_secant_curvature,
    eval_gradient,
    eval_potential,
    hamiltonian_energy,
    logcosh,
    make_potential,
    quadratic,
    two_scale_gaussian,
)

from .conftest import potential_suite, random_spd


def central_difference(f, x, h=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_quadratic_minimum_is_zero():
    assert eval_potential(quadratic([1.0, 1.0]), [0.0, 0.0]) == 0.0


def test_logcosh_minimum_is_zero():
    assert eval_potential(logcosh(1, 1.0, 2.0), [0.0]) == 0.0


def test_quadratic_hand_value():
    # 0.5 * (1 * 1 + 4 * 1)
    assert eval_potential(quadratic([1.0, 4.0]), [1.0, 1.0]) == pytest.approx(2.5, abs=1e-15)


def test_identity_gradient():
    np.testing.assert_array_equal(eval_gradient(quadratic([1.0, 1.0]), [3.0, -2.0]), [3.0, -2.0])


def test_gradient_vanishes_at_minimizer(rng):
    for p in potential_suite(rng):
        np.testing.assert_allclose(eval_gradient(p, p.minimizer), 0.0, atol=1e-12)
    assert np.all(eval_gradient(logcosh(3, 1.0, 5.0), np.zeros(3)) == 0.0)
    assert np.all(eval_gradient(quadratic([1.0, 2.0], center=[3.0, -1.0]), [3.0, -1.0]) == 0.0)


def test_logcosh_gradient_value():
    p = logcosh(1, 1.0, 2.0)
    g = eval_gradient(p, np.array([1.0]))
    fd = central_difference(lambda x: eval_potential(p, x), np.array([1.0]))
    assert g[0] == pytest.approx(1.7615941559557649, rel=1e-15)
    assert fd[0] == pytest.approx(g[0], rel=1e-8)


def test_gradient_matches_finite_differences(rng):
    for p in potential_suite(rng):
        for _ in range(100):
            x = p.minimizer + rng.standard_normal(p.dim) / math.sqrt(p.mu)
            g = eval_gradient(p, x)
            fd = central_difference(lambda z: eval_potential(p, z), x)
            assert np.linalg.norm(g - fd) <= 1e-6 * (1 + np.linalg.norm(g))


def test_curvature_identity_quadratic(rng):
    p = quadratic(np.ones(3))
    x, y = rng.standard_normal((2, 3))
    assert directional_secant_curvature(p, x, y) == pytest.approx(1.0, abs=1e-14)


def test_curvature_along_eigendirection():
    mu, L = 0.3, 7.0
    p = quadratic([mu, L])
    assert directional_secant_curvature(p, [2.0, 1.0], [-1.0, 1.0]) == pytest.approx(mu, abs=1e-15)


def test_curvature_sandwich(rng):
    for p in potential_suite(rng) + [logcosh(1, 1.0, 2.0)]:
        x = p.minimizer + 3 * rng.standard_normal((1000, p.dim))
        y = p.minimizer + 3 * rng.standard_normal((1000, p.dim))
        rho = directional_secant_curvature(p, x, y)
        assert rho.min() >= p.mu - 1e-9
        assert rho.max() <= p.lipschitz + 1e-9


def test_gradient_lipschitz(rng):
    for p in potential_suite(rng):
        x = p.minimizer + 3 * rng.standard_normal((1000, p.dim))
        y = x + rng.standard_normal((1000, p.dim)) * rng.uniform(1e-3, 3, (1000, 1))
        lhs = np.linalg.norm(eval_gradient(p, x) - eval_gradient(p, y), axis=1)
        rhs = (p.lipschitz + 1e-9) * np.linalg.norm(x - y, axis=1)
        assert np.all(lhs <= rhs)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-50, 50), min_size=3, max_size=3),
    st.lists(st.floats(-50, 50), min_size=3, max_size=3),
)
def test_logcosh_monotone_gradient(xs, ys):
    p = logcosh(3, 1.0, 100.0)
    x, y = np.array(xs), np.array(ys)
    diff = x - y
    sq = diff @ diff
    if sq < 1e-12:
        return
    inner = (p.gradient(x) - p.gradient(y)) @ diff
    assert p.mu * sq * (1 - 1e-9) <= inner <= p.lipschitz * sq * (1 + 1e-9)


def test_curvature_degenerate():
    with pytest.raises(DegenerateInputError):
        directional_secant_curvature(quadratic([1.0]), [1.0], [1.0])


def test_dimension_mismatch():
    p = quadratic([1.0, 2.0])
    with pytest.raises(InputError):
        eval_potential(p, [1.0, 2.0, 3.0])
    with pytest.raises(InputError):
        eval_gradient(logcosh(2, 1, 2), [1.0])


def test_energy_values():
    assert hamiltonian_energy(logcosh(2, 1, 3), PhaseState(np.zeros(2), np.zeros(2))) == 0.0
    s = PhaseState([1.0, 0.0], [0.0, 1.0])
    assert hamiltonian_energy(quadratic([1.0, 1.0]), s) == pytest.approx(1.0, abs=1e-15)


def test_dense_matrix_agrees_with_rotation(rng):
    A = random_spd(rng, 4, 1.0, 9.0)
    b = rng.standard_normal(4)
    p = quadratic(matrix=A, center=b)
    x = rng.standard_normal(4)
    assert eval_potential(p, x) == pytest.approx(0.5 * (x - b) @ A @ (x - b), rel=1e-12)
    np.testing.assert_allclose(eval_gradient(p, x), A @ (x - b), rtol=1e-12, atol=1e-12)
    assert p.mu == pytest.approx(1.0) and p.lipschitz == pytest.approx(9.0)


def test_two_scale_instance():
    p = two_scale_gaussian(1.0, 100.0)
    # sigma_1 = 1/sqrt(mu), sigma_2 = 1/sqrt(L)
    x = np.array([2.0, 0.5])
    assert eval_potential(p, x) == pytest.approx(x[0] ** 2 / 2 + 100 * x[1] ** 2 / 2)
    assert p.kappa == 100.0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="quadratic", dim=2, mu=2.0, lipschitz=1.0),
        dict(kind="quadratic", dim=2, mu=0.0, lipschitz=1.0),
        dict(kind="quadratic", dim=2, mu=1.0, lipschitz=3.0, eigenvalues=[1.0, 4.0]),
        dict(kind="quadratic", dim=3, mu=1.0, lipschitz=3.0, eigenvalues=[1.0, 2.0]),
        dict(kind="logcosh", dim=0, mu=1.0, lipschitz=3.0),
        dict(kind="cubic", dim=2, mu=1.0, lipschitz=3.0),
    ],
)
def test_invalid_construction(kwargs):
    with pytest.raises(InputError):
        make_potential(**kwargs)


def test_rejects_asymmetric_matrix():
    with pytest.raises(InputError):
        quadratic(matrix=[[1.0, 0.5], [0.0, 1.0]])


def test_batched_evaluation(rng):
    p = logcosh(3, 1.0, 4.0)
    X = rng.standard_normal((7, 3))
    np.testing.assert_allclose(p.value(X), [p.value(x) for x in X])
    np.testing.assert_allclose(p.gradient(X), [p.gradient(x) for x in X])
