import math

import numpy as np
import pytest

from hmc_convergence.chain import (
    ADAPTIVE,
    COLLOCATION,
    DISCRETIZED,
    EXACT,
    IDEAL,
    ChainConfig,
    chain_rng,
    coupled_pair_flow,
    coupled_pair_path,
    default_config,
    find_minimizer,
    hmc_step,
    ideal_config,
    run_chain,
    with_steps,
)
from hmc_convergence.errors import ConvergenceError, DegenerateInputError, InputError, OutOfContractError
from hmc_convergence.potentials import logcosh, make_potential, quadratic

from .conftest import random_spd


def test_default_config_schedule():
    p = make_potential("quadratic", 10, 1.0, 1.0)
    cfg = default_config(p, 0.1)
    assert cfg.T == pytest.approx(6.25e-5, rel=1e-15)
    assert cfg.delta == pytest.approx(2.44140625e-11, rel=1e-14)
    assert cfg.N == math.ceil(2.0 * math.log(100.0) / 6.25e-5**2)
    assert (cfg.mode, cfg.solver, cfg.c) == (DISCRETIZED, COLLOCATION, 16000.0)


def test_default_config_scales_with_L():
    p = make_potential("quadratic", 4, 2.0, 50.0)
    cfg = default_config(p, 0.5)
    assert cfg.T * math.sqrt(50.0) == pytest.approx(1 / 16000, rel=1e-14)
    assert cfg.delta == pytest.approx(math.sqrt(2.0) * cfg.T**2 * 0.5 / 16, rel=1e-14)


@pytest.mark.parametrize("eps", [0.0, -1.0, 2.0, 5.0])
def test_default_config_rejects_epsilon(eps):
    with pytest.raises(InputError):
        default_config(make_potential("quadratic", 4, 1.0, 4.0), eps)


def test_config_validation():
    p = quadratic([1.0, 4.0])
    with pytest.raises(InputError):
        ChainConfig(p, T=0.0, N=1)
    with pytest.raises(InputError):
        ChainConfig(p, T=0.1, N=-1)
    with pytest.raises(InputError):
        ChainConfig(p, T=0.1, N=1, mode=DISCRETIZED)
    with pytest.raises(InputError):
        ChainConfig(p, T=0.1, N=1, mode=IDEAL, solver=COLLOCATION)
    with pytest.raises(InputError):
        ChainConfig(logcosh(2, 1, 4), T=0.1, N=1, solver=EXACT)
    with pytest.raises(OutOfContractError):
        ChainConfig(p, T=0.1, N=1, delta=1e-8, mode=DISCRETIZED, solver=COLLOCATION)


def test_ideal_config_step():
    cfg = ideal_config(quadratic([1.0, 100.0]), 2.0, 5)
    assert cfg.T == pytest.approx(0.05)
    assert cfg.solver == EXACT
    assert ideal_config(logcosh(2, 1, 4), 2.0, 5).solver == ADAPTIVE


def test_find_minimizer(rng):
    A = random_spd(rng, 5, 1.0, 20.0)
    b = rng.standard_normal(5)
    x, n = find_minimizer(quadratic(matrix=A, center=b), 1e-10, full_output=True)
    np.testing.assert_allclose(x, b, atol=1e-9)
    assert n > 1
    x = find_minimizer(logcosh(3, 1.0, 10.0), 1e-12, x0=[3.0, -2.0, 1.0])
    np.testing.assert_allclose(x, 0.0, atol=1e-12)


def test_find_minimizer_budget():
    with pytest.raises(ConvergenceError):
        find_minimizer(quadratic([1e-3, 1.0]), 1e-12, x0=[1.0, 1.0], max_iter=5)


def test_chain_rng_streams():
    a = chain_rng(7, 0).standard_normal(4)
    np.testing.assert_array_equal(a, chain_rng(7, 0).standard_normal(4))
    assert not np.allclose(a, chain_rng(7, 1).standard_normal(4))
    assert not np.allclose(a, chain_rng(8, 0).standard_normal(4))
    chain_rng(-1, 3).standard_normal()


def test_run_chain_deterministic():
    cfg = ideal_config(quadratic([1.0, 9.0]), 2.0, 50, seed=11)
    a, b = run_chain(cfg), run_chain(cfg)
    np.testing.assert_array_equal(a.points, b.points)
    assert a.points.shape == (51, 2)
    assert len(a.ledger) == 50
    assert not np.allclose(a.points, run_chain(cfg, chain_index=1).points)


def test_quarter_period_gives_iid_velocities():
    # with A = I and T = pi/2 the new position is exactly the refreshed velocity
    p = quadratic(np.ones(3))
    cfg = ideal_config(p, 2 / math.pi, 20, seed=5)
    traj = run_chain(cfg)
    rng = chain_rng(5, 0)
    for k in range(1, 21):
        np.testing.assert_allclose(traj.points[k], rng.standard_normal(3), atol=1e-12)


def test_hmc_step_distribution():
    # one exact step from x: mean cos(T w) x, variance sin^2(T w) / w^2
    p = quadratic([1.0, 4.0])
    cfg = ideal_config(p, 1.0, 1)
    x = np.array([2.0, -1.0])
    rng = chain_rng(3, 0)
    n = 20000
    pts = np.array([hmc_step(p, x, cfg, rng).position for _ in range(n)])
    w = np.sqrt(p.eigenvalues)
    mean = np.cos(cfg.T * w) * x
    var = np.sin(cfg.T * w) ** 2 / w**2
    assert np.all(np.abs(pts.mean(axis=0) - mean) <= 4 * np.sqrt(var / n))
    assert np.all(np.abs(pts.var(axis=0) - var) <= 4 * var * math.sqrt(2 / n))


def test_hmc_step_adaptive_matches_exact(rng):
    p = make_potential("quadratic", 3, 1.0, 9.0)
    x, v = rng.standard_normal((2, 3))
    exact = hmc_step(p, x, ideal_config(p, 2.0, 1), velocity=v)
    adaptive = hmc_step(p, x, ideal_config(p, 2.0, 1, solver=ADAPTIVE), velocity=v)
    assert np.linalg.norm(exact.position - adaptive.position) <= 1e-9
    assert exact.gradient_evaluations == 1
    assert adaptive.gradient_evaluations > 2


def test_hmc_step_collocation_ledger(rng):
    p = logcosh(5, 1.0, 4.0)
    cfg = with_steps(default_config(p, 0.5, seed=2), 10)
    traj = run_chain(cfg)
    assert len(traj.ledger) == 10
    assert all(g >= 2 for g in traj.ledger.per_step)
    assert all(n > 0 for n in traj.ledger.v0_norms)


def test_hmc_step_needs_randomness():
    p = quadratic([1.0])
    with pytest.raises(InputError):
        hmc_step(p, [0.0], ideal_config(p, 2.0, 1))
    with pytest.raises(InputError):
        hmc_step(p, [0.0, 1.0], ideal_config(p, 2.0, 1), velocity=[1.0, 1.0])


def test_coupled_identity_ratio(rng):
    p = quadratic(np.ones(4))
    x0, y0, v0 = rng.standard_normal((3, 4))
    for t in np.linspace(0, 0.5, 9):
        x, y = coupled_pair_flow(p, x0, y0, v0, t)
        ratio = np.linalg.norm(x - y) / np.linalg.norm(x0 - y0)
        assert ratio == pytest.approx(abs(math.cos(t)), rel=1e-12)


def test_coupled_path_matches_flow(rng):
    p = logcosh(3, 1.0, 16.0)
    x0, y0, v0 = rng.standard_normal((3, 3))
    times, xs, ys = coupled_pair_path(p, x0, y0, v0, 0.125, 4)
    assert times.tolist() == [0.0, 0.03125, 0.0625, 0.09375, 0.125]
    x, y = coupled_pair_flow(p, x0, y0, v0, 0.125)
    gap = np.linalg.norm(x0 - y0)
    assert np.linalg.norm(xs[-1] - x) <= 1e-7 * gap
    assert np.linalg.norm(ys[-1] - y) <= 1e-7 * gap


def test_coupled_contract_errors():
    p = quadratic([1.0, 4.0])
    with pytest.raises(DegenerateInputError):
        coupled_pair_flow(p, [1.0, 1.0], [1.0, 1.0], [0.0, 1.0], 0.1)
    with pytest.raises(OutOfContractError):
        coupled_pair_flow(p, [1.0, 1.0], [0.0, 1.0], [0.0, 1.0], 0.26)
    coupled_pair_flow(p, [1.0, 1.0], [0.0, 1.0], [0.0, 1.0], 0.25)
