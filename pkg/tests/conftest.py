import numpy as np
import pytest

from hmc_convergence.potentials import logcosh, make_potential, quadratic


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd(rng, d, mu, L):
    """Random SPD matrix with eigenvalues spread over [mu, L] (both ends attained)."""
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eigs = np.concatenate([[mu, L], rng.uniform(mu, L, d - 2)])
    return (Q * eigs) @ Q.T


def potential_suite(rng, d=5):
    """Quadratic (diagonal and dense, shifted) and log-cosh potentials for property sweeps."""
    return [
        make_potential("quadratic", d, 1.0, 10.0),
        quadratic(matrix=random_spd(rng, d, 0.5, 20.0), center=rng.standard_normal(d), mu=0.5, lipschitz=20.0),
        logcosh(d, 1.0, 2.0),
        logcosh(d, 1.0, 100.0),
    ]
