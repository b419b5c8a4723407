"""Hamiltonian Monte Carlo for mu-strongly convex, L-smooth potentials."""
from .chain import ChainConfig, default_config, find_minimizer, hmc_step, ideal_config, run_chain
from .errors import ConvergenceError, DegenerateInputError, InputError, OutOfContractError, UnsupportedMethodError
from .flow import PhaseState, adaptive_reference_flow, collocation_flow, exact_quadratic_flow, leapfrog_flow
from .potentials import Potential, logcosh, make_potential, quadratic, two_scale_gaussian

__version__ = "0.1.0"
