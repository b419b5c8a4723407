"""Ideal and discretized HMC chains (no Metropolis correction).

Each step refreshes the velocity ``v ~ N(0, I)`` and moves the position along
the Hamiltonian flow for time ``T``. The flow is computed exactly
(quadratics), by the certified leapfrog reference, or by the collocation
solver with the piece count chosen from ``|v|`` and ``|grad f(x)|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DegenerateInputError, InputError, OutOfContractError
from .flow import (
    COLLOCATION_LIMIT,
    PhaseState,
    adaptive_reference_flow,
    adaptive_reference_path,
    collocation_flow,
    exact_quadratic_flow,
    piece_count,
)
from .potentials import QUADRATIC, Potential

IDEAL, DISCRETIZED = "ideal", "discretized"
MODES = (IDEAL, DISCRETIZED)
EXACT, ADAPTIVE, COLLOCATION = "exact", "adaptive", "collocation"
SOLVERS = (EXACT, ADAPTIVE, COLLOCATION)

# relative tolerance of the numerical stand-in for the exact flow
IDEAL_REL_TOL = 1e-10
# relative tolerance of synchronously coupled reference flows
COUPLED_REL_TOL = 1e-8


def chain_rng(seed: int, chain_index: int = 0) -> np.random.Generator:
    """Counter-based (Philox) stream keyed by ``(seed, chain_index)``."""
    key = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(chain_index)])
    return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True)
class ChainConfig:
    """HMC hyperparameters.

    ``delta == 0`` together with ``mode == "ideal"`` requests the exact flow;
    the adaptive solver then runs at ``IDEAL_REL_TOL`` times the stationary
    length scale ``sqrt(d / mu)``.
    """

    potential: Potential
    T: float
    N: int
    delta: float = 0.0
    epsilon: Optional[float] = None
    mode: str = IDEAL
    c: Optional[float] = None
    seed: int = 0
    solver: str = EXACT
    degree: int = 0

    def __post_init__(self):
        p = self.potential
        if not self.T > 0:
            raise InputError("T must be positive")
        if int(self.N) != self.N or self.N < 0:
            raise InputError("N must be a non-negative integer")
        if self.delta < 0:
            raise InputError("delta must be non-negative")
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}")
        if self.solver not in SOLVERS:
            raise InputError(f"solver must be one of {SOLVERS}")
        if self.mode == IDEAL and self.solver == COLLOCATION:
            raise InputError("ideal mode needs the exact or adaptive solver")
        if self.mode == DISCRETIZED and not self.delta > 0:
            raise InputError("discretized mode needs delta > 0")
        if self.solver == EXACT and p.kind != QUADRATIC:
            raise InputError("the exact solver exists only for quadratic potentials")
        if self.solver == COLLOCATION and math.sqrt(p.lipschitz) * self.T > COLLOCATION_LIMIT * (1 + 1e-12):
            raise OutOfContractError("collocation needs T sqrt(L) <= 1/16000")
        if self.epsilon is not None and not 0 < self.epsilon < math.sqrt(p.dim):
            raise InputError("epsilon must lie in (0, sqrt(d))")
        if self.c is None:
            object.__setattr__(self, "c", 1.0 / (self.T * math.sqrt(p.lipschitz)))

    @property
    def solver_tolerance(self) -> float:
        if self.mode == DISCRETIZED:
            return self.delta
        p = self.potential
        return IDEAL_REL_TOL * math.sqrt(p.dim / p.mu)


def default_config(p: Potential, epsilon: float, seed: int = 0, C_N: float = 2.0, **overrides) -> ChainConfig:
    """Discretized HMC with the guaranteed-accuracy schedule.

    ``T = 1/(16000 sqrt(L))``, ``delta = sqrt(mu) T^2 epsilon / 16`` and
    ``N = ceil(C_N log(d/epsilon) / (mu T^2))``. The constant ``C_N`` is a
    knob; only the order ``kappa log(d/epsilon)`` is guaranteed.
    """
    if not 0 < epsilon < math.sqrt(p.dim):
        raise InputError(f"epsilon must lie in (0, sqrt(d)) = (0, {math.sqrt(p.dim):.4g})")
    T = 1.0 / (16000.0 * math.sqrt(p.lipschitz))
    delta = math.sqrt(p.mu) * T * T * epsilon / 16.0
    N = math.ceil(C_N * math.log(p.dim / epsilon) / (p.mu * T * T))
    cfg = dict(potential=p, T=T, N=N, delta=delta, epsilon=epsilon, mode=DISCRETIZED, c=16000.0,
               seed=seed, solver=COLLOCATION)
    cfg.update(overrides)
    return ChainConfig(**cfg)


def ideal_config(p: Potential, c: float, N: int, seed: int = 0, solver: Optional[str] = None) -> ChainConfig:
    """Ideal HMC with step ``T = 1/(c sqrt(L))``."""
    if solver is None:
        solver = EXACT if p.kind == QUADRATIC else ADAPTIVE
    return ChainConfig(p, 1.0 / (c * math.sqrt(p.lipschitz)), N, 0.0, None, IDEAL, c, seed, solver)


def find_minimizer(p: Potential, tol: float, x0=None, max_iter: int = 10**6, full_output: bool = False):
    """Gradient descent with step ``1/L`` until ``|grad f(x)| <= tol``.

    Converges linearly at rate ``1 - 1/kappa`` by strong convexity. With
    ``full_output`` also returns the number of gradient evaluations.
    """
    if not tol > 0:
        raise InputError("tol must be positive")
    x = np.zeros(p.dim) if x0 is None else np.array(x0, dtype=float)
    step = 1.0 / p.lipschitz
    for n in range(1, max_iter + 1):
        g = p.gradient(x)
        if np.linalg.norm(g) <= tol:
            return (x, n) if full_output else x
        x = x - step * g
    raise ConvergenceError(f"gradient descent did not reach |grad f| <= {tol:g} in {max_iter} iterations")


@dataclass(frozen=True)
class StepResult:
    position: np.ndarray
    gradient_evaluations: int
    v0_norm: float
    grad_norm: float
    certified_error: Optional[float] = None


def hmc_step(p: Potential, x, config: ChainConfig, rng: Optional[np.random.Generator] = None,
             velocity=None) -> StepResult:
    """One HMC transition from ``x``.

    The velocity is drawn from ``rng`` (``d`` standard normals) unless given
    explicitly. The gradient at ``x`` is always evaluated once; it sizes the
    collocation piece count and is recorded in the ledger.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dim,):
        raise InputError(f"position must have shape ({p.dim},)")
    if velocity is None:
        if rng is None:
            raise InputError("need an rng or an explicit velocity")
        v = rng.standard_normal(p.dim)
    else:
        v = np.asarray(velocity, dtype=float)
    g = p.gradient(x)
    grads = 1
    v_norm = float(np.linalg.norm(v))
    g_norm = float(np.linalg.norm(g))
    s0 = PhaseState(x, v)
    certified = 0.0
    if config.solver == EXACT:
        new = exact_quadratic_flow(p, s0, config.T).position
    elif config.solver == ADAPTIVE:
        res = adaptive_reference_flow(p, s0, config.T, config.solver_tolerance)
        new, grads, certified = res.final.position, grads + res.gradient_evaluations, res.certified_error
    else:
        m = piece_count(v_norm, g_norm, p.lipschitz, config.T, config.delta)
        res = collocation_flow(p, s0, config.T, config.delta, m, config.degree, grad0=g)
        new, grads, certified = res.final.position, grads + res.gradient_evaluations, res.certified_error
    return StepResult(new, grads, v_norm, g_norm, certified)


@dataclass
class GradientLedger:
    per_step: list = field(default_factory=list)
    v0_norms: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)

    def record(self, step: StepResult):
        self.per_step.append(step.gradient_evaluations)
        self.v0_norms.append(step.v0_norm)
        self.grad_norms.append(step.grad_norm)

    def __len__(self):
        return len(self.per_step)


@dataclass
class ChainTrajectory:
    points: np.ndarray
    ledger: GradientLedger
    seed: int
    chain_index: int = 0


def start_point(p: Potential) -> np.ndarray:
    return find_minimizer(p, tol=1e-8 * math.sqrt(p.dim * p.lipschitz))


def run_chain(config: ChainConfig, chain_index: int = 0, start=None) -> ChainTrajectory:
    """Run ``config.N`` HMC steps from the minimizer (or ``start``).

    Deterministic in ``(config, chain_index)``.
    """
    p = config.potential
    x = start_point(p) if start is None else np.array(start, dtype=float)
    rng = chain_rng(config.seed, chain_index)
    points = np.empty((config.N + 1, p.dim))
    points[0] = x
    ledger = GradientLedger()
    for k in range(1, config.N + 1):
        step = hmc_step(p, x, config, rng)
        ledger.record(step)
        x = step.position
        points[k] = x
    return ChainTrajectory(points, ledger, config.seed, chain_index)


def _coupled_setup(p, x0, y0, v0, t):
    x0, y0, v0 = (np.asarray(a, dtype=float) for a in (x0, y0, v0))
    if not (x0.shape == y0.shape == v0.shape) or x0.shape[-1] != p.dim:
        raise InputError("x0, y0, v0 must share a shape with trailing dimension d")
    gap = np.sqrt(np.sum((x0 - y0) ** 2, axis=-1))
    if np.any(gap == 0):
        raise DegenerateInputError("coupled flows need x0 != y0")
    if t < 0 or t * math.sqrt(p.lipschitz) > 0.5 * (1 + 1e-12):
        raise OutOfContractError("coupling bounds hold only for 0 <= t <= 1/(2 sqrt(L))")
    return x0, y0, v0, gap


def coupled_pair_flow(p: Potential, x0, y0, v0, t: float, rel_tol: float = COUPLED_REL_TOL):
    """Flow ``x0`` and ``y0`` for time ``t`` with the same initial velocity ``v0``.

    Quadratics use the exact flow; other potentials the certified leapfrog
    reference at tolerance ``rel_tol * |x0 - y0|``. Rows of 2-d inputs are
    independent pairs.
    """
    x0, y0, v0, gap = _coupled_setup(p, x0, y0, v0, t)
    both = PhaseState(np.stack([x0, y0]), np.stack([v0, v0]))
    if p.kind == QUADRATIC:
        out = exact_quadratic_flow(p, both, t).position
    else:
        out = adaptive_reference_flow(p, both, t, rel_tol * float(np.min(gap))).final.position
    return out[0], out[1]


def coupled_pair_path(p: Potential, x0, y0, v0, t_max: float, n_out: int, rel_tol: float = COUPLED_REL_TOL):
    """Coupled endpoints on the uniform grid ``t_max * j / n_out``.

    Returns ``(times, xs, ys)`` with ``xs[j]`` the positions at ``times[j]``.
    """
    x0, y0, v0, gap = _coupled_setup(p, x0, y0, v0, t_max)
    both = PhaseState(np.stack([x0, y0]), np.stack([v0, v0]))
    times = t_max * np.arange(n_out + 1) / n_out
    if p.kind == QUADRATIC:
        pos = np.stack([exact_quadratic_flow(p, both, t).position for t in times])
    else:
        pos = adaptive_reference_path(p, both, t_max, rel_tol * float(np.min(gap)), n_out).positions
    return times, pos[:, 0], pos[:, 1]


def with_steps(config: ChainConfig, N: int) -> ChainConfig:
    return replace(config, N=N)
