"""Solvers for the Hamiltonian ODE ``x'' = -grad f(x)``, ``x(0) = x0``, ``x'(0) = v0``.

Three routes are provided:

* :func:`exact_quadratic_flow` -- closed form per eigenmode, quadratics only.
* :func:`leapfrog_flow` / :func:`adaptive_reference_flow` -- velocity Verlet,
  optionally with step doubling until a Richardson estimate certifies the
  requested tolerance. This is the numerical stand-in for the exact flow.
* :func:`collocation_flow` -- Picard iteration on a piecewise polynomial
  representation of ``x''``, valid only for ``sqrt(L) t <= 1/16000``.

All routines accept positions/velocities of shape ``(d,)`` or ``(n, d)``;
errors and tolerances are measured per row and maximised over rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvergenceError, InputError, OutOfContractError, UnsupportedMethodError
from .potentials import QUADRATIC, Potential

COLLOCATION_LIMIT = 1.0 / 16000.0
MAX_REFERENCE_STEPS = 2**24
MAX_DEGREE = 8


@dataclass(frozen=True, eq=False)
class PhaseState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.position, dtype=float)
        v = np.asarray(self.velocity, dtype=float)
        if x.shape != v.shape or x.ndim == 0:
            raise InputError(f"position {x.shape} and velocity {v.shape} must share a shape")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise InputError("phase state must be finite")
        object.__setattr__(self, "position", x)
        object.__setattr__(self, "velocity", v)

    def flipped(self) -> "PhaseState":
        """Same position, negated velocity."""
        return PhaseState(self.position, -self.velocity)


@dataclass(frozen=True)
class FlowResult:
    final: PhaseState
    gradient_evaluations: int
    certified_error: Optional[float] = None


@dataclass(frozen=True)
class PiecewisePolynomial:
    """Piecewise polynomial approximation of ``x''`` on ``[0, T]``.

    ``coefficients[j, k]`` multiplies ``((s - T_j) / h_j) ** k`` on piece ``j``.
    """

    breakpoints: np.ndarray
    degree: int
    coefficients: np.ndarray

    def __call__(self, s: float) -> np.ndarray:
        j = int(np.clip(np.searchsorted(self.breakpoints, s, side="right") - 1, 0, len(self.breakpoints) - 2))
        h = self.breakpoints[j + 1] - self.breakpoints[j]
        u = (s - self.breakpoints[j]) / h
        powers = u ** np.arange(self.degree + 1)
        return np.tensordot(powers, self.coefficients[j], axes=(0, 0))


def _check_state(p: Potential, s0: PhaseState):
    if s0.position.shape[-1] != p.dim:
        raise InputError(f"state dimension {s0.position.shape[-1]} != potential dimension {p.dim}")


def _row_norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=-1))


def exact_quadratic_flow(p: Potential, s0: PhaseState, t: float) -> PhaseState:
    """Closed-form Hamiltonian flow of a quadratic; no gradient evaluations.

    In the eigenbasis each mode with eigenvalue ``a = 1/sigma^2`` rotates:
    ``x(t) = x0 cos(t/sigma) + v0 sigma sin(t/sigma)``. ``t`` may be an
    array of shape ``(n, 1)`` broadcasting against a batch of ``n`` states.
    """
    if p.kind != QUADRATIC:
        raise UnsupportedMethodError("exact flow exists only for quadratic potentials")
    _check_state(p, s0)
    omega = np.sqrt(p.eigenvalues)
    y = p._to_eigenbasis(s0.position)
    w = s0.velocity if p.eigvecs is None else s0.velocity @ p.eigvecs
    c, s = np.cos(omega * t), np.sin(omega * t)
    y_t = y * c + w * s / omega
    w_t = -y * omega * s + w * c
    x_t = p._from_eigenbasis(y_t) + p.center
    v_t = w_t if p.eigvecs is None else w_t @ p.eigvecs.T
    return PhaseState(x_t, v_t)


def _leapfrog(p: Potential, x, v, h: float, steps: int, record_every: int = 0):
    """Kick-drift-kick integration; returns (x, v, recorded positions).

    When ``record_every > 0`` the position is stored at step 0 and every
    ``record_every`` steps thereafter.
    """
    g = p.gradient(x)
    out = [x] if record_every else None
    for i in range(1, steps + 1):
        v = v - 0.5 * h * g
        x = x + h * v
        g = p.gradient(x)
        v = v - 0.5 * h * g
        if record_every and i % record_every == 0:
            out.append(x)
    return x, v, out


def leapfrog_flow(p: Potential, s0: PhaseState, t: float, steps: int) -> FlowResult:
    """Velocity Verlet with ``steps`` equal substeps of size ``t/steps``.

    Uses ``steps + 1`` gradient evaluations and is exactly time reversible.
    """
    if int(steps) != steps or steps < 1:
        raise InputError("steps must be a positive integer")
    _check_state(p, s0)
    if t == 0:
        return FlowResult(s0, 0)
    x, v, _ = _leapfrog(p, s0.position, s0.velocity, t / steps, int(steps))
    return FlowResult(PhaseState(x, v), int(steps) + 1)


@dataclass(frozen=True)
class ReferencePath:
    """Positions on the uniform grid ``t * j / n_out``, ``j = 0..n_out``."""

    times: np.ndarray
    positions: np.ndarray
    final: PhaseState
    gradient_evaluations: int
    certified_error: float
    steps: int


def adaptive_reference_path(
    p: Potential,
    s0: PhaseState,
    t: float,
    delta: float,
    n_out: int = 1,
    max_steps: int = MAX_REFERENCE_STEPS,
) -> ReferencePath:
    """Leapfrog with step doubling until the Richardson difference is below ``delta/10``.

    The difference is the sup over grid times (and batch rows) of
    ``|x_2n(t_j) - x_n(t_j)|``; the finer solution is returned and that
    difference is reported as its certified error.
    """
    if not delta > 0:
        raise InputError("delta must be positive")
    _check_state(p, s0)
    times = t * np.arange(n_out + 1) / n_out
    if t == 0:
        positions = np.repeat(s0.position[None], n_out + 1, axis=0)
        return ReferencePath(times, positions, s0, 0, 0.0, 0)
    n = n_out
    x, v, coarse = _leapfrog(p, s0.position, s0.velocity, t / n, n, record_every=n // n_out)
    grads = n + 1
    while True:
        n *= 2
        if n > max_steps:
            raise ConvergenceError(f"reference flow did not reach tolerance {delta:g} within {max_steps} steps")
        x, v, fine = _leapfrog(p, s0.position, s0.velocity, t / n, n, record_every=n // n_out)
        grads += n + 1
        diff = float(np.max(_row_norm(np.asarray(fine) - np.asarray(coarse))))
        if diff <= delta / 10:
            return ReferencePath(times, np.asarray(fine), PhaseState(x, v), grads, diff, n)
        coarse = fine


def adaptive_reference_flow(
    p: Potential, s0: PhaseState, t: float, delta: float, max_steps: int = MAX_REFERENCE_STEPS
) -> FlowResult:
    path = adaptive_reference_path(p, s0, t, delta, 1, max_steps)
    return FlowResult(path.final, path.gradient_evaluations, path.certified_error)


def piece_count(v0_norm: float, grad0_norm: float, L: float, t: float, delta: float) -> int:
    """Pieces needed for a piecewise-constant ``x''`` to be ``delta/t^2`` accurate.

    ``max(1, ceil(2 L t^3 / delta * (|v0| + t |grad f(x0)|)))``.
    """
    if not delta > 0:
        raise InputError("delta must be positive")
    raw = 2.0 * L * t**3 / delta * (v0_norm + t * grad0_norm)
    # guard against round-up of exact integers, e.g. 20.000000000000004
    return max(1, math.ceil(raw * (1 - 1e-12)))


def collocation_nodes(degree: int) -> np.ndarray:
    """Nodes in [0, 1]: the midpoint for degree 0, Chebyshev-Gauss points otherwise."""
    if degree == 0:
        return np.array([0.5])
    k = np.arange(degree + 1)
    return np.sort(0.5 * (1 - np.cos((2 * k + 1) * np.pi / (2 * (degree + 1)))))


def collocation_flow(
    p: Potential,
    s0: PhaseState,
    t: float,
    delta: float,
    pieces: int,
    degree: int = 0,
    grad0: Optional[np.ndarray] = None,
    return_polynomial: bool = False,
):
    """Picard collocation solver on ``pieces`` equal pieces of degree ``degree``.

    ``x''`` is represented by its values at ``degree + 1`` nodes per piece.
    Each sweep integrates the current representation twice (carrying
    position/velocity across breakpoints) and re-evaluates ``-grad f`` at
    every node. Iteration stops once the sup-norm change is at most
    ``delta / (10 t^2)``.

    ``grad0`` lets a caller that already evaluated ``grad f(x0)`` skip that
    evaluation; otherwise it is counted.
    """
    if not delta > 0:
        raise InputError("delta must be positive")
    if int(pieces) != pieces or pieces < 1:
        raise InputError("pieces must be a positive integer")
    if int(degree) != degree or not 0 <= degree <= MAX_DEGREE:
        raise InputError(f"degree must be an integer in [0, {MAX_DEGREE}]")
    if t < 0:
        raise InputError("t must be non-negative")
    if math.sqrt(p.lipschitz) * t > COLLOCATION_LIMIT * (1 + 1e-12):
        raise OutOfContractError(
            f"sqrt(L) t = {math.sqrt(p.lipschitz) * t:.3g} exceeds 1/16000; use adaptive_reference_flow"
        )
    _check_state(p, s0)
    m, D = int(pieces), int(degree)
    if t == 0:
        result = FlowResult(s0, 0, 0.0)
        return (result, None) if return_polynomial else result

    x0, v0 = s0.position, s0.velocity
    grads = 0
    if grad0 is None:
        grad0 = p.gradient(x0)
        grads += 1
    h = t / m
    nodes = collocation_nodes(D)
    powers = np.arange(D + 1)
    vander_inv = np.linalg.inv(nodes[:, None] ** powers[None, :])
    # integrals of u^k over [0, 1] scaled for velocity / position increments
    vel_w = h / (powers + 1)
    pos_w = h * h / ((powers + 1) * (powers + 2))
    node_pos_w = h * h * nodes[:, None] ** (powers + 2)[None, :] / ((powers + 1) * (powers + 2))[None, :]

    c_norm = float(np.max(_row_norm(v0) + t * _row_norm(grad0)))
    max_iter = max(1, math.ceil(math.log2(max(c_norm * t / delta, 1.0)))) + 8
    tol = delta / (10 * t * t)

    batch = x0.shape[:-1]
    q = np.broadcast_to(-grad0, (m, D + 1) + batch + (p.dim,)).copy()

    def integrate(q):
        coef = np.tensordot(vander_inv, q, axes=(1, 1))  # (D+1, m, ..., d)
        coef = np.moveaxis(coef, 0, 1)  # (m, D+1, ..., d)
        dv = np.tensordot(vel_w, coef, axes=(0, 1))  # (m, ..., d)
        dx_acc = np.tensordot(pos_w, coef, axes=(0, 1))
        v_start = v0 + np.concatenate([np.zeros_like(dv[:1]), np.cumsum(dv, axis=0)[:-1]])
        dx = h * v_start + dx_acc
        x_start = x0 + np.concatenate([np.zeros_like(dx[:1]), np.cumsum(dx, axis=0)[:-1]])
        node_x = (
            x_start[:, None]
            + h * nodes.reshape((1, D + 1) + (1,) * (x0.ndim)) * v_start[:, None]
            + np.tensordot(node_pos_w, coef, axes=(1, 1)).swapaxes(0, 1)
        )
        x_end = x_start[-1] + dx[-1]
        v_end = v_start[-1] + dv[-1]
        return coef, node_x, x_end, v_end, v_start

    for it in range(1, max_iter + 1):
        _, node_x, _, _, _ = integrate(q)
        q_new = -p.gradient(node_x)
        grads += m * (D + 1)
        change = float(np.max(_row_norm(q_new - q)))
        q = q_new
        if change <= tol:
            break
    else:
        raise ConvergenceError(f"Picard iteration did not settle in {max_iter} sweeps (last change {change:.3g})")

    coef, _, x_end, v_end, v_start = integrate(q)
    # a posteriori bound: |x~ - x| <= t^2/2 * sup|q - x''|, with x'' varying by
    # at most L * |v| * h over a piece
    v_max = float(np.max(_row_norm(v_start))) + h * float(np.max(_row_norm(q)))
    lt2 = p.lipschitz * t * t
    certified = 0.5 * t * t * (p.lipschitz * v_max * h + change) / (1 - lt2)
    result = FlowResult(PhaseState(x_end, v_end), grads, certified)
    if return_polynomial:
        poly = PiecewisePolynomial(np.linspace(0.0, t, m + 1), D, coef)
        return result, poly
    return result
