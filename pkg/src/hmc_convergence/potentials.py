"""Strongly convex, smooth target potentials f with density proportional to exp(-f).

Every potential exposes only f and its gradient; no Hessian is ever used.
Evaluation broadcasts over leading axes, so ``x`` may be a single point of
shape ``(d,)`` or a batch of shape ``(n, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, InputError

QUADRATIC = "quadratic"
LOGCOSH = "logcosh"
KINDS = (QUADRATIC, LOGCOSH)

_EIG_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class Potential:
    """A mu-strongly convex, L-smooth potential.

    Quadratics are ``f(x) = 0.5 (x - b)^T A (x - b)``. When ``A`` is diagonal
    only its eigenvalues are stored (``eigvecs is None``); otherwise the
    symmetric eigendecomposition is kept for the closed-form flow.

    Log-cosh potentials are ``f(x) = sum_i mu/2 x_i^2 + (L - mu) log cosh(x_i)``
    whose Hessian diagonal ``mu + (L - mu) sech^2(x_i)`` lies in ``(mu, L]``.
    """

    kind: str
    dim: int
    mu: float
    lipschitz: float
    eigenvalues: Optional[np.ndarray] = None
    eigvecs: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    _matrix: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def kappa(self) -> float:
        return self.lipschitz / self.mu

    @property
    def minimizer(self) -> np.ndarray:
        if self.kind == QUADRATIC:
            return self.center.copy()
        return np.zeros(self.dim)

    @property
    def matrix(self) -> np.ndarray:
        """Dense Hessian of a quadratic (built on demand for diagonal ones)."""
        if self.kind != QUADRATIC:
            raise InputError("only quadratic potentials have a constant matrix")
        if self._matrix is not None:
            return self._matrix
        return np.diag(self.eigenvalues)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise InputError(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        return x

    def _to_eigenbasis(self, x: np.ndarray) -> np.ndarray:
        y = x - self.center
        return y if self.eigvecs is None else y @ self.eigvecs

    def _from_eigenbasis(self, y: np.ndarray) -> np.ndarray:
        return y if self.eigvecs is None else y @ self.eigvecs.T

    def value(self, x) -> np.ndarray | float:
        x = self._check(x)
        if self.kind == QUADRATIC:
            y = self._to_eigenbasis(x)
            return 0.5 * np.sum(self.eigenvalues * y * y, axis=-1)
        a = np.abs(x)
        logcosh = a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)
        return np.sum(0.5 * self.mu * x * x + (self.lipschitz - self.mu) * logcosh, axis=-1)

    def gradient(self, x) -> np.ndarray:
        x = self._check(x)
        if self.kind == QUADRATIC:
            y = self._to_eigenbasis(x)
            return self._from_eigenbasis(self.eigenvalues * y)
        return self.mu * x + (self.lipschitz - self.mu) * np.tanh(x)


def quadratic(eigenvalues=None, *, matrix=None, center=None, mu=None, lipschitz=None) -> Potential:
    """Build ``f(x) = 0.5 (x - center)^T A (x - center)``.

    Pass either ``eigenvalues`` (A diagonal) or a full symmetric positive
    definite ``matrix``. ``mu`` and ``lipschitz`` default to the extreme
    eigenvalues; if given they must bracket the spectrum.
    """
    if (eigenvalues is None) == (matrix is None):
        raise InputError("give exactly one of eigenvalues or matrix")
    eigvecs = None
    dense = None
    if matrix is not None:
        dense = np.array(matrix, dtype=float)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise InputError("matrix must be square")
        if not np.allclose(dense, dense.T, rtol=0, atol=1e-12 * max(1.0, np.abs(dense).max())):
            raise InputError("matrix must be symmetric")
        dense = 0.5 * (dense + dense.T)
        eigs, eigvecs = np.linalg.eigh(dense)
    else:
        eigs = np.array(eigenvalues, dtype=float).reshape(-1)
    if eigs.size == 0 or not np.all(np.isfinite(eigs)):
        raise InputError("eigenvalues must be finite and non-empty")
    if np.any(eigs <= 0):
        raise InputError("quadratic must be positive definite")
    mu = float(eigs.min()) if mu is None else float(mu)
    lipschitz = float(eigs.max()) if lipschitz is None else float(lipschitz)
    _check_constants(mu, lipschitz)
    scale = _EIG_SLACK * lipschitz
    if eigs.min() < mu - scale or eigs.max() > lipschitz + scale:
        raise InputError(f"eigenvalues must lie in [mu, L] = [{mu}, {lipschitz}]")
    d = eigs.size
    center = np.zeros(d) if center is None else np.array(center, dtype=float).reshape(-1)
    if center.size != d:
        raise InputError("center has wrong dimension")
    eigs.setflags(write=False)
    center.setflags(write=False)
    return Potential(QUADRATIC, d, mu, lipschitz, eigs, eigvecs, center, dense)


def two_scale_gaussian(mu: float, lipschitz: float) -> Potential:
    """The 2-d instance ``x1^2/(2 s1^2) + x2^2/(2 s2^2)`` with ``s1 = mu^-1/2, s2 = L^-1/2``.

    Ideal HMC on this target has relaxation time growing linearly in L/mu.
    """
    return quadratic([mu, lipschitz], mu=mu, lipschitz=lipschitz)


def logcosh(dim: int, mu: float, lipschitz: float) -> Potential:
    if int(dim) != dim or dim < 1:
        raise InputError("dim must be a positive integer")
    _check_constants(mu, lipschitz)
    return Potential(LOGCOSH, int(dim), float(mu), float(lipschitz))


def make_potential(kind: str, dim: int, mu: float, lipschitz: float, eigenvalues=None, center=None) -> Potential:
    """Construct a potential from flat config values.

    Quadratics without an explicit spectrum get eigenvalues evenly spaced
    over ``[mu, L]``.
    """
    if kind == QUADRATIC:
        if eigenvalues is None:
            if dim == 1:
                eigenvalues = [mu]
            else:
                eigenvalues = np.linspace(mu, lipschitz, int(dim))
        elif len(eigenvalues) != dim:
            raise InputError("eigenvalue list length must equal dim")
        return quadratic(eigenvalues, center=center, mu=mu, lipschitz=lipschitz)
    if kind == LOGCOSH:
        if eigenvalues is not None or center is not None:
            raise InputError("logcosh takes no eigenvalues or center")
        return logcosh(dim, mu, lipschitz)
    raise InputError(f"unknown potential kind {kind!r}; expected one of {KINDS}")


def _check_constants(mu, lipschitz):
    if not (np.isfinite(mu) and np.isfinite(lipschitz)):
        raise InputError("mu and L must be finite")
    if mu <= 0:
        raise InputError("mu must be positive")
    if lipschitz < mu:
        raise InputError("need L >= mu")


def eval_potential(p: Potential, x) -> float:
    return p.value(x)


def eval_gradient(p: Potential, x) -> np.ndarray:
    return p.gradient(x)


def directional_secant_curvature(p: Potential, x, y) -> float:
    """Average curvature of f along the segment from y to x.

    Equals ``<grad f(x) - grad f(y), x - y> / |x - y|^2`` and always lies in
    ``[mu, L]``.
    """
    x = p._check(x)
    y = p._check(y)
    diff = x - y
    sq = np.sum(diff * diff, axis=-1)
    if np.any(sq == 0):
        raise DegenerateInputError("secant curvature undefined for x == y")
    return np.sum((p.gradient(x) - p.gradient(y)) * diff, axis=-1) / sq


def hamiltonian_energy(p: Potential, s) -> float:
    """``H(x, v) = f(x) + |v|^2 / 2`` for a phase state ``s``."""
    v = np.asarray(s.velocity, dtype=float)
    x = np.asarray(s.position, dtype=float)
    if v.shape != x.shape:
        raise InputError("position and velocity shapes differ")
    return p.value(x) + 0.5 * np.sum(v * v, axis=-1)
