"""B-spline spectral densities with a CP low-rank coefficient tensor.

Each latent unit-variance component ``(s, k)`` has spectral density

    f_{s,k}(w) = (1/pi) * sum_j theta_{s,k,j} * Bstar_j(|w| / pi)

where ``Bstar_j`` are B-splines normalized to integrate to one on ``[0, 1]``
and the weights ``theta_{s,k,.}`` are positive and sum to 1/2, so that ``f``
integrates to one over ``[-pi, pi]``.  The weights come from an unconstrained
array ``kappa`` through a link function, and ``kappa`` itself is a rank-``R``
CP product of three factor matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import BSpline

from .errors import DimensionMismatch, InvalidBasis, OutOfDomain

DEFAULT_DEGREE = 3


def knot_vector(J: int, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """Clamped knot vector on [0, 1] with equispaced interior knots."""
    if J < degree + 1:
        raise InvalidBasis(f"J={J} is too small for degree {degree} (need J >= {degree + 1})")
    n_interior = J - degree - 1
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    return np.r_[np.zeros(degree + 1), interior, np.ones(degree + 1)]


def basis_integrals(J: int, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    t = knot_vector(J, degree)
    return (t[degree + 1 : degree + 1 + J] - t[:J]) / (degree + 1)


def bspline_basis(
    J: int, degree: int = DEFAULT_DEGREE, grid=None, *, normalized: bool = True
) -> np.ndarray:
    """Evaluate the B-spline basis on ``grid``.

    Args:
        J: number of basis functions.
        degree: spline degree (3 = cubic).
        grid: points in ``[0, 1]``.
        normalized: divide each ``B_j`` by its integral over ``[0, 1]``.

    Returns:
        ``(len(grid), J)`` matrix.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(grid < 0.0) or np.any(grid > 1.0):
        raise ValueError("grid points must lie in [0, 1]")
    t = knot_vector(J, degree)
    order = np.argsort(grid, kind="stable")
    dm = BSpline.design_matrix(grid[order], t, degree).toarray()
    out = np.empty_like(dm)
    out[order] = dm
    if normalized:
        out /= basis_integrals(J, degree)
    return out


def link(u):
    """Map the real line monotonically onto (0, 1): ``(1 + u / (1 + |u|)) / 2``."""
    u = np.asarray(u, dtype=float)
    return 0.5 * (1.0 + u / (1.0 + np.abs(u)))


def link_grad(u):
    u = np.asarray(u, dtype=float)
    return 0.5 / (1.0 + np.abs(u)) ** 2


def link_inverse(y):
    """Inverse of :func:`link` on (0, 1)."""
    y = np.asarray(y, dtype=float)
    z = 2.0 * y - 1.0
    return z / (1.0 - np.abs(z))


@dataclass
class SpectralParams:
    """CP factors: ``xi`` (S, R), ``chi`` (p, R), ``eta`` (J, R)."""

    xi: np.ndarray
    chi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.chi = np.asarray(self.chi, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        R = self.xi.shape[1]
        if self.chi.shape[1] != R or self.eta.shape[1] != R:
            raise DimensionMismatch("CP factors must share the rank dimension")
        if self.eta.shape[0] < 4 or R < 1:
            raise DimensionMismatch("need J >= 4 and R >= 1")

    @property
    def J(self) -> int:
        return self.eta.shape[0]

    @property
    def R(self) -> int:
        return self.xi.shape[1]

    @property
    def S(self) -> int:
        return self.xi.shape[0]

    @property
    def p(self) -> int:
        return self.chi.shape[0]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.xi.ravel(), self.chi.ravel(), self.eta.ravel()])

    @classmethod
    def from_flat(cls, x: np.ndarray, S: int, p: int, J: int, R: int) -> "SpectralParams":
        a, b = S * R, (S + p) * R
        return cls(x[:a].reshape(S, R), x[a:b].reshape(p, R), x[b:].reshape(J, R))

    def copy(self) -> "SpectralParams":
        return SpectralParams(self.xi.copy(), self.chi.copy(), self.eta.copy())


def cp_kappa(params: SpectralParams) -> np.ndarray:
    """``kappa[s, k, j] = sum_r xi[s, r] * chi[k, r] * eta[j, r]``."""
    return np.einsum("sr,kr,jr->skj", params.xi, params.chi, params.eta)


def theta_from_kappa(kappa) -> np.ndarray:
    """Simplex weights along the last axis, positive and summing to 1/2."""
    psi = link(kappa)
    theta = psi / (2.0 * psi.sum(axis=-1, keepdims=True))
    # renormalize away rounding so the sum is 1/2 to machine precision
    return theta / (2.0 * theta.sum(axis=-1, keepdims=True))


def spectral_weights(params: SpectralParams) -> np.ndarray:
    """``theta`` array of shape (S, p, J)."""
    return theta_from_kappa(cp_kappa(params))


def _check_omega(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if np.any(np.abs(omega) > np.pi * (1.0 + 1e-12)):
        raise OutOfDomain("frequency outside [-pi, pi]")
    return np.minimum(np.abs(omega), np.pi)


@dataclass(frozen=True)
class SpectralDensity:
    """A single symmetric spectral density ``(1/pi) sum_j theta_j Bstar_j(|w|/pi)``."""

    weights: np.ndarray
    degree: int = DEFAULT_DEGREE

    @property
    def J(self) -> int:
        return len(self.weights)

    @property
    def knots(self) -> np.ndarray:
        return knot_vector(self.J, self.degree)

    def __call__(self, omega):
        w = _check_omega(omega)
        basis = bspline_basis(self.J, self.degree, np.atleast_1d(w) / np.pi)
        vals = basis @ np.asarray(self.weights, dtype=float) / np.pi
        return vals if np.ndim(omega) else float(vals[0])

    def breakpoints(self) -> np.ndarray:
        return np.pi * np.unique(self.knots)


def eval_spectral_density(params: SpectralParams, s: int, k: int, omega, degree: int = DEFAULT_DEGREE):
    """Evaluate ``f_{s,k}(omega)`` for the density induced by ``params``."""
    theta = spectral_weights(params)[s, k]
    return SpectralDensity(theta, degree)(omega)


def density(params: SpectralParams, s: int, k: int, degree: int = DEFAULT_DEGREE) -> SpectralDensity:
    return SpectralDensity(spectral_weights(params)[s, k], degree)


@lru_cache(maxsize=32)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def integrate_symmetric(f: Callable, n: int = 256, breakpoints=None) -> float:
    """``int_{-pi}^{pi} f`` for even ``f`` by Gauss-Legendre on ``[0, pi]``, doubled.

    With ``breakpoints`` the ``n`` nodes are split across the subintervals, so
    piecewise polynomials of modest degree are integrated exactly.
    """
    edges = np.array([0.0, np.pi]) if breakpoints is None else np.unique(np.r_[0.0, breakpoints, np.pi])
    per = max(n // (len(edges) - 1), 8)
    x, w = _gl(per)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        nodes = 0.5 * (b - a) * x + 0.5 * (b + a)
        total += 0.5 * (b - a) * float(np.dot(w, np.asarray(f(nodes), dtype=float)))
    return 2.0 * total


def autocovariance(f: Callable, h: int) -> float:
    """``gamma(h) = int_{-pi}^{pi} f(w) cos(h w) dw`` by adaptive quadrature."""
    if h < 0:
        raise ValueError("lag must be nonnegative")
    points = None
    if isinstance(f, SpectralDensity):
        points = f.breakpoints()[1:-1]
    limit = 200 + 20 * h
    val, _ = integrate.quad(
        lambda w: float(f(w)) * np.cos(h * w), 0.0, np.pi,
        points=points, limit=limit, epsabs=1e-13, epsrel=1e-12,
    )
    return 2.0 * val


class SpectralEvaluator:
    """Evaluates all ``p*S`` densities at a fixed frequency grid.

    Attributes:
        G: ``(n_freq, J)`` normalized basis at ``omegas / pi``.
    """

    def __init__(self, omegas, J: int, degree: int = DEFAULT_DEGREE):
        self.omegas = np.asarray(omegas, dtype=float)
        self.J = J
        self.degree = degree
        self.G = bspline_basis(J, degree, _check_omega(self.omegas) / np.pi)

    def densities(self, theta: np.ndarray) -> np.ndarray:
        """``(S, p, n_freq)`` values of ``f`` for weights ``theta`` of shape (S, p, J)."""
        return theta @ self.G.T / np.pi

    def __call__(self, params: SpectralParams) -> np.ndarray:
        return self.densities(spectral_weights(params))
