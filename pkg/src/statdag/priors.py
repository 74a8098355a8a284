"""Prior distributions and their conjugate or auxiliary-variable updates.

* horseshoe on the off-diagonal graph weights, via the inverse-gamma
  scale-mixture representation of the half-Cauchy;
* truncated stick-breaking mixture of inverse-Gaussian atoms on the noise
  variances ``d_k``;
* polar (spherical-coordinate) Cholesky factor with soft-thresholded angles
  for the task correlation;
* cumulative (multiplicative gamma) shrinkage on the CP factors, and a
  second-difference smoothness prior on the basis-direction factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special
from scipy.stats import geninvgauss

from .errors import EmptyTruncation
from .spectral import SpectralParams, link, link_grad, link_inverse


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters for every prior block."""

    truncation: int = 20
    mu_d_prior_sd: float = 100.0
    a_v: float = 1.0
    b_v: float = 1.0
    lambda_lo: float = 0.0
    lambda_hi: float = math.pi / 2
    angle_prior: str = "normal"
    sigma_t2: float = 1.0
    beta_a: float = 2.0
    kappa1: float = 2.1
    kappa2: float = 3.1
    nu1: float = 3.0
    c1: float = 1.0
    diff_ridge: float = 0.01


def inv_gamma(shape, rate, rng: np.random.Generator):
    """Draw from IG(shape, rate), i.e. ``rate / Gamma(shape, 1)``."""
    return np.asarray(rate) / rng.gamma(shape, 1.0, size=np.shape(rate) or None)


# ---------------------------------------------------------------------------
# horseshoe


@dataclass
class HorseshoeState:
    lambda2: np.ndarray
    tau2: float
    nu: np.ndarray
    xi_aux: float

    def copy(self) -> "HorseshoeState":
        return HorseshoeState(self.lambda2.copy(), self.tau2, self.nu.copy(), self.xi_aux)

    def prior_variance(self, d: np.ndarray) -> np.ndarray:
        """``d_i * lambda2_ij * tau2`` with the diagonal set to zero."""
        var = d[:, None] * self.lambda2 * self.tau2
        np.fill_diagonal(var, 0.0)
        return var


def sample_horseshoe_prior(p: int, rng: np.random.Generator) -> HorseshoeState:
    nu = inv_gamma(0.5, np.ones((p, p)), rng)
    lambda2 = inv_gamma(0.5, 1.0 / nu, rng)
    xi_aux = float(inv_gamma(0.5, 1.0, rng))
    tau2 = float(inv_gamma(0.5, 1.0 / xi_aux, rng))
    np.fill_diagonal(nu, 1.0)
    np.fill_diagonal(lambda2, 1.0)
    return HorseshoeState(lambda2, tau2, nu, xi_aux)


def horseshoe_gibbs_update(
    state: HorseshoeState, W: np.ndarray, d: np.ndarray, rng: np.random.Generator
) -> HorseshoeState:
    """One Gibbs pass over ``(lambda2, tau2, nu, xi)`` given ``W`` and ``d``."""
    p = W.shape[0]
    off = ~np.eye(p, dtype=bool)
    s = W**2 / (2.0 * d[:, None])
    lambda2 = np.ones((p, p))
    lambda2[off] = inv_gamma(1.0, 1.0 / state.nu[off] + s[off] / state.tau2, rng)
    tau2 = float(inv_gamma(0.5 * (off.sum() + 1), 1.0 / state.xi_aux + np.sum(s[off] / lambda2[off]), rng))
    nu = np.ones((p, p))
    nu[off] = inv_gamma(1.0, 1.0 + 1.0 / lambda2[off], rng)
    xi_aux = float(inv_gamma(1.0, 1.0 + 1.0 / tau2, rng))
    return HorseshoeState(lambda2, tau2, nu, xi_aux)


# ---------------------------------------------------------------------------
# stick-breaking mixture on D


@dataclass
class NoiseScale:
    """Noise variances ``d`` tied to atoms of a truncated stick-breaking mixture.

    ``sticks`` has length ``M`` with the last entry fixed at one.
    """

    assignment: np.ndarray
    atoms: np.ndarray
    sticks: np.ndarray
    mu_d: float
    v: float

    @property
    def d(self) -> np.ndarray:
        return self.atoms[self.assignment]

    @property
    def weights(self) -> np.ndarray:
        return stick_weights(self.sticks)

    def copy(self) -> "NoiseScale":
        return NoiseScale(self.assignment.copy(), self.atoms.copy(), self.sticks.copy(), self.mu_d, self.v)


def stick_weights(sticks: np.ndarray) -> np.ndarray:
    remaining = np.r_[1.0, np.cumprod(1.0 - sticks[:-1])]
    return sticks * remaining


def sample_atoms_prior(mu_d: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-Gaussian atoms with density proportional to ``t^{-3/2} exp(-(t - mu)^2 / (2t))``."""
    return rng.wald(mu_d, mu_d**2, size=size)


def sample_noise_prior(p: int, prior: PriorConfig, rng: np.random.Generator) -> NoiseScale:
    M = prior.truncation
    if M < 2:
        raise EmptyTruncation("stick-breaking truncation must be at least 2")
    mu_d = abs(rng.normal(0.0, prior.mu_d_prior_sd))
    v = rng.gamma(prior.a_v, 1.0 / prior.b_v)
    sticks = np.r_[rng.beta(1.0, v, size=M - 1), 1.0]
    atoms = sample_atoms_prior(mu_d, M, rng)
    assignment = rng.choice(M, size=p, p=stick_weights(sticks))
    return NoiseScale(assignment, atoms, sticks, mu_d, v)


def sample_gig(p, a, b, rng: np.random.Generator) -> np.ndarray:
    """Generalized inverse Gaussian with density ``x^{p-1} exp(-(a x + b / x) / 2)``."""
    p, a, b = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (p, a, b)))
    x = geninvgauss.rvs(p, np.sqrt(a * b), random_state=rng, size=p.shape)
    return np.sqrt(b / a) * x


def slice_sample_1d(logf, x0: float, width: float, rng: np.random.Generator, lower: float = -np.inf,
                    max_steps: int = 50) -> float:
    """Univariate slice sampler with stepping out and shrinkage."""
    y = logf(x0) - rng.exponential()
    lo = x0 - width * rng.uniform()
    hi = lo + width
    j = int(rng.integers(max_steps))
    k = max_steps - 1 - j
    while j > 0 and lo > lower and logf(lo) > y:
        lo -= width
        j -= 1
    while k > 0 and logf(hi) > y:
        hi += width
        k -= 1
    lo = max(lo, lower)
    while True:
        x1 = rng.uniform(lo, hi)
        if logf(x1) > y:
            return x1
        if x1 < x0:
            lo = x1
        else:
            hi = x1


def log_gamma_variate(shape, rng: np.random.Generator) -> np.ndarray:
    """``log X`` for ``X ~ Gamma(shape, 1)``, accurate for tiny shapes."""
    shape = np.asarray(shape, dtype=float)
    return np.log(rng.gamma(shape + 1.0)) + np.log(rng.uniform(size=shape.shape)) / shape


def log_beta_complement(a, b, rng: np.random.Generator) -> np.ndarray:
    """``log(1 - V)`` for ``V ~ Beta(a, b)`` without rounding ``V`` to one."""
    la = log_gamma_variate(a, rng)
    lb = log_gamma_variate(b, rng)
    return lb - np.logaddexp(la, lb)


def _mu_d_logdensity(mu: float, atoms: np.ndarray, prior_sd: float) -> float:
    if mu <= 0.0:
        return -np.inf
    M = len(atoms)
    a = np.sum(0.5 / atoms) + 0.5 / prior_sd**2
    return M * math.log(mu) + M * mu - a * mu * mu


def stick_breaking_update(
    state: NoiseScale,
    n_obs: np.ndarray,
    quad: np.ndarray,
    rng: np.random.Generator,
    prior: PriorConfig = PriorConfig(),
) -> NoiseScale:
    """Gibbs update of labels, atoms, sticks, ``mu_d`` and concentration ``v``.

    The likelihood contribution of variable ``k`` to its variance ``d`` is
    ``d^{-n_obs[k]/2} exp(-quad[k] / d)``.

    Raises:
        EmptyTruncation: if the truncation level is below 2.
    """
    M = len(state.atoms)
    if M < 2:
        raise EmptyTruncation("stick-breaking truncation must be at least 2")
    n_obs = np.asarray(n_obs, dtype=float)
    quad = np.asarray(quad, dtype=float)

    # labels
    logw = np.log(np.maximum(stick_weights(state.sticks), 1e-300))
    logm = np.log(state.atoms)
    logp = logw[None, :] - 0.5 * n_obs[:, None] * logm[None, :] - quad[:, None] / state.atoms[None, :]
    logp -= logp.max(axis=1, keepdims=True)
    prob = np.exp(logp)
    prob /= prob.sum(axis=1, keepdims=True)
    u = rng.uniform(size=len(n_obs))
    assignment = np.minimum((prob.cumsum(axis=1) < u[:, None]).sum(axis=1), M - 1)

    # atoms
    counts = np.bincount(assignment, weights=n_obs, minlength=M)
    quads = np.bincount(assignment, weights=quad, minlength=M)
    occupied = np.bincount(assignment, minlength=M) > 0
    atoms = sample_atoms_prior(state.mu_d, M, rng)
    if occupied.any():
        atoms[occupied] = sample_gig(
            -0.5 - 0.5 * counts[occupied], 1.0, state.mu_d**2 + 2.0 * quads[occupied], rng
        )
    atoms = np.maximum(atoms, 1e-300)

    # sticks
    members = np.bincount(assignment, minlength=M).astype(float)
    tail = np.r_[np.cumsum(members[::-1])[::-1][1:], 0.0]
    # log(1 - v_c) is drawn directly: v_c rounds to 1 when the concentration is small
    log_rest = log_beta_complement(1.0 + members[:-1], state.v + tail[:-1], rng)
    sticks = np.r_[-np.expm1(log_rest), 1.0]

    # concentration
    v = rng.gamma(prior.a_v + M - 1, 1.0 / (prior.b_v - np.sum(log_rest)))

    # atom location
    a = np.sum(0.5 / atoms) + 0.5 / prior.mu_d_prior_sd**2
    mode = (M + math.sqrt(M * M + 8.0 * a * M)) / (4.0 * a)
    width = 1.0 / math.sqrt(M / mode**2 + 2.0 * a)
    mu_d = slice_sample_1d(lambda m: _mu_d_logdensity(m, atoms, prior.mu_d_prior_sd),
                           state.mu_d, 2.0 * width, rng, lower=0.0)
    return NoiseScale(assignment, atoms, sticks, mu_d, v)


# ---------------------------------------------------------------------------
# task correlation


def soft_threshold(a_star, lam: float):
    """``sign(a* - pi/2) * (|a* - pi/2| - lam)_+ + pi/2``."""
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    z = np.asarray(a_star, dtype=float) - np.pi / 2
    out = np.sign(z) * np.maximum(np.abs(z) - lam, 0.0) + np.pi / 2
    return out if np.ndim(a_star) else float(out)


def polar_build(angles: np.ndarray) -> np.ndarray:
    """Lower-triangular ``B`` with unit-norm rows from polar angles.

    ``angles[l, j]`` for ``j < l`` holds the angle ``a_{l+1, j+1}``.  Row ``l``
    is ``(cos a_1, sin a_1 cos a_2, ..., sin a_1 ... sin a_{l-1})``.
    """
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    S = angles.shape[0]
    B = np.zeros((S, S))
    B[0, 0] = 1.0
    for l in range(1, S):
        a = angles[l, :l]
        sines = np.r_[1.0, np.cumprod(np.sin(a))]
        B[l, :l] = sines[:-1] * np.cos(a)
        B[l, l] = sines[-1]
    return B


@dataclass
class TaskCorrelation:
    """Polar angles ``a*`` (lower triangle of an S x S array) and soft threshold."""

    angles_raw: np.ndarray
    threshold: float
    sigma_t2: float = 1.0

    @property
    def S(self) -> int:
        return self.angles_raw.shape[0]

    def angles(self) -> np.ndarray:
        return np.tril(soft_threshold(self.angles_raw, self.threshold), -1)

    def B(self) -> np.ndarray:
        return polar_build(self.angles())

    def Q(self) -> np.ndarray:
        B = self.B()
        return B @ B.T

    def copy(self) -> "TaskCorrelation":
        return TaskCorrelation(self.angles_raw.copy(), self.threshold, self.sigma_t2)


def angle_to_latent(a_star):
    return link_inverse(np.asarray(a_star) / np.pi)


def latent_to_angle(u):
    return np.pi * link(u)


def angle_log_prior_latent(u, prior: PriorConfig) -> np.ndarray:
    """Log prior of the latent coordinate ``u`` with ``a* = pi * link(u)``."""
    u = np.asarray(u, dtype=float)
    if prior.angle_prior == "normal":
        return -0.5 * u**2 / prior.sigma_t2
    if prior.angle_prior == "beta":
        y = link(u)
        a = prior.beta_a
        return (a - 1.0) * (np.log(y) + np.log1p(-y)) + np.log(link_grad(u))
    raise ValueError(f"unknown angle prior {prior.angle_prior!r}")


def sample_task_prior(S: int, prior: PriorConfig, rng: np.random.Generator) -> TaskCorrelation:
    raw = np.zeros((S, S))
    idx = np.tril_indices(S, -1)
    if prior.angle_prior == "normal":
        raw[idx] = latent_to_angle(rng.normal(0.0, math.sqrt(prior.sigma_t2), size=len(idx[0])))
    else:
        raw[idx] = np.pi * rng.beta(prior.beta_a, prior.beta_a, size=len(idx[0]))
    lam = rng.uniform(prior.lambda_lo, prior.lambda_hi)
    return TaskCorrelation(raw, lam, prior.sigma_t2)


# ---------------------------------------------------------------------------
# cumulative shrinkage on CP factors


def second_difference_penalty(J: int, ridge: float = 0.01) -> np.ndarray:
    """``D^T D + ridge * I`` with ``D`` the (J-2) x J second-difference operator.

    The ridge makes the Gaussian prior proper.
    """
    D = np.diff(np.eye(J), n=2, axis=0)
    return D.T @ D + ridge * np.eye(J)


@dataclass
class ShrinkageState:
    """Hyperparameters of the CP factor priors.

    ``xi[s, r] ~ N(0, sigma_xi / (v_xi[s, r] * tau_r))`` with
    ``tau_r = prod_{i <= r} delta_xi[i]``; ``chi`` has its own
    ``(v_chi, delta_chi)``; ``eta[:, r] ~ N(0, sigma_kappa * P^{-1})``.
    """

    v_xi: np.ndarray
    delta_xi: np.ndarray
    v_chi: np.ndarray
    delta_chi: np.ndarray
    sigma_xi: float
    sigma_kappa: float
    P: np.ndarray = field(repr=False)

    @property
    def tau_xi(self) -> np.ndarray:
        return np.cumprod(self.delta_xi)

    @property
    def tau_chi(self) -> np.ndarray:
        return np.cumprod(self.delta_chi)

    def copy(self) -> "ShrinkageState":
        return replace(self, v_xi=self.v_xi.copy(), delta_xi=self.delta_xi.copy(),
                       v_chi=self.v_chi.copy(), delta_chi=self.delta_chi.copy())

    def factor_precisions(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal prior precisions of ``xi`` and ``chi``."""
        return (self.v_xi * self.tau_xi[None, :] / self.sigma_xi,
                self.v_chi * self.tau_chi[None, :])


def _sample_deltas(R: int, prior: PriorConfig, rng: np.random.Generator) -> np.ndarray:
    shapes = np.r_[prior.kappa1, np.full(R - 1, prior.kappa2)]
    return rng.gamma(shapes, 1.0)


def sample_shrinkage_prior(S: int, p: int, J: int, R: int, prior: PriorConfig,
                           rng: np.random.Generator) -> ShrinkageState:
    return ShrinkageState(
        v_xi=rng.gamma(prior.nu1, 1.0 / prior.nu1, size=(S, R)),
        delta_xi=_sample_deltas(R, prior, rng),
        v_chi=rng.gamma(prior.nu1, 1.0 / prior.nu1, size=(p, R)),
        delta_chi=_sample_deltas(R, prior, rng),
        sigma_xi=float(inv_gamma(prior.c1, prior.c1, rng)),
        sigma_kappa=float(inv_gamma(prior.c1, prior.c1, rng)),
        P=second_difference_penalty(J, prior.diff_ridge),
    )


def sample_factors_prior(shrink: ShrinkageState, rng: np.random.Generator) -> SpectralParams:
    prec_xi, prec_chi = shrink.factor_precisions()
    xi = rng.normal(size=prec_xi.shape) / np.sqrt(prec_xi)
    chi = rng.normal(size=prec_chi.shape) / np.sqrt(prec_chi)
    J = shrink.P.shape[0]
    R = prec_xi.shape[1]
    L = np.linalg.cholesky(shrink.P)
    eta = np.linalg.solve(L.T, rng.normal(size=(J, R))) * math.sqrt(shrink.sigma_kappa)
    return SpectralParams(xi, chi, eta)


def _mgp_update(F: np.ndarray, v: np.ndarray, delta: np.ndarray, scale: float,
                prior: PriorConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n, R = F.shape
    tau = np.cumprod(delta)
    F2 = F**2 / scale
    v = rng.gamma(prior.nu1 + 0.5, 1.0 / (prior.nu1 + 0.5 * tau[None, :] * F2))
    colsum = np.sum(v * F2, axis=0)
    delta = delta.copy()
    for h in range(R):
        tau_minus = np.cumprod(delta) / delta[h]
        shape = (prior.kappa1 if h == 0 else prior.kappa2) + 0.5 * n * (R - h)
        rate = 1.0 + 0.5 * np.sum(tau_minus[h:] * colsum[h:])
        delta[h] = rng.gamma(shape, 1.0 / rate)
    return v, delta


def cumulative_shrinkage_update(state: ShrinkageState, factors: SpectralParams,
                                rng: np.random.Generator,
                                prior: PriorConfig = PriorConfig()) -> ShrinkageState:
    """Gibbs update of all CP-factor hyperparameters given the factors."""
    v_xi, delta_xi = _mgp_update(factors.xi, state.v_xi, state.delta_xi, state.sigma_xi, prior, rng)
    v_chi, delta_chi = _mgp_update(factors.chi, state.v_chi, state.delta_chi, 1.0, prior, rng)
    S, R = factors.xi.shape
    J = factors.eta.shape[0]
    tau_xi = np.cumprod(delta_xi)
    sigma_xi = float(inv_gamma(prior.c1 + 0.5 * S * R,
                               prior.c1 + 0.5 * np.sum(v_xi * tau_xi[None, :] * factors.xi**2), rng))
    quad = np.einsum("jr,jk,kr->", factors.eta, state.P, factors.eta)
    sigma_kappa = float(inv_gamma(prior.c1 + 0.5 * J * R, prior.c1 + 0.5 * quad, rng))
    return ShrinkageState(v_xi, delta_xi, v_chi, delta_chi, sigma_xi, sigma_kappa, state.P)


def factor_log_prior(factors: SpectralParams, shrink: ShrinkageState) -> float:
    """Log density (up to constants in the factors) of the CP factors."""
    prec_xi, prec_chi = shrink.factor_precisions()
    quad_eta = np.einsum("jr,jk,kr->", factors.eta, shrink.P, factors.eta) / shrink.sigma_kappa
    return -0.5 * (np.sum(prec_xi * factors.xi**2) + np.sum(prec_chi * factors.chi**2) + quad_eta)


def factor_log_prior_grad(factors: SpectralParams, shrink: ShrinkageState) -> SpectralParams:
    prec_xi, prec_chi = shrink.factor_precisions()
    return SpectralParams(-prec_xi * factors.xi, -prec_chi * factors.chi,
                          -(shrink.P @ factors.eta) / shrink.sigma_kappa)


def log_beta_pdf(y, a):
    return (a - 1.0) * (np.log(y) + np.log1p(-y)) - special.betaln(a, a)
