"""Whittle pseudo-likelihood and the Gibbs/Metropolis sampler for ``(W, D, B, f)``.

All sweep updates share the signature ``update(state, data, rng, ctx)``, act
in place on the chain state and return it.  A sweep is a sequence of such
updates, so validation code can substitute modified updates.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NumericalFailure, SingularCovariance, StatDagError
from .priors import (
    HorseshoeState,
    NoiseScale,
    PriorConfig,
    ShrinkageState,
    TaskCorrelation,
    angle_log_prior_latent,
    angle_to_latent,
    cumulative_shrinkage_update,
    factor_log_prior,
    factor_log_prior_grad,
    horseshoe_gibbs_update,
    latent_to_angle,
    polar_build,
    second_difference_penalty,
    soft_threshold,
    stick_breaking_update,
    stick_weights,
)
from .series import MatrixSeries, real_dft, schedule_frequencies
from .spectral import SpectralParams, bspline_basis, cp_kappa, link, link_grad

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 5000
    burnin: int = 2500
    thin: int = 5
    J: int = 10
    R: int = 3
    degree: int = 3
    drop_mean: bool = True
    jitter: float = 1e-8
    target_rw: float = 0.30
    target_mala: float = 0.574
    update_rotation: bool = False
    init_mala_step: float = 0.01
    init_rw_scale: float = 0.5
    adapt_decay: float = 0.6


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class WhittleData:
    """Fourier coefficients entering the pseudo-likelihood.

    ``response[i]`` is regressed on ``design[j]`` for ``j != i``.  For real
    data both are the transformed series; validation code fixes the design
    and re-simulates only the response.

    Attributes:
        response, design: ``(p, S, M)`` coefficients at the used slots.
        omegas: ``(M,)`` frequency of each used slot.
        G: ``(M, J)`` normalized B-spline basis at ``omegas / pi``.
    """

    response: np.ndarray
    design: np.ndarray
    omegas: np.ndarray
    G: np.ndarray

    @property
    def p(self) -> int:
        return self.response.shape[0]

    @property
    def S(self) -> int:
        return self.response.shape[1]

    @property
    def M(self) -> int:
        return self.response.shape[2]

    @property
    def J(self) -> int:
        return self.G.shape[1]

    def with_response(self, response: np.ndarray) -> "WhittleData":
        return WhittleData(response, self.design, self.omegas, self.G)

    @classmethod
    def from_coefficients(cls, response, design=None, *, J: int = 10, degree: int = 3,
                          drop_mean: bool = True) -> "WhittleData":
        """Build from full ``(p, S, T)`` real-DFT coefficient arrays."""
        response = np.asarray(response, dtype=float)
        design = response if design is None else np.asarray(design, dtype=float)
        if design.shape != response.shape:
            raise DimensionMismatch("design and response coefficients differ in shape")
        T = response.shape[-1]
        slots = np.arange(1 if drop_mean else 0, T)
        omegas = schedule_frequencies(T)[slots]
        G = bspline_basis(J, degree, omegas / np.pi)
        return cls(response[..., slots], design[..., slots], omegas, G)

    @classmethod
    def from_series(cls, series: MatrixSeries, *, J: int = 10, degree: int = 3,
                    drop_mean: bool = True) -> "WhittleData":
        return cls.from_coefficients(real_dft(series.values), J=J, degree=degree, drop_mean=drop_mean)


# ---------------------------------------------------------------------------
# state


@dataclass
class ChainState:
    W: np.ndarray
    noise: NoiseScale
    corr: TaskCorrelation
    spectral: SpectralParams
    horseshoe: HorseshoeState
    shrink: ShrinkageState
    step_sizes: dict = field(default_factory=dict)
    iteration: int = 0
    rotation: np.ndarray | None = None
    accept: dict = field(default_factory=dict)

    @property
    def d(self) -> np.ndarray:
        return self.noise.d

    def B(self) -> np.ndarray:
        return self.corr.B()

    def U(self) -> np.ndarray | None:
        return None if self.rotation is None else cayley(self.rotation)

    def copy(self) -> "ChainState":
        return ChainState(
            self.W.copy(), self.noise.copy(), self.corr.copy(), self.spectral.copy(),
            self.horseshoe.copy(), self.shrink.copy(),
            {k: np.copy(v) for k, v in self.step_sizes.items()}, self.iteration,
            None if self.rotation is None else self.rotation.copy(),
            {k: list(v) for k, v in self.accept.items()},
        )


@dataclass
class SweepContext:
    prior: PriorConfig = PriorConfig()
    config: SamplerConfig = SamplerConfig()
    adapt: bool = False

    def rate(self, iteration: int) -> float:
        return (iteration + 1.0) ** (-self.config.adapt_decay)


def cayley(params: np.ndarray) -> np.ndarray:
    """Orthogonal ``(I - A)(I + A)^{-1}`` from the lower triangle of ``params`` (A skew)."""
    A = np.tril(params, -1)
    A = A - A.T
    I = np.eye(A.shape[0])
    return np.linalg.solve((I + A).T, (I - A).T).T


def _tick(state: ChainState, key: str, accepted: float):
    acc = state.accept.setdefault(key, [0.0, 0])
    acc[0] += accepted
    acc[1] += 1


def initial_state(p: int, S: int, config: SamplerConfig, prior: PriorConfig,
                  rng: np.random.Generator) -> ChainState:
    """Deterministic-given-rng starting point suited to standardized data."""
    M = prior.truncation
    J, R = config.J, config.R
    sticks = np.r_[np.full(M - 1, 0.5), 1.0]
    noise = NoiseScale(np.zeros(p, dtype=int), np.ones(M), sticks, 1.0, 1.0)
    raw = np.tril(np.full((S, S), np.pi / 2), -1)
    corr = TaskCorrelation(raw, 0.25 * (prior.lambda_lo + prior.lambda_hi), prior.sigma_t2)
    spectral = SpectralParams(0.1 * rng.normal(size=(S, R)), 0.1 * rng.normal(size=(p, R)),
                              0.1 * rng.normal(size=(J, R)))
    hs = HorseshoeState(np.ones((p, p)), 1.0, np.ones((p, p)), 1.0)
    shrink = ShrinkageState(np.ones((S, R)), np.ones(R), np.ones((p, R)), np.ones(R), 1.0, 1.0,
                            second_difference_penalty(J, prior.diff_ridge))
    steps = {
        "angles": np.full((S, S), config.init_rw_scale),
        "threshold": np.array(config.init_rw_scale),
        "mala": np.array(config.init_mala_step),
    }
    rotation = None
    if config.update_rotation:
        rotation = np.zeros((S, S))
        steps["rotation"] = np.full((S, S), 0.1)
    return ChainState(np.zeros((p, p)), noise, corr, spectral, hs, shrink, steps, 0, rotation)


# ---------------------------------------------------------------------------
# likelihood


def spectral_scale(theta: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``2*pi*f`` at the used frequencies, shape (S, p, M)."""
    return 2.0 * theta @ G.T


def _theta(params: SpectralParams) -> np.ndarray:
    psi = link(cp_kappa(params))
    return psi / (2.0 * psi.sum(axis=-1, keepdims=True))


def residuals(W: np.ndarray, data: WhittleData) -> np.ndarray:
    return data.response - np.tensordot(W, data.design, axes=(1, 0))


def whiten(X: np.ndarray, B: np.ndarray, U: np.ndarray | None = None) -> np.ndarray:
    """Apply ``(B U)^{-1}`` along the task axis of a ``(p, S, M)`` array."""
    p, S, M = X.shape
    Z = solve_triangular(B, X.transpose(1, 0, 2).reshape(S, -1), lower=True, check_finite=False)
    if U is not None:
        Z = U.T @ Z
    return Z.reshape(S, p, M).transpose(1, 0, 2)


def _check_mixing(B: np.ndarray):
    diag = np.diag(B)
    if np.any(diag <= 0.0):
        raise SingularCovariance("task-correlation factor is singular")
    return float(np.sum(np.log(diag)))


def _loglik(R: np.ndarray, d: np.ndarray, B: np.ndarray, U, F: np.ndarray) -> float:
    logdet = _check_mixing(B)
    if np.any(F <= 0.0):
        raise SingularCovariance("spectral density evaluated to a nonpositive value")
    p, S, M = R.shape
    Z = whiten(R, B, U)
    dF = d[:, None, None] * F.transpose(1, 0, 2)
    return float(-0.5 * S * p * M * LOG_2PI - 0.5 * np.sum(np.log(dF)) - p * M * logdet
                 - 0.5 * np.sum(Z**2 / dF))


def whittle_loglik(state: ChainState, data: WhittleData) -> float:
    """Whittle pseudo-log-likelihood of the residual Fourier coefficients.

    For variable ``k`` and slot ``m`` the task vector of residual coefficients is
    Gaussian with covariance ``d_k * L * diag(2*pi*f_{.,k}(omega_m)) * L^T`` where
    ``L = B U``.

    Raises:
        SingularCovariance: if the covariance is not positive definite.
    """
    F = spectral_scale(_theta(state.spectral), data.G)
    return _loglik(residuals(state.W, data), state.d, state.B(), state.U(), F)


# ---------------------------------------------------------------------------
# W rows and horseshoe


def update_W_rows(state: ChainState, data: WhittleData, rng: np.random.Generator,
                  ctx: SweepContext = SweepContext()) -> ChainState:
    """Draw each row of ``W`` from its exact Gaussian full conditional.

    Rows are conditionally independent, so all ``p`` conditionals are formed
    and factorized as one batch.
    """
    p = data.p
    B, U = state.B(), state.U()
    Yt = whiten(data.response, B, U).reshape(p, -1)
    Xt = whiten(data.design, B, U).reshape(p, -1)
    wts = 1.0 / spectral_scale(_theta(state.spectral), data.G).transpose(1, 0, 2).reshape(p, -1)
    gram = np.matmul(Xt[None, :, :] * wts[:, None, :], Xt.T)
    cross = (wts * Yt) @ Xt.T
    others = np.array([np.r_[0:i, i + 1:p] for i in range(p)])
    rows = np.arange(p)[:, None]
    hs = state.horseshoe
    d = state.d
    prec = gram[rows[:, :, None], others[:, :, None], others[:, None, :]]
    prior_prec = 1.0 / (hs.lambda2[rows, others] * hs.tau2)
    idx = np.arange(p - 1)
    prec[:, idx, idx] += prior_prec
    prec = prec / d[:, None, None] + ctx.config.jitter * np.eye(p - 1)
    try:
        c = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("conditional precision of a W row is not positive definite") from exc
    if not np.all(np.isfinite(c)):
        raise NumericalFailure("non-finite conditional precision of a W row")
    rhs = cross[rows, others] / d[:, None]
    half = np.linalg.solve(c, rhs[..., None])
    mean = np.linalg.solve(np.swapaxes(c, 1, 2), half)[..., 0]
    noise = np.linalg.solve(np.swapaxes(c, 1, 2), rng.normal(size=(p, p - 1, 1)))[..., 0]
    W = np.zeros((p, p))
    W[rows, others] = mean + noise
    state.W = W
    return state


def update_horseshoe(state: ChainState, data: WhittleData, rng: np.random.Generator,
                     ctx: SweepContext = SweepContext()) -> ChainState:
    state.horseshoe = horseshoe_gibbs_update(state.horseshoe, state.W, state.d, rng)
    return state


# ---------------------------------------------------------------------------
# D


def noise_sufficient_stats(state: ChainState, data: WhittleData) -> tuple[np.ndarray, np.ndarray]:
    """Per-variable exponent and quadratic form for the variance ``d_k``.

    Combines the whitened residual coefficients with the ``W``-row prior, whose
    variance is also proportional to ``d_k``.
    """
    p, S, M = data.response.shape
    F = spectral_scale(_theta(state.spectral), data.G)
    Z = whiten(residuals(state.W, data), state.B(), state.U())
    quad = 0.5 * np.sum(Z**2 / F.transpose(1, 0, 2), axis=(1, 2))
    hs = state.horseshoe
    w2 = state.W**2 / (hs.lambda2 * hs.tau2)
    np.fill_diagonal(w2, 0.0)
    quad = quad + 0.5 * w2.sum(axis=1)
    n_obs = np.full(p, S * M + (p - 1), dtype=float)
    return n_obs, quad


def update_D(state: ChainState, data: WhittleData, rng: np.random.Generator,
             ctx: SweepContext = SweepContext()) -> ChainState:
    n_obs, quad = noise_sufficient_stats(state, data)
    state.noise = stick_breaking_update(state.noise, n_obs, quad, rng, ctx.prior)
    return state


# ---------------------------------------------------------------------------
# B, soft threshold and optional rotation


def _adapt(state: ChainState, key: str, idx, accept_prob: float, target: float, ctx: SweepContext):
    if ctx.adapt:
        arr = state.step_sizes[key]
        arr[idx] = arr[idx] * math.exp(ctx.rate(state.iteration) * (accept_prob - target))


def update_B_and_threshold(state: ChainState, data: WhittleData, rng: np.random.Generator,
                           ctx: SweepContext = SweepContext()) -> ChainState:
    """One-at-a-time random-walk MH on latent angles, then on log threshold."""
    S = data.S
    if S == 1:
        return state
    prior = ctx.prior
    target = ctx.config.target_rw
    R = residuals(state.W, data)
    F = spectral_scale(_theta(state.spectral), data.G)
    d, U = state.d, state.U()
    corr = state.corr

    def ll(raw, lam):
        return _loglik(R, d, polar_build(np.tril(soft_threshold(raw, lam), -1)), U, F)

    current = ll(corr.angles_raw, corr.threshold)
    for l in range(1, S):
        for j in range(l):
            u = float(angle_to_latent(corr.angles_raw[l, j]))
            u_new = u + state.step_sizes["angles"][l, j] * rng.normal()
            raw = corr.angles_raw.copy()
            raw[l, j] = latent_to_angle(u_new)
            proposed = ll(raw, corr.threshold)
            log_ratio = (proposed - current + float(angle_log_prior_latent(u_new, prior))
                         - float(angle_log_prior_latent(u, prior)))
            a = math.exp(min(0.0, log_ratio))
            if rng.uniform() < a:
                corr.angles_raw = raw
                current = proposed
            _tick(state, "angles", a)
            _adapt(state, "angles", (l, j), a, target, ctx)

    # threshold: uniform prior on [lo, hi], random walk on log scale with reflection
    lo = math.log(prior.lambda_lo) if prior.lambda_lo > 0 else -math.inf
    hi = math.log(prior.lambda_hi)
    v = math.log(corr.threshold)
    v_new = v + float(state.step_sizes["threshold"]) * rng.normal()
    while v_new > hi or v_new < lo:
        v_new = 2 * hi - v_new if v_new > hi else 2 * lo - v_new
    lam_new = math.exp(v_new)
    proposed = ll(corr.angles_raw, lam_new)
    a = math.exp(min(0.0, proposed - current + v_new - v))
    if rng.uniform() < a:
        corr.threshold = lam_new
    _tick(state, "threshold", a)
    _adapt(state, "threshold", (), a, target, ctx)
    return state


def update_rotation(state: ChainState, data: WhittleData, rng: np.random.Generator,
                    ctx: SweepContext = SweepContext()) -> ChainState:
    """Random-walk MH on Cayley parameters of ``U`` with standard normal prior."""
    if state.rotation is None or data.S == 1:
        return state
    R = residuals(state.W, data)
    F = spectral_scale(_theta(state.spectral), data.G)
    B = state.B()
    current = _loglik(R, state.d, B, cayley(state.rotation), F)
    for l in range(1, data.S):
        for j in range(l):
            prop = state.rotation.copy()
            prop[l, j] += state.step_sizes["rotation"][l, j] * rng.normal()
            proposed = _loglik(R, state.d, B, cayley(prop), F)
            log_ratio = proposed - current - 0.5 * (prop[l, j] ** 2 - state.rotation[l, j] ** 2)
            a = math.exp(min(0.0, log_ratio))
            if rng.uniform() < a:
                state.rotation = prop
                current = proposed
            _tick(state, "rotation", a)
            _adapt(state, "rotation", (l, j), a, ctx.config.target_rw, ctx)
    return state


# ---------------------------------------------------------------------------
# spectral factors


def _spectral_loglik_and_grad(params: SpectralParams, E: np.ndarray, G: np.ndarray,
                              with_grad: bool = True):
    """Spectral part of the log-likelihood, ``sum -log(F)/2 - E/(2F)``, and its gradient.

    ``E`` holds squared whitened residual coefficients divided by ``d``,
    shaped (S, p, M).
    """
    kappa = cp_kappa(params)
    psi = link(kappa)
    spsi = psi.sum(axis=-1, keepdims=True)
    theta = psi / (2.0 * spsi)
    F = spectral_scale(theta, G)
    if np.any(F <= 0.0):
        raise SingularCovariance("spectral density evaluated to a nonpositive value")
    value = float(-0.5 * np.sum(np.log(F)) - 0.5 * np.sum(E / F))
    if not with_grad:
        return value, None
    dF = 0.5 * (E / F**2 - 1.0 / F)
    g_theta = 2.0 * dF @ G
    g_kappa = link_grad(kappa) / (2.0 * spsi) * (g_theta - 2.0 * np.sum(g_theta * theta, axis=-1, keepdims=True))
    grad = SpectralParams(
        np.einsum("skj,kr,jr->sr", g_kappa, params.chi, params.eta),
        np.einsum("skj,sr,jr->kr", g_kappa, params.xi, params.eta),
        np.einsum("skj,sr,kr->jr", g_kappa, params.xi, params.chi),
    )
    return value, grad


def _scaled_squares(state: ChainState, data: WhittleData) -> np.ndarray:
    Z = whiten(residuals(state.W, data), state.B(), state.U())
    return (Z**2 / state.d[:, None, None]).transpose(1, 0, 2)


def mala_target(params: SpectralParams, state: ChainState, data: WhittleData,
                E: np.ndarray | None = None, with_grad: bool = True):
    """Log target of the CP factors (likelihood plus factor prior) and its gradient."""
    if E is None:
        E = _scaled_squares(state, data)
    value, grad = _spectral_loglik_and_grad(params, E, data.G, with_grad)
    value += factor_log_prior(params, state.shrink)
    if with_grad:
        pg = factor_log_prior_grad(params, state.shrink)
        grad = SpectralParams(grad.xi + pg.xi, grad.chi + pg.chi, grad.eta + pg.eta)
    return value, grad


class _PriorPreconditioner:
    """Mass matrix equal to the factor prior covariance."""

    def __init__(self, shrink: ShrinkageState):
        prec_xi, prec_chi = shrink.factor_precisions()
        self.var_xi = 1.0 / prec_xi
        self.var_chi = 1.0 / prec_chi
        self.P = shrink.P / shrink.sigma_kappa
        cov = np.linalg.inv(self.P)
        self.cov_eta = 0.5 * (cov + cov.T)
        self.chol_eta = np.linalg.cholesky(self.cov_eta)

    def apply(self, g: SpectralParams) -> SpectralParams:
        return SpectralParams(self.var_xi * g.xi, self.var_chi * g.chi, self.cov_eta @ g.eta)

    def sample(self, rng: np.random.Generator) -> SpectralParams:
        return SpectralParams(np.sqrt(self.var_xi) * rng.normal(size=self.var_xi.shape),
                              np.sqrt(self.var_chi) * rng.normal(size=self.var_chi.shape),
                              self.chol_eta @ rng.normal(size=self.cov_eta.shape[:1] + (self.var_xi.shape[1],)))

    def quad_inv(self, x: SpectralParams) -> float:
        return float(np.sum(x.xi**2 / self.var_xi) + np.sum(x.chi**2 / self.var_chi)
                     + np.einsum("jr,jk,kr->", x.eta, self.P, x.eta))


def _axpy(a: float, x: SpectralParams, y: SpectralParams) -> SpectralParams:
    return SpectralParams(a * x.xi + y.xi, a * x.chi + y.chi, a * x.eta + y.eta)


def update_spectral_mala(state: ChainState, data: WhittleData, rng: np.random.Generator,
                         ctx: SweepContext = SweepContext()) -> ChainState:
    """Preconditioned Metropolis-adjusted Langevin step on ``(xi, chi, eta)``."""
    h = float(state.step_sizes["mala"])
    E = _scaled_squares(state, data)
    pre = _PriorPreconditioner(state.shrink)
    x = state.spectral
    tx, gx = mala_target(x, state, data, E)
    mean_x = _axpy(0.5 * h, pre.apply(gx), x)
    y = _axpy(math.sqrt(h), pre.sample(rng), mean_x)
    try:
        ty, gy = mala_target(y, state, data, E)
    except SingularCovariance:
        ty = -math.inf
    if math.isfinite(ty):
        mean_y = _axpy(0.5 * h, pre.apply(gy), y)
        fwd = pre.quad_inv(_axpy(-1.0, mean_x, y))
        bwd = pre.quad_inv(_axpy(-1.0, mean_y, x))
        log_ratio = ty - tx - (bwd - fwd) / (2.0 * h)
        a = math.exp(min(0.0, log_ratio)) if math.isfinite(log_ratio) else 0.0
    else:
        a = 0.0
    if rng.uniform() < a:
        state.spectral = y
    _tick(state, "mala", a)
    _adapt(state, "mala", (), a, ctx.config.target_mala, ctx)
    return state


def mala_proposal_mean(state: ChainState, data: WhittleData) -> SpectralParams:
    """Drift-only part of the Langevin proposal at the current step size."""
    h = float(state.step_sizes["mala"])
    pre = _PriorPreconditioner(state.shrink)
    _, g = mala_target(state.spectral, state, data)
    return _axpy(0.5 * h, pre.apply(g), state.spectral)


def update_shrinkage(state: ChainState, data: WhittleData, rng: np.random.Generator,
                     ctx: SweepContext = SweepContext()) -> ChainState:
    state.shrink = cumulative_shrinkage_update(state.shrink, state.spectral, rng, ctx.prior)
    return state


Update = Callable[[ChainState, WhittleData, np.random.Generator, SweepContext], ChainState]

DEFAULT_SWEEP: tuple[Update, ...] = (
    update_W_rows,
    update_horseshoe,
    update_D,
    update_B_and_threshold,
    update_rotation,
    update_spectral_mala,
    update_shrinkage,
)


def sweep(state: ChainState, data: WhittleData, rng: np.random.Generator, ctx: SweepContext,
          updates: Sequence[Update] = DEFAULT_SWEEP) -> ChainState:
    for update in updates:
        state = update(state, data, rng, ctx)
    state.iteration += 1
    return state


# ---------------------------------------------------------------------------
# archive


def archive_length(iterations: int, burnin: int, thin: int) -> int:
    return max(0, -(-(iterations - burnin) // thin))


def _record(state: ChainState) -> dict:
    return {
        "iteration": state.iteration,
        "W": state.W.ravel().tolist(),
        "d": state.d.tolist(),
        "anglesRaw": state.corr.angles_raw[np.tril_indices(state.corr.S, -1)].tolist(),
        "threshold": float(state.corr.threshold),
        "xi": state.spectral.xi.tolist(),
        "chi": state.spectral.chi.tolist(),
        "eta": state.spectral.eta.tolist(),
    }


@dataclass
class DrawArchive:
    """Thinned post-burn-in draws of one or more chains."""

    draws: list
    meta: dict
    step_history: list = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.draws)

    @property
    def p(self) -> int:
        return int(self.meta["p"])

    def W_draws(self) -> np.ndarray:
        p = self.p
        return np.array([np.reshape(r["W"], (p, p)) for r in self.draws])

    def d_draws(self) -> np.ndarray:
        return np.array([r["d"] for r in self.draws])

    def posterior_mean_W(self) -> np.ndarray:
        return self.W_draws().mean(axis=0)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"meta": self.meta}, sort_keys=True) + "\n")
            for rec in self.draws:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "DrawArchive":
        with open(path, encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or "meta" not in lines[0]:
            from .errors import SchemaError
            raise SchemaError(f"{path}: missing meta header line")
        return cls(lines[1:], lines[0]["meta"])

    @classmethod
    def pooled(cls, archives: Sequence["DrawArchive"]) -> "DrawArchive":
        draws = [r for a in archives for r in a.draws]
        meta = dict(archives[0].meta)
        meta["chains"] = [a.meta.get("chain") for a in archives]
        return cls(draws, meta)


def config_hash(*configs) -> str:
    blob = json.dumps([asdict(c) for c in configs], sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def run_chain(data: MatrixSeries | WhittleData, config: SamplerConfig = SamplerConfig(),
              prior: PriorConfig = PriorConfig(), seed=0, chain: int = 0,
              updates: Sequence[Update] = DEFAULT_SWEEP) -> DrawArchive:
    """Run one chain and return its thinned post-burn-in draws.

    Args:
        data: preprocessed series (or prebuilt pseudo-likelihood data).
        seed: integer seed or ``numpy.random.SeedSequence``.

    Raises:
        StatDagError: any sub-update failure, annotated with the iteration.
    """
    if isinstance(data, MatrixSeries):
        data = WhittleData.from_series(data, J=config.J, degree=config.degree, drop_mean=config.drop_mean)
    rng = np.random.default_rng(seed)
    state = initial_state(data.p, data.S, config, prior, rng)
    ctx = SweepContext(prior, config, adapt=True)
    draws, history = [], []
    for it in range(config.iterations):
        ctx.adapt = it < config.burnin
        if it == config.burnin:
            state.accept = {}
        try:
            state = sweep(state, data, rng, ctx, updates)
        except StatDagError as exc:
            raise type(exc)(f"iteration {it}: {exc}") from exc
        history.append({k: np.array(v, copy=True) for k, v in state.step_sizes.items()})
        if it >= config.burnin and (it - config.burnin) % config.thin == 0:
            draws.append(_record(state))
    seed_repr = seed.entropy if isinstance(seed, np.random.SeedSequence) else seed
    meta = {
        "p": data.p, "S": data.S, "M": data.M,
        "seed": seed_repr if isinstance(seed_repr, int) else str(seed_repr),
        "spawn_key": list(seed.spawn_key) if isinstance(seed, np.random.SeedSequence) else [],
        "chain": chain,
        "config_hash": config_hash(config, prior),
        "acceptance": {k: v[0] / max(v[1], 1) for k, v in state.accept.items()},
        "step_sizes": {k: np.asarray(v).tolist() for k, v in state.step_sizes.items()},
    }
    return DrawArchive(draws, meta, history)


def _chain_worker(args):
    return run_chain(*args)


def run_chains(data: MatrixSeries, config: SamplerConfig = SamplerConfig(),
               prior: PriorConfig = PriorConfig(), seed: int = 0, chains: int = 1,
               jobs: int = 1) -> list[DrawArchive]:
    """Independent chains with seed streams spawned from one master seed."""
    streams = np.random.SeedSequence(seed).spawn(chains)
    tasks = [(data, config, prior, s, c) for c, s in enumerate(streams)]
    if jobs > 1 and chains > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_chain_worker, tasks))
    return [_chain_worker(t) for t in tasks]
