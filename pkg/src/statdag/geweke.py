"""Joint-distribution (Geweke) check of the sampler.

Forward draws sample parameters from the prior and then data from the
pseudo-likelihood.  Successive-conditional draws alternate one sampler sweep
with re-simulation of the data.  Both produce draws from the same joint
distribution when every update is correct, so the means of any integrable
statistic must agree.

The pseudo-likelihood regresses each response on a design that equals the
response for real data.  Simulating from such a model would need the omitted
``det(I - W)`` factor, so here the design is held fixed and only the
responses are re-simulated; every conditional the sampler uses is unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .priors import (
    PriorConfig,
    sample_factors_prior,
    sample_horseshoe_prior,
    sample_noise_prior,
    sample_shrinkage_prior,
    sample_task_prior,
)
from .sampler import (
    DEFAULT_SWEEP,
    ChainState,
    SamplerConfig,
    SweepContext,
    Update,
    WhittleData,
    _theta,
    spectral_scale,
    sweep,
)


@dataclass(frozen=True)
class GewekeConfig:
    p: int = 3
    S: int = 2
    T: int = 16
    J: int = 6
    R: int = 2
    # the horseshoe mixes slowly under the sweep; short runs understate the batch-means variance
    rounds: int = 20000
    forward: int = 20000
    burn: int = 100
    batches: int = 20
    design_scale: float = 0.05
    seed: int = 0
    prior: PriorConfig = field(default_factory=lambda: PriorConfig(truncation=5, mu_d_prior_sd=2.0))
    angle_step: float = 1.0
    threshold_step: float = 1.0
    mala_step: float = 0.05


BLOCKS = ("noise", "horseshoe", "W", "corr", "shrink", "spectral")


def sample_prior_state(p: int, S: int, J: int, R: int, prior: PriorConfig,
                       rng: np.random.Generator, steps: dict | None = None) -> ChainState:
    """Draw every parameter block from its prior."""
    noise = sample_noise_prior(p, prior, rng)
    hs = sample_horseshoe_prior(p, rng)
    W = rng.normal(size=(p, p)) * np.sqrt(hs.prior_variance(noise.d))
    corr = sample_task_prior(S, prior, rng)
    shrink = sample_shrinkage_prior(S, p, J, R, prior, rng)
    spectral = sample_factors_prior(shrink, rng)
    return ChainState(W, noise, corr, spectral, hs, shrink, dict(steps or {}))


def redraw_blocks(state: ChainState, blocks, prior: PriorConfig, rng: np.random.Generator) -> ChainState:
    """Copy of ``state`` with the named blocks redrawn from their conditional priors."""
    state = state.copy()
    p, S = state.W.shape[0], state.corr.S
    J, R = state.spectral.J, state.spectral.R
    if "noise" in blocks:
        state.noise = sample_noise_prior(p, prior, rng)
    if "horseshoe" in blocks:
        state.horseshoe = sample_horseshoe_prior(p, rng)
    if "W" in blocks:
        state.W = rng.normal(size=(p, p)) * np.sqrt(state.horseshoe.prior_variance(state.d))
    if "corr" in blocks:
        state.corr = sample_task_prior(S, prior, rng)
    if "shrink" in blocks:
        state.shrink = sample_shrinkage_prior(S, p, J, R, prior, rng)
    if "spectral" in blocks:
        state.spectral = sample_factors_prior(state.shrink, rng)
    return state


def simulate_response(state: ChainState, data: WhittleData, rng: np.random.Generator) -> np.ndarray:
    """Draw response coefficients from the pseudo-likelihood given the design."""
    F = spectral_scale(_theta(state.spectral), data.G).transpose(1, 0, 2)  # (p, S, M)
    z = rng.normal(size=F.shape) * np.sqrt(state.d[:, None, None] * F)
    L = state.B()
    U = state.U()
    if U is not None:
        L = L @ U
    noise = np.einsum("ab,kbm->kam", L, z)
    return np.tensordot(state.W, data.design, axes=(1, 0)) + noise


def _offdiag(A: np.ndarray) -> np.ndarray:
    return A[~np.eye(A.shape[0], dtype=bool)]


def _q_offdiag(s: ChainState, data: WhittleData) -> float:
    Q = s.corr.Q()
    return float(Q[1, 0]) if Q.shape[0] > 1 else 0.0


STATISTICS: dict[str, Callable[[ChainState, WhittleData], float]] = {
    "w_shrunk": lambda s, x: float(np.mean(_offdiag(s.W**2 / (1.0 + s.W**2)))),
    "w01_tanh": lambda s, x: float(np.tanh(s.W[0, 1])),
    "log_tau2": lambda s, x: math.log(s.horseshoe.tau2),
    "mean_log_lambda2": lambda s, x: float(np.mean(np.log(_offdiag(s.horseshoe.lambda2)))),
    "mean_log_d": lambda s, x: float(np.mean(np.log(s.d))),
    "var_log_d": lambda s, x: float(np.var(np.log(s.d))),
    "occupied": lambda s, x: float(len(np.unique(s.noise.assignment))),
    "log_mu_d": lambda s, x: math.log(s.noise.mu_d),
    "log_concentration": lambda s, x: math.log(s.noise.v),
    "q_offdiag": _q_offdiag,
    "threshold": lambda s, x: float(s.corr.threshold),
    "theta_first": lambda s, x: float(np.mean(_theta(s.spectral)[..., 0])),
    "theta_last": lambda s, x: float(np.mean(_theta(s.spectral)[..., -1])),
    "log_sigma_kappa": lambda s, x: math.log(s.shrink.sigma_kappa),
    "log_tau_last": lambda s, x: float(np.log(s.shrink.tau_xi[-1])),
    "xi_shrunk": lambda s, x: float(np.mean(s.spectral.xi**2 / (1.0 + s.spectral.xi**2))),
    "data_shrunk": lambda s, x: float(np.mean(x.response**2 / (1.0 + x.response**2))),
}


def batch_means_variance(x: np.ndarray, batches: int) -> float:
    """Variance of the sample mean of an autocorrelated sequence."""
    n = len(x) // batches * batches
    means = x[:n].reshape(batches, -1).mean(axis=1)
    return float(means.var(ddof=1) / batches)


@dataclass
class GewekeResult:
    z: dict
    forward_mean: dict
    successive_mean: dict
    acceptance: dict

    @property
    def max_abs_z(self) -> float:
        return max((abs(v) for v in self.z.values()), default=0.0)


def geweke_validate(config: GewekeConfig = GewekeConfig(), statistics: Sequence[str] | None = None,
                    updates: Sequence[Update] = DEFAULT_SWEEP, blocks=None) -> GewekeResult:
    """Compare forward and successive-conditional means of the chosen statistics.

    Args:
        statistics: names from :data:`STATISTICS` (default: all of them).
        updates: the sweep to validate.
        blocks: if given, only these parameter blocks are random; the rest
            stay at one prior draw, and ``updates`` must cover exactly these
            blocks.

    Returns:
        z-scores keyed by statistic name (empty when ``statistics`` is empty).
    """
    names = list(STATISTICS) if statistics is None else list(statistics)
    if not names:
        return GewekeResult({}, {}, {}, {})
    funcs = [STATISTICS[n] for n in names]
    rng = np.random.default_rng(config.seed)
    p, S, T = config.p, config.S, config.T
    design = config.design_scale * rng.normal(size=(p, S, T))
    base = WhittleData.from_coefficients(design, design, J=config.J)
    steps = {
        "angles": np.full((S, S), config.angle_step),
        "threshold": np.array(config.threshold_step),
        "mala": np.array(config.mala_step),
    }
    ctx = SweepContext(config.prior, SamplerConfig(J=config.J, R=config.R), adapt=False)
    fixed = sample_prior_state(p, S, config.J, config.R, config.prior, rng, steps)

    def forward_draw():
        if blocks is None:
            state = sample_prior_state(p, S, config.J, config.R, config.prior, rng, steps)
        else:
            state = redraw_blocks(fixed, blocks, config.prior, rng)
        return state, base.with_response(simulate_response(state, base, rng))

    fwd = np.empty((config.forward, len(names)))
    for n in range(config.forward):
        state, data = forward_draw()
        fwd[n] = [f(state, data) for f in funcs]

    state, data = forward_draw()
    succ = np.empty((config.rounds, len(names)))
    for n in range(config.burn + config.rounds):
        state = sweep(state, data, rng, ctx, updates)
        data = base.with_response(simulate_response(state, base, rng))
        if n >= config.burn:
            succ[n - config.burn] = [f(state, data) for f in funcs]

    z, fm, sm = {}, {}, {}
    for k, name in enumerate(names):
        var = fwd[:, k].var(ddof=1) / config.forward + batch_means_variance(succ[:, k], config.batches)
        fm[name] = float(fwd[:, k].mean())
        sm[name] = float(succ[:, k].mean())
        z[name] = (fm[name] - sm[name]) / math.sqrt(var) if var > 0 else 0.0
    acceptance = {k: v[0] / max(v[1], 1) for k, v in state.accept.items()}
    return GewekeResult(z, fm, sm, acceptance)


def parallel_chain_check(config: GewekeConfig = GewekeConfig(), statistics: Sequence[str] | None = None,
                         updates: Sequence[Update] = DEFAULT_SWEEP, blocks=None, chains: int = 2000,
                         steps: int = 5) -> GewekeResult:
    """Invariance check from many short independent chains.

    Each chain starts at an exact joint draw and runs ``steps`` rounds of
    sweep plus data re-simulation, so its end point is again an exact joint
    draw when the updates are correct.  End points are compared with fresh
    forward draws using independent-sample standard errors, which avoids the
    autocorrelation estimate that long single chains need.
    """
    names = list(STATISTICS) if statistics is None else list(statistics)
    if not names:
        return GewekeResult({}, {}, {}, {})
    funcs = [STATISTICS[n] for n in names]
    rng = np.random.default_rng(config.seed)
    p, S, T = config.p, config.S, config.T
    design = config.design_scale * rng.normal(size=(p, S, T))
    base = WhittleData.from_coefficients(design, design, J=config.J)
    step_sizes = {
        "angles": np.full((S, S), config.angle_step),
        "threshold": np.array(config.threshold_step),
        "mala": np.array(config.mala_step),
    }
    ctx = SweepContext(config.prior, SamplerConfig(J=config.J, R=config.R), adapt=False)
    fixed = sample_prior_state(p, S, config.J, config.R, config.prior, rng, step_sizes)

    def forward_draw():
        if blocks is None:
            state = sample_prior_state(p, S, config.J, config.R, config.prior, rng, step_sizes)
        else:
            state = redraw_blocks(fixed, blocks, config.prior, rng)
        return state, base.with_response(simulate_response(state, base, rng))

    fwd = np.empty((chains, len(names)))
    end = np.empty((chains, len(names)))
    accept: dict = {}
    for c in range(chains):
        state, data = forward_draw()
        fwd[c] = [f(state, data) for f in funcs]
        state, data = forward_draw()
        for _ in range(steps):
            state = sweep(state, data, rng, ctx, updates)
            data = base.with_response(simulate_response(state, base, rng))
        end[c] = [f(state, data) for f in funcs]
        for k, (a, n) in state.accept.items():
            tot = accept.setdefault(k, [0, 0])
            tot[0] += a
            tot[1] += n
    z, fm, sm = {}, {}, {}
    for k, name in enumerate(names):
        var = (fwd[:, k].var(ddof=1) + end[:, k].var(ddof=1)) / chains
        fm[name] = float(fwd[:, k].mean())
        sm[name] = float(end[:, k].mean())
        z[name] = (fm[name] - sm[name]) / math.sqrt(var) if var > 0 else 0.0
    return GewekeResult(z, fm, sm, {k: a / max(n, 1) for k, (a, n) in accept.items()})
