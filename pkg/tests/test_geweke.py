import numpy as np
import pytest

from statdag import sampler as s
from statdag.geweke import (
    STATISTICS,
    GewekeConfig,
    batch_means_variance,
    geweke_validate,
    parallel_chain_check,
    redraw_blocks,
    sample_prior_state,
    simulate_response,
)
from statdag.priors import stick_breaking_update
from statdag.sampler import WhittleData

SHORT = GewekeConfig(rounds=200, forward=200, burn=10)


def doubled_quadratic_D(state, data, rng, ctx):
    """Faulty noise update that doubles the residual quadratic form."""
    n, quad = s.noise_sufficient_stats(state, data)
    state.noise = stick_breaking_update(state.noise, n, 2.0 * quad, rng, ctx.prior)
    return state


FAULTY_SWEEP = tuple(doubled_quadratic_D if u is s.update_D else u for u in s.DEFAULT_SWEEP)


def test_statistic_count():
    assert len(STATISTICS) >= 12


def test_empty_statistic_list():
    res = geweke_validate(SHORT, statistics=[])
    assert res.z == {} and res.max_abs_z == 0.0
    assert parallel_chain_check(SHORT, statistics=[]).z == {}


def test_short_run_reports_every_statistic():
    res = geweke_validate(SHORT)
    assert set(res.z) == set(STATISTICS)
    assert all(np.isfinite(v) for v in res.z.values())
    assert set(res.forward_mean) == set(res.successive_mean) == set(STATISTICS)


def test_batch_means_on_independent_draws(rng):
    x = rng.normal(size=100_000)
    assert batch_means_variance(x, 20) == pytest.approx(1.0 / 100_000, rel=0.7)


def test_batch_means_inflates_for_correlated_draws(rng):
    e = rng.normal(size=100_000)
    x = np.empty_like(e)
    x[0] = e[0]
    for t in range(1, len(e)):
        x[t] = 0.9 * x[t - 1] + e[t]
    iid = x.var() / len(x)
    # integrated autocorrelation time of an AR(1) with coefficient 0.9 is 19
    assert 8 < batch_means_variance(x, 20) / iid < 40


def test_redraw_blocks_keeps_other_blocks(rng):
    cfg = GewekeConfig()
    base = sample_prior_state(cfg.p, cfg.S, cfg.J, cfg.R, cfg.prior, rng)
    new = redraw_blocks(base, ("corr",), cfg.prior, rng)
    assert np.array_equal(new.W, base.W)
    assert np.array_equal(new.d, base.d)
    assert not np.array_equal(new.corr.angles_raw, base.corr.angles_raw)


def test_simulate_response_mean(rng):
    cfg = GewekeConfig()
    state = sample_prior_state(cfg.p, cfg.S, cfg.J, cfg.R, cfg.prior, rng)
    design = rng.normal(size=(cfg.p, cfg.S, cfg.T))
    data = WhittleData.from_coefficients(design, design, J=cfg.J)
    draws = np.mean([simulate_response(state, data, rng) for _ in range(4000)], axis=0)
    expected = np.tensordot(state.W, data.design, axes=(1, 0))
    scale = np.sqrt(state.d.max() * 4.0 / 4000)
    assert np.all(np.abs(draws - expected) < 6 * scale)


# Each block is checked with the other parameters frozen at one prior draw.
# The weight block travels with the noise block because its prior scales with d.
BLOCK_CASES = {
    "noise": (("noise", "W"), (s.update_W_rows, s.update_D)),
    "weights": (("W",), (s.update_W_rows,)),
    "horseshoe": (("horseshoe", "W"), (s.update_W_rows, s.update_horseshoe)),
    "task-correlation": (("corr",), (s.update_B_and_threshold,)),
    "spectral": (("shrink", "spectral"), (s.update_spectral_mala, s.update_shrinkage)),
}


@pytest.mark.parametrize("name", list(BLOCK_CASES))
def test_block_invariance(name):
    blocks, updates = BLOCK_CASES[name]
    res = parallel_chain_check(GewekeConfig(seed=11), updates=updates, blocks=blocks, chains=1500, steps=4)
    assert res.max_abs_z < 4, res.z


def test_parallel_check_catches_fault():
    res = parallel_chain_check(GewekeConfig(seed=11), updates=(s.update_W_rows, doubled_quadratic_D),
                               blocks=("noise", "W"), chains=1500, steps=4)
    assert res.max_abs_z > 6


@pytest.mark.slow
def test_full_sweep_parallel_invariance():
    res = parallel_chain_check(GewekeConfig(seed=2), chains=3000, steps=5)
    assert res.max_abs_z < 4, res.z


@pytest.mark.slow
def test_full_sweep_successive_conditional():
    res = geweke_validate(GewekeConfig(seed=0))
    assert res.max_abs_z < 4, res.z


@pytest.mark.slow
def test_fault_injected_sweep_detected():
    res = geweke_validate(GewekeConfig(rounds=5000, forward=5000, seed=0), updates=FAULTY_SWEEP)
    assert res.max_abs_z > 6
