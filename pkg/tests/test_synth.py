import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from statdag.projection import has_cycle
from statdag.series import residual_series
from statdag.synth import (
    KERNELS,
    GroundTruth,
    SimConfig,
    arma_innovation_variance,
    arma_series,
    cosine_kernel,
    forward_simulate,
    generate,
    random_dag,
    replicate_seeds,
    sample_noise_scales,
    sample_task_correlation,
    simulate_latent,
    small_world_blocks,
    weights_from_edges,
    write_truth,
)


def test_random_dag_acyclic_on_many_draws():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        p = int(rng.integers(2, 9))
        W = random_dag(p, min(2.0, p - 1.5), rng)
        assert not has_cycle(W)
        assert np.all(np.diag(W) == 0)


def test_random_dag_weight_magnitudes():
    rng = np.random.default_rng(3)
    W = np.concatenate([random_dag(20, 4.0, rng).ravel() for _ in range(200)])
    nz = np.abs(W[W != 0])
    assert nz.size > 1000
    assert nz.min() >= 0.5 and nz.max() <= 2.0
    # both signs appear in roughly equal proportion
    assert abs(np.mean(W[W != 0] > 0) - 0.5) < 0.05


def test_random_dag_mean_edge_count():
    rng = np.random.default_rng(5)
    counts = [np.count_nonzero(random_dag(40, 2.0, rng)) for _ in range(1000)]
    # p(p-1)/2 pairs times 2/(p-1) inclusion probability gives p
    assert abs(np.mean(counts) - 40.0) < 3.0


def test_random_dag_rejects_dense_request():
    with pytest.raises(ValueError):
        random_dag(4, 4.0, np.random.default_rng(0))


def test_noise_scales_mean_and_positivity():
    d = sample_noise_scales(100_000, np.random.default_rng(8))
    assert np.all(d > 0)
    assert abs(d.mean() - 7.0) < 0.05
    # variance-2 reading of the scale law
    assert abs(d.var() - 2.0) < 0.05


def test_noise_scales_reproducible():
    a = sample_noise_scales(10, np.random.default_rng(4))
    b = sample_noise_scales(10, np.random.default_rng(4))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("S", [1, 2, 5, 15, 16])
def test_task_correlation_is_correlation(S):
    rng = np.random.default_rng(S)
    Q, K = sample_task_correlation(S, rng, return_precision=True)
    assert np.array_equal(np.diag(Q), np.ones(S))
    assert np.allclose(Q, Q.T)
    np.linalg.cholesky(Q)
    np.linalg.cholesky(K)


def test_precision_zero_off_blocks():
    rng = np.random.default_rng(2)
    Q, K = sample_task_correlation(15, rng, return_precision=True)
    blocks = np.array_split(np.arange(15), 3)
    label = np.empty(15, dtype=int)
    for b, idx in enumerate(blocks):
        label[idx] = b
    off_block = label[:, None] != label[None, :]
    assert np.all(K[off_block] == 0)
    # and within-block support matches the small-world graph only
    assert np.count_nonzero(K[~off_block & ~np.eye(15, dtype=bool)]) > 0


def test_small_world_blocks_symmetric_without_loops():
    adj = small_world_blocks(15, np.random.default_rng(0))
    assert np.array_equal(adj, adj.T)
    assert not adj.diagonal().any()


def test_arma_innovation_variance_value():
    assert arma_innovation_variance(0.9, 0.9) == pytest.approx(0.19 / 3.43, rel=1e-12)
    assert arma_innovation_variance(0.9, 0.9) == pytest.approx(0.05539, abs=1e-5)


def test_arma_long_run_variance():
    rng = np.random.default_rng(21)
    variances = [np.mean(arma_series(0.9, 0.9, 10_000, rng) ** 2) for _ in range(10)]
    assert abs(np.mean(variances) - 1.0) < 0.05


def test_cosine_kernel_at_zero():
    for M in (1, 3, 48):
        assert cosine_kernel(0.0, M) == pytest.approx(sum(1.0 / h**2 for h in range(1, M + 1)), rel=1e-14)


def test_cosine_kernel_matches_loop():
    deltas = np.linspace(0, 1, 7)
    loop = [sum(np.cos(h * np.pi * x) / h**2 for h in range(1, 6)) for x in deltas]
    assert np.allclose(cosine_kernel(deltas, 5), loop, atol=1e-14)


@pytest.mark.parametrize("kernel", KERNELS)
def test_latent_components_have_unit_variance(kernel):
    rng = np.random.default_rng(7)
    Z, params = simulate_latent(kernel, S=20, p=1, T=500, rng=rng)
    assert Z.shape == (1, 20, 500)
    assert len(params) == 20
    # pooled over 2 * 10^4 independent short components, so the Monte-Carlo error is about 0.01
    Z2, _ = simulate_latent(kernel, S=100, p=200, T=4, rng=rng)
    assert abs(np.mean(Z2**2) - 1.0) < 0.05


def test_exponential_latent_is_gp_with_stated_kernel():
    # lag-1 correlation averages exp(-1/range) over range ~ Un(0, 10)
    rng = np.random.default_rng(9)
    Z, params = simulate_latent("exponential", S=1, p=4000, T=2, rng=rng)
    ranges = np.array([q["range"] for q in params])
    assert np.all((ranges > 0) & (ranges < 10))
    expected = np.mean(np.exp(-1.0 / ranges))
    assert np.mean(Z[:, 0, 0] * Z[:, 0, 1]) == pytest.approx(expected, abs=0.05)


def test_arma_coefficients_strong():
    _, params = simulate_latent("arma", S=3, p=5, T=10, rng=np.random.default_rng(0))
    for q in params:
        assert 0.9 <= abs(q["phi"]) < 1 and 0.9 <= abs(q["theta"]) < 1


def test_forward_simulate_identity_chain():
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(3, 1, 20))
    truth = GroundTruth(np.zeros((3, 3)), np.ones(3), np.eye(1), Z)
    assert np.allclose(forward_simulate(truth).values, Z, atol=1e-14)


@given(st.integers(0, 2**31 - 1))
def test_forward_simulate_residual_identity(seed):
    truth, Y = generate(SimConfig(p=5, S=2, T=12, seed=seed))
    R = residual_series(Y, truth.W)
    expected = np.sqrt(truth.d)[:, None, None] * np.einsum("ab,kbt->kat", truth.B, truth.latents)
    assert np.allclose(R, expected, atol=1e-10 * max(1.0, np.abs(expected).max()))


def test_forward_covariance_across_tasks():
    rng = np.random.default_rng(13)
    p, S, T = 4, 3, 10_000
    W = random_dag(p, 2.0, rng)
    d = sample_noise_scales(p, rng)
    Q = sample_task_correlation(S, rng)
    truth = GroundTruth(W, d, Q, rng.normal(size=(p, S, T)))
    R = residual_series(forward_simulate(truth), W)
    for k in range(p):
        cov = R[k] @ R[k].T / T
        target = d[k] * Q
        assert np.linalg.norm(cov - target) / np.linalg.norm(target) < 0.15


def test_generate_reproducible_and_seed_sensitive():
    a = generate(SimConfig(seed=4))
    b = generate(SimConfig(seed=4))
    c = generate(SimConfig(seed=5))
    assert np.array_equal(a[1].values, b[1].values)
    assert not np.array_equal(a[1].values, c[1].values)
    assert a[1].values.shape == (10, 3, 48)


def test_sim_config_rejects_unknown_kernel():
    with pytest.raises(ValueError, match="kernel"):
        SimConfig(kernel="matern")


def test_replicate_seeds_distinct_and_stable():
    seeds = replicate_seeds(0, 20)
    assert len(set(seeds)) == 20
    assert seeds == replicate_seeds(0, 20)
    assert seeds[:5] == replicate_seeds(0, 5)


def test_truth_json_round_trip(tmp_path):
    cfg = SimConfig(p=6, S=2, T=16, seed=3)
    truth, _ = generate(cfg)
    write_truth(truth, tmp_path / "truth.json", cfg)
    doc = json.loads((tmp_path / "truth.json").read_text())
    assert np.array_equal(weights_from_edges(doc["p"], doc["edges"]), truth.W)
    assert np.allclose(doc["d"], truth.d)
    assert np.allclose(doc["Q"], truth.Q)
    assert doc["kernel"] == "exponential" and doc["seed"] == 3
    assert doc["config"]["T"] == 16
