"""End-to-end fits used by the CLI and the benchmark: preprocess, sample, project, threshold."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .config import RunConfig
from .metrics import MetricRow, evaluate
from .projection import AdjacencyGraph, anotears, run_algorithm1
from .sampler import DrawArchive, run_chains
from .series import MatrixSeries, component_scales, preprocess
from .synth import GroundTruth, SimConfig, generate, replicate_seeds


@dataclass
class FitResult:
    """Graph plus weight and noise estimates on the scale of the raw input."""

    method: str
    graph: AdjacencyGraph
    W: np.ndarray
    d: np.ndarray
    lam: float
    archives: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def _to_raw(W: np.ndarray, d: np.ndarray, scales: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return scales[:, None] * W / scales[None, :], d * scales**2


def residual_variance(Y: MatrixSeries, W: np.ndarray) -> np.ndarray:
    A = np.eye(Y.p) - W
    R = np.tensordot(A, Y.values, axes=(1, 0))
    return R.reshape(Y.p, -1).var(axis=1)


def fit_bayes(raw: MatrixSeries, cfg: RunConfig, seed: int | None = None, jobs: int = 1) -> FitResult:
    """Sampler chains followed by per-draw projection and vote thresholding.

    The weight estimate is the mean of the projected draws; the noise estimate
    is the posterior mean of the noise variances.
    """
    seed = cfg.data.seed if seed is None else seed
    t0 = time.perf_counter()
    Y = preprocess(raw, cfg.data.scaling)
    scales = component_scales(raw, cfg.data.scaling)
    t1 = time.perf_counter()
    archives = run_chains(Y, cfg.sampler, cfg.prior, seed=seed, chains=cfg.chains, jobs=jobs)
    pooled = DrawArchive.pooled(archives)
    t2 = time.perf_counter()
    result = run_algorithm1(pooled, Y, cfg.algorithm1(jobs))
    t3 = time.perf_counter()
    W, d = _to_raw(result.mean_projected, pooled.d_draws().mean(axis=0), scales)
    timings = {"preprocess": t1 - t0, "sampler": t2 - t1, "projection": t3 - t2, "total": t3 - t0}
    return FitResult("dag-out", result.graph, W, d, result.lam, archives, timings)


def fit_anotears(raw: MatrixSeries, cfg: RunConfig, jobs: int = 1) -> FitResult:
    """Single penalized acyclic fit of the data on itself."""
    t0 = time.perf_counter()
    Y = preprocess(raw, cfg.data.scaling)
    scales = component_scales(raw, cfg.data.scaling)
    result = anotears(Y, cfg.algorithm1(jobs))
    beta = result.projected[0]
    t1 = time.perf_counter()
    W, d = _to_raw(beta, residual_variance(Y, beta), scales)
    return FitResult("a-notears", result.graph, W, d, result.lam, [], {"total": t1 - t0})


def fit(raw: MatrixSeries, cfg: RunConfig, seed: int | None = None, jobs: int = 1) -> FitResult:
    if cfg.mode == "anotears":
        return fit_anotears(raw, cfg, jobs)
    return fit_bayes(raw, cfg, seed, jobs)


def sim_config(cfg: RunConfig, seed: int | None = None) -> SimConfig:
    d = cfg.data
    return SimConfig(d.p, d.S, d.T, d.expected_neighbors, d.kernel, d.seed if seed is None else seed)


def score(fit_result: FitResult, truth: GroundTruth, replicate: str) -> MetricRow:
    return evaluate(replicate, fit_result.method, fit_result.graph, truth.adjacency, fit_result.W, truth.W,
                    fit_result.d, truth.d, fit_result.timings.get("total", 0.0))


def run_replicate(cfg: RunConfig, seed: int, methods: Sequence[str] = ("bayes", "anotears")) -> list[MetricRow]:
    """Simulate one data set from ``seed`` and score each method on it."""
    truth, raw = generate(sim_config(cfg, seed))
    rows = []
    for method in methods:
        res = fit(raw, replace(cfg, mode=method), seed=seed)
        rows.append(score(res, truth, str(seed)))
    return rows


def _replicate_worker(args):
    return run_replicate(*args)


def run_benchmark(cfg: RunConfig, replicates: int | None = None, jobs: int = 1,
                  methods: Sequence[str] = ("bayes", "anotears")) -> list[MetricRow]:
    """Score ``methods`` on replicates with seeds spawned from ``cfg.data.seed``."""
    n = cfg.data.replicates if replicates is None else replicates
    tasks = [(cfg, s, tuple(methods)) for s in replicate_seeds(cfg.data.seed, n)]
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_replicate_worker, tasks))
    else:
        out = [_replicate_worker(t) for t in tasks]
    return [row for rows in out for row in rows]
