"""Synthetic benchmark data: random DAGs, noise scales, task correlation, latent series."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import networkx as nx
import numpy as np

from .errors import SingularSystem
from .series import MatrixSeries

KERNELS = ("exponential", "cosine", "arma")


@dataclass(frozen=True)
class SimConfig:
    p: int = 10
    S: int = 3
    T: int = 48
    expected_neighbors: float = 2.0
    kernel: str = "exponential"
    seed: int = 0

    def __post_init__(self):
        if min(self.p, self.S, self.T) < 1:
            raise ValueError("dimensions must be positive")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")


@dataclass
class GroundTruth:
    """Generating parameters; ``W[child, parent]`` holds the edge weight."""

    W: np.ndarray
    d: np.ndarray
    Q: np.ndarray
    latents: np.ndarray
    kernel: str = "exponential"
    seed: int = 0
    kernel_params: list | None = None

    @property
    def B(self) -> np.ndarray:
        return np.linalg.cholesky(self.Q)

    @property
    def adjacency(self) -> np.ndarray:
        return (self.W != 0).astype(int)

    def to_json(self) -> dict:
        p = self.W.shape[0]
        edges = [[int(j), int(i), float(self.W[i, j])] for i in range(p) for j in range(p) if self.W[i, j] != 0]
        return {
            "p": p,
            "S": int(self.Q.shape[0]),
            "T": int(self.latents.shape[-1]),
            "edges": edges,
            "d": self.d.tolist(),
            "Q": self.Q.tolist(),
            "kernel": self.kernel,
            "kernel_params": self.kernel_params,
            "seed": self.seed,
        }


def weights_from_edges(p: int, edges) -> np.ndarray:
    """``W`` from ``[parent, child, weight]`` triples (weight optional, default 1)."""
    W = np.zeros((p, p))
    for e in edges:
        W[int(e[1]), int(e[0])] = float(e[2]) if len(e) > 2 else 1.0
    return W


def random_dag(p: int, expected_neighbors: float, rng: np.random.Generator) -> np.ndarray:
    """Random acyclic ``W`` (rows are children) with two-sided uniform edge weights.

    A random topological order is drawn and each order-compatible pair is
    joined independently with probability ``expected_neighbors / (p - 1)``.
    """
    if p < 2 or not 0 <= expected_neighbors < p:
        raise ValueError("need p >= 2 and 0 <= expected_neighbors < p")
    prob = expected_neighbors / (p - 1)
    order = rng.permutation(p)
    upper = np.triu(rng.uniform(size=(p, p)) < prob, 1)
    magnitude = rng.uniform(0.5, 2.0, size=(p, p))
    sign = np.where(rng.uniform(size=(p, p)) < 0.5, -1.0, 1.0)
    W = np.zeros((p, p))
    a, b = np.nonzero(upper)
    # order[a] precedes order[b]
    W[order[b], order[a]] = (sign * magnitude)[a, b]
    return W


def sample_noise_scales(p: int, rng: np.random.Generator) -> np.ndarray:
    """Absolute values of normal draws with mean 7 and variance 2."""
    return np.abs(rng.normal(7.0, math.sqrt(2.0), size=p))


def small_world_blocks(S: int, rng: np.random.Generator, n_blocks: int = 3,
                       neighbors: int = 2, rewire: float = 0.2) -> np.ndarray:
    """Boolean adjacency of disjoint Watts-Strogatz graphs covering ``S`` nodes."""
    adj = np.zeros((S, S), dtype=bool)
    for block in np.array_split(np.arange(S), min(n_blocks, S)):
        n = len(block)
        if n < 2:
            continue
        if n <= neighbors + 1:
            g = nx.complete_graph(n)
        else:
            g = nx.watts_strogatz_graph(n, neighbors, rewire, seed=int(rng.integers(2**31)))
        for u, v in g.edges():
            adj[block[u], block[v]] = adj[block[v], block[u]] = True
    return adj


def sample_task_correlation(S: int, rng: np.random.Generator, return_precision: bool = False):
    """Correlation matrix whose inverse is supported on a block small-world graph.

    The precision gets random off-diagonal entries on the graph edges and a
    diagonal exceeding each row's absolute sum, which makes it positive definite.
    """
    if S == 1:
        Q = np.ones((1, 1))
        return (Q, Q.copy()) if return_precision else Q
    adj = small_world_blocks(S, rng)
    off = np.triu(np.where(adj, rng.uniform(0.3, 1.0, size=(S, S)) * rng.choice([-1.0, 1.0], size=(S, S)), 0.0), 1)
    K = off + off.T
    K += np.diag(np.abs(K).sum(axis=1) + rng.uniform(0.1, 0.5, size=S))
    cov = np.linalg.inv(K)
    scale = 1.0 / np.sqrt(np.diag(cov))
    Q = cov * np.outer(scale, scale)
    np.fill_diagonal(Q, 1.0)
    Q = 0.5 * (Q + Q.T)
    return (Q, K) if return_precision else Q


def arma_innovation_variance(phi: float, theta: float) -> float:
    """Innovation variance giving an ARMA(1,1) process unit marginal variance."""
    return (1.0 - phi**2) / (1.0 + 2.0 * theta * phi + theta**2)


def cosine_kernel(delta, M: int) -> np.ndarray:
    h = np.arange(1, M + 1)
    return np.cos(np.pi * np.multiply.outer(np.asarray(delta, dtype=float), h)) @ (1.0 / h**2)


def _strong_coefficient(rng: np.random.Generator) -> float:
    return float(rng.uniform(0.9, 1.0) * rng.choice([-1.0, 1.0]))


def _latent_exponential(T: int, rng: np.random.Generator):
    length = rng.uniform(0.0, 10.0)
    t = np.arange(T, dtype=float)
    K = np.exp(-np.abs(t[:, None] - t[None, :]) / max(length, 1e-12))
    L = np.linalg.cholesky(K + 1e-10 * np.eye(T))
    return L @ rng.normal(size=T), {"range": float(length)}


def _latent_cosine(T: int, rng: np.random.Generator):
    # exact draw through the finite cosine expansion: a_h * (A cos + B sin)
    M = int(rng.integers(1, T + 1))
    h = np.arange(1, M + 1)
    a = 1.0 / h**2
    grid = np.pi * np.outer(np.arange(T) / T, h)
    coef = np.sqrt(a / a.sum())
    z = np.cos(grid) @ (coef * rng.normal(size=M)) + np.sin(grid) @ (coef * rng.normal(size=M))
    return z, {"M": M}


def arma_series(phi: float, theta: float, T: int, rng: np.random.Generator, burnin: int = 200) -> np.ndarray:
    """Unit-variance ARMA(1,1) path started from its stationary law, after ``burnin`` steps."""
    var_e = arma_innovation_variance(phi, theta)
    sd = math.sqrt(var_e)
    eps = rng.normal(0.0, sd, size=T + burnin)
    z = np.empty(T + burnin)
    # stationary start: Var(z_0) = 1 and Cov(z_0, eps_0) = var_e
    z[0] = eps[0] + math.sqrt(max(1.0 - var_e, 0.0)) * rng.normal()
    for t in range(1, T + burnin):
        z[t] = phi * z[t - 1] + theta * eps[t - 1] + eps[t]
    return z[burnin:]


def _latent_arma(T: int, rng: np.random.Generator, burnin: int = 200):
    phi, theta = _strong_coefficient(rng), _strong_coefficient(rng)
    return arma_series(phi, theta, T, rng, burnin), {"phi": phi, "theta": theta}


_LATENT = {"exponential": _latent_exponential, "cosine": _latent_cosine, "arma": _latent_arma}


def simulate_latent(kernel: str, S: int, p: int, T: int, rng: np.random.Generator):
    """Independent unit-variance latent series, returned as ``(p, S, T)`` plus parameters."""
    if kernel not in _LATENT:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {KERNELS}")
    Z = np.empty((p, S, T))
    params = []
    for k in range(p):
        for s in range(S):
            Z[k, s], par = _LATENT[kernel](T, rng)
            params.append(par)
    return Z, params


def forward_simulate(truth: GroundTruth) -> MatrixSeries:
    """``Y = (I - W)^{-1} D^{1/2} B Z`` applied per task and time point."""
    W, d = truth.W, truth.d
    p = W.shape[0]
    X = np.einsum("ab,kbt->kat", truth.B, truth.latents)
    E = np.sqrt(d)[:, None, None] * X
    A = np.eye(p) - W
    if np.linalg.cond(A) > 1e12:
        raise SingularSystem("I - W is numerically singular")
    Y = np.linalg.solve(A, E.reshape(p, -1)).reshape(E.shape)
    return MatrixSeries(Y)


def generate(config: SimConfig) -> tuple[GroundTruth, MatrixSeries]:
    rng = np.random.default_rng(config.seed)
    W = random_dag(config.p, config.expected_neighbors, rng)
    d = sample_noise_scales(config.p, rng)
    Q = sample_task_correlation(config.S, rng)
    Z, params = simulate_latent(config.kernel, config.S, config.p, config.T, rng)
    truth = GroundTruth(W, d, Q, Z, config.kernel, config.seed, params)
    return truth, forward_simulate(truth)


def replicate_seeds(master: int, n: int) -> list[int]:
    """Independent integer seeds derived from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(n)]


def write_truth(truth: GroundTruth, path, config: SimConfig | None = None) -> None:
    doc = truth.to_json()
    if config is not None:
        doc["config"] = asdict(config)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
