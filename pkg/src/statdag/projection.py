"""Acyclicity-constrained projection of graph-weight draws and DAG extraction.

Each unrestricted draw ``W`` is mapped to the zero-diagonal ``beta`` minimizing

    ||W Y - beta Y||^2 / (N p) + lam * sum(C * |beta|) + alpha * h(beta) + rho/2 * h(beta)^2

with ``h(beta) = tr(exp(beta * beta)) - p`` (zero exactly on acyclic supports)
and ``N`` the number of stacked time points over all tasks.  The absolute
value is removed by splitting ``beta = beta_plus - beta_minus`` with both parts
nonnegative, and the smooth problem is solved by L-BFGS-B inside an
augmented-Lagrangian continuation on ``(alpha, rho)``.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize
from sklearn.linear_model import lasso_path

from .errors import EmptyGrid, NonFiniteObjective, OptimizerDivergence, SchemaError
from .series import MatrixSeries

log = logging.getLogger(__name__)

WEIGHT_CAP = 1e6


@dataclass(frozen=True)
class ProjectionConfig:
    """Controls for the penalized projection.

    ``alpha`` and ``rho`` are the initial multipliers of the continuation;
    ``tol`` is the acyclicity tolerance on ``h``.
    """

    lam: float = 0.0
    C: np.ndarray | None = field(default=None, compare=False)
    alpha: float = 0.0
    rho: float = 1.0
    zeta: float = 1.0
    max_iter: int = 1000
    tol: float = 1e-8
    rho_max: float = 1e16
    max_outer: int = 100
    support_tol: float = 1e-8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


def dag_penalty(beta: np.ndarray) -> float:
    """``tr(exp(beta * beta)) - p``; zero iff the support of ``beta`` is acyclic."""
    beta = np.asarray(beta, dtype=float)
    return float(np.trace(expm(beta * beta)) - beta.shape[0])


def dag_penalty_grad(beta: np.ndarray) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    return expm(beta * beta).T * 2.0 * beta


def _as_matrix(Y) -> np.ndarray:
    if isinstance(Y, MatrixSeries):
        return Y.stacked()
    Y = np.asarray(Y, dtype=float)
    return Y.reshape(Y.shape[0], -1)


def second_moment(Y) -> np.ndarray:
    """``Y Y^T / (N p)`` for the stacked ``(p, N)`` data matrix."""
    X = _as_matrix(Y)
    p, N = X.shape
    return X @ X.T / (N * p)


def has_cycle(adj: np.ndarray) -> bool:
    """Depth-first cycle check; ``adj[i, j] != 0`` is the edge ``j -> i``."""
    return not nx.is_directed_acyclic_graph(_digraph(adj))


def _digraph(adj: np.ndarray, weights: np.ndarray | None = None) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(range(adj.shape[0]))
    for i, j in zip(*np.nonzero(adj)):
        if i != j:
            g.add_edge(int(j), int(i), weight=None if weights is None else float(weights[i, j]))
        else:
            g.add_edge(int(j), int(i))
    return g


def break_cycles(adj: np.ndarray, score: np.ndarray) -> tuple[np.ndarray, list]:
    """Drop the lowest-``score`` edge of each remaining cycle until acyclic.

    Returns the repaired adjacency and the removed ``(parent, child)`` pairs.
    """
    adj = np.array(adj, copy=True)
    removed = []
    g = _digraph(adj)
    while True:
        try:
            cycle = nx.find_cycle(g)
        except nx.NetworkXNoCycle:
            return adj, removed
        parent, child = min(cycle, key=lambda e: (score[e[1], e[0]], e))[:2]
        adj[child, parent] = 0
        g.remove_edge(parent, child)
        removed.append((int(parent), int(child)))


class _Problem:
    """Smooth split objective for a fixed target matrix."""

    def __init__(self, target: np.ndarray, gram: np.ndarray, lam: float, C: np.ndarray):
        self.target = target
        self.gram = gram
        self.p = gram.shape[0]
        self.lamC = lam * C.ravel()
        self.alpha = 0.0
        self.rho = 1.0
        self.overflowed = False

    def beta(self, x: np.ndarray) -> np.ndarray:
        n = self.p * self.p
        return (x[:n] - x[n:]).reshape(self.p, self.p)

    def __call__(self, x: np.ndarray):
        beta = self.beta(x)
        diff = self.target - beta
        dg = diff @ self.gram
        loss = float(np.sum(dg * diff))
        with np.errstate(over="ignore", invalid="ignore"):
            E = expm(beta * beta)
        h = float(np.trace(E) - self.p)
        value = loss + self.lamC @ x[: self.p**2] + self.lamC @ x[self.p**2:] + self.alpha * h + 0.5 * self.rho * h * h
        if not np.isfinite(value):
            # line-search trial too far out; an infinite value makes L-BFGS-B back off
            self.overflowed = True
            return np.inf, np.zeros_like(x)
        g_beta = (-2.0 * dg + (self.alpha + self.rho * h) * E.T * 2.0 * beta).ravel()
        return value, np.concatenate([g_beta + self.lamC, -g_beta + self.lamC])

    def bounds(self):
        diag = set(np.arange(self.p) * (self.p + 1))
        one = [(0.0, 0.0) if k in diag else (0.0, None) for k in range(self.p**2)]
        return one + one


def _split(beta: np.ndarray) -> np.ndarray:
    return np.concatenate([np.maximum(beta, 0.0).ravel(), np.maximum(-beta, 0.0).ravel()])


def _minimize(prob: _Problem, x: np.ndarray, bounds, max_iter: int, restarts: int = 20):
    """L-BFGS-B, restarted when a line search stopped on an overflowing trial point."""
    for _ in range(restarts):
        prob.overflowed = False
        res = minimize(prob, x, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": max_iter, "ftol": 1e-12, "gtol": 1e-10})
        if not prob.overflowed or res.fun >= prob(x)[0]:
            return res
        x = res.x
    return res


def solve_projection(target: np.ndarray, gram: np.ndarray, config: ProjectionConfig,
                     start: np.ndarray | None = None) -> np.ndarray:
    """Minimize the penalized loss ``||target Y - beta Y||^2/(Np) + ...`` given ``gram = YY^T/(Np)``.

    Raises:
        OptimizerDivergence: if a subproblem ends above its starting objective.
        NonFiniteObjective: if the objective overflows at a starting point.
    """
    p = gram.shape[0]
    C = np.ones((p, p)) if config.C is None else np.asarray(config.C, dtype=float)
    prob = _Problem(np.asarray(target, dtype=float), gram, config.lam, C)
    prob.alpha, prob.rho = config.alpha, config.rho
    start = np.zeros((p, p)) if start is None else np.array(start, dtype=float)
    np.fill_diagonal(start, 0.0)
    x = _split(start)
    bounds = prob.bounds()
    h_prev = np.inf
    for _ in range(config.max_outer):
        while True:
            f0 = prob(x)[0]
            if not np.isfinite(f0):
                raise NonFiniteObjective("projection objective is not finite")
            res = _minimize(prob, x, bounds, config.max_iter)
            if res.fun > f0 + 1e-10 * max(1.0, abs(f0)):
                raise OptimizerDivergence(f"objective increased from {f0:.6g} to {res.fun:.6g}")
            x_new = res.x
            h_new = dag_penalty(prob.beta(x_new))
            if h_new > 0.25 * h_prev and prob.rho < config.rho_max:
                prob.rho *= 10.0
            else:
                break
        x = x_new
        h_prev = h_new
        prob.alpha += prob.rho * h_new
        if h_new <= config.tol or prob.rho >= config.rho_max:
            break
    beta = prob.beta(x)
    np.fill_diagonal(beta, 0.0)
    beta[np.abs(beta) < config.support_tol] = 0.0
    if has_cycle(beta):
        support, removed = break_cycles(beta != 0, np.abs(beta))
        log.info("removed residual cycle edges %s after projection", removed)
        beta = np.where(support, beta, 0.0)
    return beta


def project_sample(W: np.ndarray, Y, config: ProjectionConfig, gram: np.ndarray | None = None) -> np.ndarray:
    """Project one weight draw onto zero-diagonal matrices with acyclic support."""
    W = np.asarray(W, dtype=float)
    gram = second_moment(Y) if gram is None else gram
    return solve_projection(W, gram, config, start=W)


def adaptive_weights(Y, alpha: float = 0.0, rho: float = 1.0, zeta: float = 1.0,
                     cap: float = WEIGHT_CAP, gram: np.ndarray | None = None) -> np.ndarray:
    """``C = min(1/|beta_A|^zeta, cap)`` from the unpenalized acyclic fit of ``Y`` on itself."""
    gram = second_moment(Y) if gram is None else gram
    p = gram.shape[0]
    beta = solve_projection(np.eye(p), gram, ProjectionConfig(lam=0.0, alpha=alpha, rho=rho))
    return weights_from_estimate(beta, zeta, cap)


def weights_from_estimate(beta: np.ndarray, zeta: float = 1.0, cap: float = WEIGHT_CAP) -> np.ndarray:
    with np.errstate(divide="ignore"):
        C = np.minimum(1.0 / np.abs(beta) ** zeta, cap)
    np.fill_diagonal(C, cap)
    return C


def lambda_grid(Y, C: np.ndarray, n: int = 50, ratio: float = 1e-4) -> np.ndarray:
    """Log-spaced decreasing grid from the smallest all-zero level down to ``ratio`` of it."""
    X = _as_matrix(Y)
    p, N = X.shape
    corr = np.abs(X @ X.T) * 2.0 / (N * p) / C
    np.fill_diagonal(corr, 0.0)
    lam_max = float(corr.max())
    if lam_max <= 0:
        lam_max = 1.0
    return lam_max * np.logspace(0.0, np.log10(ratio), n)


def _time_folds(S: int, T: int, folds: int) -> list[np.ndarray]:
    """Boolean test masks over stacked columns; each fold is a contiguous time block in every task."""
    blocks = np.array_split(np.arange(T), folds)
    masks = []
    for b in blocks:
        m = np.zeros((S, T), dtype=bool)
        m[:, b] = True
        masks.append(m.ravel())
    return masks


def select_lambda_cv(Y, C: np.ndarray, grid=None, folds: int = 5) -> float:
    """Cross-validated LASSO level on the weight-rescaled problem.

    Each row is a LASSO regression of ``y_i`` on ``y_j / c_ij``.  Folds hold
    out contiguous time blocks.  Ties go to the larger level.

    Raises:
        EmptyGrid: if ``grid`` is empty.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if isinstance(Y, MatrixSeries):
        S, T = Y.S, Y.T
        X = Y.stacked()
    else:
        X = _as_matrix(Y)
        S, T = 1, X.shape[1]
    p, N = X.shape
    grid = lambda_grid(X, C) if grid is None else np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise EmptyGrid("lambda grid is empty")
    if grid.size == 1:
        return float(grid[0])
    order = np.argsort(-grid)
    lams = grid[order]
    errors = np.zeros(len(lams))
    for test in _time_folds(S, T, folds):
        train = ~test
        n_train = int(train.sum())
        for i in range(p):
            others = np.r_[0:i, i + 1:p]
            feats = (X[others] / C[i, others][:, None]).T
            _, coefs, _ = lasso_path(feats[train], X[i, train], alphas=lams * p / 2.0,
                                     max_iter=5000, tol=1e-6)
            pred = feats[test] @ coefs
            errors += np.sum((X[i, test][:, None] - pred) ** 2, axis=0)
        del n_train
    best = int(np.flatnonzero(errors <= errors.min() * (1 + 1e-12))[0])
    return float(lams[best])


@dataclass
class AdjacencyGraph:
    """Binary DAG adjacency; ``edges[i, j] = 1`` encodes the edge ``j -> i``."""

    edges: np.ndarray
    votes: np.ndarray | None = None
    H: float = 0.3
    repaired: list = field(default_factory=list)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=int)
        if np.any(np.diag(self.edges)):
            raise ValueError("adjacency must have a zero diagonal")

    @property
    def p(self) -> int:
        return self.edges.shape[0]

    def is_acyclic(self) -> bool:
        return not has_cycle(self.edges)

    def edge_list(self) -> list[list[int]]:
        return [[int(j), int(i)] for i, j in zip(*np.nonzero(self.edges))]

    def to_json(self) -> dict:
        votes = self.edges.astype(float) if self.votes is None else self.votes
        return {"p": self.p, "H": self.H, "edges": self.edge_list(), "votes": np.asarray(votes).tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "AdjacencyGraph":
        try:
            p = int(doc["p"])
            edges = np.zeros((p, p), dtype=int)
            for parent, child in doc["edges"]:
                edges[int(child), int(parent)] = 1
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise SchemaError(f"bad adjacency document: {exc}") from exc
        votes = np.asarray(doc["votes"], dtype=float) if doc.get("votes") is not None else None
        return cls(edges, votes, float(doc.get("H", 0.3)))

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    def write_csv(self, path) -> None:
        votes = self.edges.astype(float) if self.votes is None else self.votes
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["parent", "child", "vote"])
            for parent, child in self.edge_list():
                writer.writerow([parent, child, repr(float(votes[child, parent]))])


def threshold_adjacency(draws, H: float = 0.3) -> AdjacencyGraph:
    """Majority vote of ``|w| > H`` across projected draws, repaired to be acyclic."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 2:
        draws = draws[None]
    if draws.shape[0] == 0:
        raise ValueError("no draws to threshold")
    votes = np.mean(np.abs(draws) > H, axis=0)
    np.fill_diagonal(votes, 0.0)
    adj = (votes > 0.5).astype(int)
    adj, removed = break_cycles(adj, votes)
    if removed:
        log.info("vote repair removed edges %s", removed)
    return AdjacencyGraph(adj, votes, H, removed)


@dataclass(frozen=True)
class Algorithm1Config:
    H: float = 0.3
    zeta: float = 1.0
    folds: int = 5
    grid_size: int = 50
    max_draws: int | None = None
    alpha: float = 0.0
    rho: float = 1.0
    jobs: int = 1


@dataclass
class ProjectionResult:
    graph: AdjacencyGraph
    projected: np.ndarray
    lam: float
    C: np.ndarray

    @property
    def mean_projected(self) -> np.ndarray:
        return self.projected.mean(axis=0)


def thin_draws(draws: np.ndarray, max_draws: int | None) -> np.ndarray:
    """Evenly spaced subset of at most ``max_draws`` draws."""
    if max_draws is None or len(draws) <= max_draws:
        return draws
    idx = np.unique(np.linspace(0, len(draws) - 1, max_draws).round().astype(int))
    return draws[idx]


def _project_worker(args):
    W, gram, config = args
    return solve_projection(W, gram, config, start=W)


def tuning(Y, config: Algorithm1Config = Algorithm1Config(), gram=None) -> tuple[float, np.ndarray]:
    """Adaptive weights and the cross-validated LASSO level."""
    gram = second_moment(Y) if gram is None else gram
    C = adaptive_weights(Y, config.alpha, config.rho, config.zeta, gram=gram)
    grid = lambda_grid(Y, C, n=config.grid_size)
    lam = select_lambda_cv(Y, C, grid, config.folds)
    return lam, C


def run_algorithm1(draws, Y, config: Algorithm1Config = Algorithm1Config()) -> ProjectionResult:
    """Weights, cross-validated level, per-draw projection and vote thresholding.

    Args:
        draws: ``(n, p, p)`` unrestricted weight draws or a draw archive.
        Y: the (preprocessed) data the chain was fitted to.
    """
    if hasattr(draws, "W_draws"):
        draws = draws.W_draws()
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 3 or len(draws) == 0:
        raise ValueError("need a nonempty (n, p, p) array of draws")
    gram = second_moment(Y)
    lam, C = tuning(Y, config, gram)
    pconf = ProjectionConfig(lam=lam, C=C, alpha=config.alpha, rho=config.rho, zeta=config.zeta)
    selected = thin_draws(draws, config.max_draws)
    tasks = [(W, gram, pconf) for W in selected]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            projected = np.array(list(pool.map(_project_worker, tasks, chunksize=8)))
    else:
        projected = np.array([_project_worker(t) for t in tasks])
    graph = threshold_adjacency(projected, config.H)
    return ProjectionResult(graph, projected, lam, C)


def anotears(Y, config: Algorithm1Config = Algorithm1Config()) -> ProjectionResult:
    """Baseline: one penalized acyclic fit of ``Y`` on itself, thresholded at ``H``."""
    gram = second_moment(Y)
    lam, C = tuning(Y, config, gram)
    p = gram.shape[0]
    pconf = ProjectionConfig(lam=lam, C=C, alpha=config.alpha, rho=config.rho, zeta=config.zeta)
    beta = solve_projection(np.eye(p), gram, pconf)
    adj = (np.abs(beta) > config.H).astype(int)
    np.fill_diagonal(adj, 0)
    votes = adj.astype(float)
    adj, removed = break_cycles(adj, np.abs(beta))
    return ProjectionResult(AdjacencyGraph(adj, votes, config.H, removed), beta[None], lam, C)
