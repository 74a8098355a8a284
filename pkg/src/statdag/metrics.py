"""Estimation and structure-recovery metrics, plus identifiability diagnostics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import qr

from .errors import DimensionMismatch, SingularSystem
from .spectral import _gl


def _edges(g) -> np.ndarray:
    return np.asarray(getattr(g, "edges", g)) != 0


def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ or are not square")


def mse_W(estimate, truth) -> float:
    """Mean squared difference over all ``p^2`` entries."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    _check_pair(estimate, truth)
    return float(np.mean((estimate - truth) ** 2))


def precision_matrix(W: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``(I - W)^T D^{-1} (I - W)``."""
    A = np.eye(W.shape[0]) - W
    return A.T @ (A / np.asarray(d, dtype=float)[:, None])


def mse_precision(W_est, d_est, W_true, d_true) -> float:
    return mse_W(precision_matrix(np.asarray(W_est), d_est), precision_matrix(np.asarray(W_true), d_true))


def confusion(estimate, truth) -> tuple[int, int, int, int]:
    """``(TP, TN, FP, FN)`` over off-diagonal cells."""
    e, t = _edges(estimate), _edges(truth)
    _check_pair(e, t)
    off = ~np.eye(e.shape[0], dtype=bool)
    e, t = e[off], t[off]
    return int(np.sum(e & t)), int(np.sum(~e & ~t)), int(np.sum(e & ~t)), int(np.sum(~e & t))


def mcc_from_counts(tp: int, tn: int, fp: int, fn: int) -> float:
    """Matthews correlation from confusion counts; 0 when any margin is empty."""
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(den)


def mcc(estimate, truth) -> float:
    """Matthews correlation of directed edge recovery; 0 when undefined."""
    return mcc_from_counts(*confusion(estimate, truth))


def shd(g1, g2) -> int:
    """Structural Hamming distance; a reversed edge counts once."""
    a, b = _edges(g1), _edges(g2)
    _check_pair(a, b)
    iu = np.triu_indices(a.shape[0], 1)
    # per unordered pair: (i<-j, j<-i) pattern must match exactly
    pa = np.stack([a[iu], a.T[iu]])
    pb = np.stack([b[iu], b.T[iu]])
    return int(np.sum(np.any(pa != pb, axis=0)))


def hadamard_invertibility(W: np.ndarray, tol: float | None = None) -> tuple[bool, float]:
    """Whether ``(I-W)^{-1} * (I-W)^{-1}`` (entrywise) is invertible, and its condition number.

    Raises:
        SingularSystem: if ``I - W`` itself is singular.
    """
    W = np.asarray(W, dtype=float)
    p = W.shape[0]
    A = np.eye(p) - W
    if np.linalg.matrix_rank(A) < p:
        raise SingularSystem("I - W is singular")
    inv = np.linalg.inv(A)
    H = inv * inv
    _, R, _ = qr(H, pivoting=True)
    diag = np.abs(np.diag(R))
    tol = p * np.finfo(float).eps * diag[0] if tol is None else tol
    rank = int(np.sum(diag > tol))
    return rank == p, float(np.linalg.cond(H))


def gram_matrix(densities: Sequence[Callable], grid=None) -> np.ndarray:
    """``<f_a, f_b> = int_{-pi}^{pi} f_a f_b`` for even densities.

    With ``grid=None`` a Gauss-Legendre rule on ``[0, pi]`` is used; otherwise
    the trapezoid rule on the given sorted points.
    """
    n = len(densities)
    if grid is None:
        x, w = _gl(max(256, 4 * n))
        nodes = 0.5 * np.pi * (x + 1.0)
        weights = 0.5 * np.pi * w
    else:
        nodes = np.asarray(grid, dtype=float)
        if len(nodes) < 4 * n or nodes.min() < 0 or nodes.max() > np.pi:
            raise ValueError("grid needs at least 4 points per density, inside [0, pi]")
        weights = np.zeros_like(nodes)
        dx = np.diff(nodes)
        weights[:-1] += dx / 2
        weights[1:] += dx / 2
    values = np.array([np.asarray(f(nodes), dtype=float) for f in densities])
    return 2.0 * (values * weights) @ values.T


def spectral_linear_independence(densities: Sequence[Callable], grid=None) -> float:
    """Smallest eigenvalue of the Gram matrix; zero means linear dependence."""
    if len(densities) == 0:
        raise ValueError("no densities given")
    return float(np.linalg.eigvalsh(gram_matrix(densities, grid))[0])


@dataclass
class MetricRow:
    replicate: str
    method: str
    mcc: float
    shd: float
    mse: float | None
    mse_precision: float | None
    runtime: float | None


def evaluate(replicate: str, method: str, estimate_adj, truth_adj, W_est=None, W_true=None,
             d_est=None, d_true=None, runtime: float | None = None) -> MetricRow:
    mse = None if W_est is None or W_true is None else mse_W(W_est, W_true)
    mse_p = None
    if mse is not None and d_est is not None and d_true is not None:
        mse_p = mse_precision(W_est, d_est, W_true, d_true)
    return MetricRow(str(replicate), method, mcc(estimate_adj, truth_adj), float(shd(estimate_adj, truth_adj)),
                     mse, mse_p, None if runtime is None else float(runtime))


def mean_row(rows: Sequence[MetricRow], method: str | None = None) -> MetricRow:
    def avg(name):
        vals = [getattr(r, name) for r in rows if getattr(r, name) is not None]
        return float(np.mean(vals)) if vals else None

    return MetricRow("mean", method or (rows[0].method if rows else ""), avg("mcc"), avg("shd"),
                     avg("mse"), avg("mse_precision"), avg("runtime"))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_metrics_csv(rows: Sequence[MetricRow], include_runtime: bool = True) -> str:
    names = [f.name for f in fields(MetricRow) if include_runtime or f.name != "runtime"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for r in rows:
        d = asdict(r)
        writer.writerow([_fmt(d[n]) for n in names])
    return buf.getvalue()


def write_metrics_csv(rows: Sequence[MetricRow], path, include_runtime: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(format_metrics_csv(rows, include_runtime))
