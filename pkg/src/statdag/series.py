"""Matrix-variate time series: preprocessing, real Fourier transform, Whittle schedule.

A series is stored as a ``(p, S, T)`` array: ``p`` variables (graph nodes),
``S`` tasks sharing the same graph, and ``T`` time points.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConstantComponent, DimensionMismatch, SchemaError

_HEADER_RE = re.compile(r"^v(\d+)_s(\d+)$")


@dataclass(frozen=True)
class MatrixSeries:
    """Observed data ``Y`` of shape ``(p, S, T)``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 2:
            values = values[:, None, :]
        if values.ndim != 3:
            raise DimensionMismatch(f"expected a (p, S, T) array, got shape {values.shape}")
        p, S, T = values.shape
        if p < 2 or S < 1 or T < 4:
            raise DimensionMismatch(f"need p >= 2, S >= 1, T >= 4; got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def S(self) -> int:
        return self.values.shape[1]

    @property
    def T(self) -> int:
        return self.values.shape[2]

    def stacked(self) -> np.ndarray:
        """The ``(p, S*T)`` matrix with tasks laid side by side."""
        return self.values.reshape(self.p, self.S * self.T)


@dataclass(frozen=True)
class FourierSeries:
    """Orthonormal real DFT coefficients, one column per Whittle schedule index.

    Attributes:
        coefficients: ``(p, S, T)`` array.
        frequencies: ``(T,)`` frequency assigned to each coefficient index.
    """

    coefficients: np.ndarray
    frequencies: np.ndarray

    @property
    def T(self) -> int:
        return self.coefficients.shape[-1]


SCALINGS = ("component", "global", "none")


def _detrend_center(x: np.ndarray) -> np.ndarray:
    T = x.shape[-1]
    t = np.arange(T, dtype=float)
    design = np.column_stack([np.ones(T), t])
    flat = x.reshape(-1, T)
    coef, *_ = np.linalg.lstsq(design, flat.T, rcond=None)
    resid = flat - (design @ coef).T
    resid -= resid.mean(axis=1, keepdims=True)
    scale = np.abs(flat).max(axis=1)
    sd = resid.std(axis=1, ddof=1)
    bad = sd <= 1e-12 * np.maximum(scale, 1.0)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        k, s = np.unravel_index(idx, x.shape[:-1])
        raise ConstantComponent(f"component (variable {k}, task {s}) is constant after detrending")
    return resid.reshape(x.shape)


def preprocess(raw: MatrixSeries, scaling: str = "component") -> MatrixSeries:
    """Remove an OLS linear trend from each component, center it, then rescale.

    Args:
        scaling: ``"component"`` gives every (variable, task) component unit
            sample variance; ``"global"`` divides all components by one pooled
            standard deviation, which leaves the graph weights unchanged;
            ``"none"`` only detrends and centers.

    Raises:
        ConstantComponent: if a component has no variation left after detrending.
    """
    if scaling not in SCALINGS:
        raise ValueError(f"unknown scaling {scaling!r}; choose from {SCALINGS}")
    resid = _detrend_center(raw.values)
    if scaling == "component":
        resid = resid / resid.std(axis=-1, ddof=1, keepdims=True)
    elif scaling == "global":
        resid = resid / np.sqrt(np.mean(resid.var(axis=-1, ddof=1)))
    return MatrixSeries(resid)


def component_scales(raw: MatrixSeries, scaling: str = "component") -> np.ndarray:
    """Per-variable factor by which :func:`preprocess` divided the data.

    For ``"component"`` scaling the per-task factors are pooled (root mean
    variance over tasks); map weights back with ``W_raw = diag(s) W diag(1/s)``.
    """
    resid = _detrend_center(raw.values)
    var = resid.var(axis=-1, ddof=1)
    p = raw.p
    if scaling == "component":
        return np.sqrt(var.mean(axis=1))
    if scaling == "global":
        return np.full(p, np.sqrt(var.mean()))
    return np.ones(p)


def schedule_frequency_index(T: int) -> np.ndarray:
    """Fourier-frequency index ``k`` (``omega_k = 2*pi*k/T``) for each coefficient slot.

    Slot 0 (the mean coefficient) is paired with ``omega_1``; slots ``2k-1, 2k``
    hold the cosine/sine pair at ``omega_k``; for even ``T`` the last slot is
    the Nyquist frequency.
    """
    if T < 4:
        raise ValueError("T must be at least 4")
    idx = np.empty(T, dtype=int)
    idx[0] = 1
    K = (T - 1) // 2
    ks = np.arange(1, K + 1)
    idx[1 : 2 * K : 2] = ks
    idx[2 : 2 * K + 1 : 2] = ks
    if T % 2 == 0:
        idx[T - 1] = T // 2
    return idx


def schedule_frequencies(T: int) -> np.ndarray:
    return 2.0 * np.pi * schedule_frequency_index(T) / T


def whittle_variance_schedule(T: int, f: Callable[[float], np.ndarray]) -> np.ndarray:
    """Diagonal variances ``S_1..S_T`` of the Fourier coefficients.

    Args:
        T: number of time points.
        f: maps a frequency to the vector ``(f_1(omega), ..., f_p(omega))``.

    Returns:
        ``(T, p)`` array whose row ``m`` is the diagonal of ``S_{m+1}``.
    """
    omegas = schedule_frequencies(T)
    cache: dict[float, np.ndarray] = {}
    rows = []
    for w in omegas:
        key = float(w)
        if key not in cache:
            cache[key] = np.atleast_1d(np.asarray(f(key), dtype=float))
        rows.append(cache[key])
    return np.vstack(rows)


def real_dft_matrix(T: int) -> np.ndarray:
    """Explicit ``(T, T)`` orthonormal real DFT basis (rows are basis vectors)."""
    t = np.arange(T)
    basis = np.empty((T, T))
    basis[0] = 1.0 / np.sqrt(T)
    K = (T - 1) // 2
    for k in range(1, K + 1):
        w = 2.0 * np.pi * k / T
        basis[2 * k - 1] = np.sqrt(2.0 / T) * np.cos(w * t)
        basis[2 * k] = np.sqrt(2.0 / T) * np.sin(w * t)
    if T % 2 == 0:
        basis[T - 1] = np.cos(np.pi * t) / np.sqrt(T)
    return basis


def real_dft(x: np.ndarray) -> np.ndarray:
    """Orthonormal real DFT along the last axis (FFT based)."""
    x = np.asarray(x, dtype=float)
    T = x.shape[-1]
    X = np.fft.rfft(x, axis=-1)
    out = np.empty_like(x)
    out[..., 0] = X[..., 0].real / np.sqrt(T)
    K = (T - 1) // 2
    c = np.sqrt(2.0 / T)
    out[..., 1 : 2 * K : 2] = c * X[..., 1 : K + 1].real
    out[..., 2 : 2 * K + 1 : 2] = -c * X[..., 1 : K + 1].imag
    if T % 2 == 0:
        out[..., T - 1] = X[..., T // 2].real / np.sqrt(T)
    return out


def inverse_real_dft(c: np.ndarray) -> np.ndarray:
    """Inverse of :func:`real_dft`."""
    c = np.asarray(c, dtype=float)
    T = c.shape[-1]
    K = (T - 1) // 2
    X = np.zeros(c.shape[:-1] + (T // 2 + 1,), dtype=complex)
    X[..., 0] = c[..., 0] * np.sqrt(T)
    s = np.sqrt(T / 2.0)
    X[..., 1 : K + 1] = s * (c[..., 1 : 2 * K : 2] - 1j * c[..., 2 : 2 * K + 1 : 2])
    if T % 2 == 0:
        X[..., T // 2] = c[..., T - 1] * np.sqrt(T)
    return np.fft.irfft(X, n=T, axis=-1)


def fourier_transform(series: MatrixSeries) -> FourierSeries:
    """Apply the orthonormal real DFT to each of the ``p*S`` component series."""
    return FourierSeries(real_dft(series.values), schedule_frequencies(series.T))


def residual_series(Y: MatrixSeries | np.ndarray, W: np.ndarray) -> np.ndarray:
    """``R_t = (I - W) Y_t`` for every task and time point.

    Works on either a :class:`MatrixSeries` or a raw ``(p, ...)`` array (for
    example Fourier coefficients, since the map is linear).
    """
    values = Y.values if isinstance(Y, MatrixSeries) else np.asarray(Y, dtype=float)
    W = np.asarray(W, dtype=float)
    p = values.shape[0]
    if W.shape != (p, p):
        raise DimensionMismatch(f"W has shape {W.shape}, data has {p} variables")
    return values - np.tensordot(W, values, axes=(1, 0))


def read_csv(path: str | Path) -> MatrixSeries:
    """Read a CSV whose header names columns ``v{k}_s{s}`` (1-based)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        keys = []
        for name in header:
            m = _HEADER_RE.match(name.strip())
            if m is None:
                raise SchemaError(f"{path}: bad column name {name!r}, expected v<k>_s<s>")
            keys.append((int(m.group(1)), int(m.group(2))))
        p = max(k for k, _ in keys)
        S = max(s for _, s in keys)
        if len(set(keys)) != len(keys) or len(keys) != p * S:
            raise SchemaError(f"{path}: header does not cover every v<k>_s<s> exactly once")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != p * S:
        raise SchemaError(f"{path}: ragged rows")
    values = np.empty((p, S, data.shape[0]))
    for col, (k, s) in enumerate(keys):
        values[k - 1, s - 1] = data[:, col]
    return MatrixSeries(values)


def write_csv(series: MatrixSeries, path: str | Path) -> None:
    p, S, T = series.values.shape
    header = [f"v{k + 1}_s{s + 1}" for k in range(p) for s in range(S)]
    flat = series.values.reshape(p * S, T).T
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in flat:
            writer.writerow([repr(float(v)) for v in row])
