"""Bayesian DAG estimation for stationary matrix-variate time series."""

from .errors import StatDagError
from .series import MatrixSeries, preprocess, fourier_transform
from .spectral import SpectralParams

__version__ = "0.1.0"

__all__ = ["MatrixSeries", "SpectralParams", "StatDagError", "fourier_transform", "preprocess"]
