"""Zeros of the Gaussian entire function: sampling, exact variances and Monte Carlo checks."""

__version__ = "0.1.0"

from .gef import GefSample, from_coefficients, sample_gef, sample_seed, truncation_degree
from .spectral import VarianceReport, spectral_density_M, variance_exact
from .test_functions import TestFunction, builtin, builtin_names
from .zeros import ZeroSet, count_zeros_circle, find_zeros_disk, linear_statistic

__all__ = [
    "GefSample",
    "TestFunction",
    "VarianceReport",
    "ZeroSet",
    "builtin",
    "builtin_names",
    "count_zeros_circle",
    "find_zeros_disk",
    "from_coefficients",
    "linear_statistic",
    "sample_gef",
    "sample_seed",
    "spectral_density_M",
    "truncation_degree",
    "variance_exact",
]
