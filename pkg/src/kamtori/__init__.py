"""Numerical continuation of lower-dimensional invariant tori surviving from a
resonant torus of a near-integrable Hamiltonian, via a counter-term
quadratic-convergence scheme, with direct residual verification."""

__version__ = "0.1.0"

from .series import (FTSeries, Grading, average_q, ck_norm_estimate,
                     differentiate, evaluate, majorant_norm, multiply,
                     partial_omega, taylor_split, truncate_fourier)

__all__ = [
    "FTSeries", "Grading", "average_q", "ck_norm_estimate", "differentiate",
    "evaluate", "majorant_norm", "multiply", "partial_omega", "taylor_split",
    "truncate_fourier",
]
