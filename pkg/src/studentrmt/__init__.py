"""Spectra, maximum-likelihood estimation and entropy benchmarks for Wishart-Student correlation matrices."""

__version__ = "0.1.0"

from .dos import (
    ConvergenceError,
    DensityOfStates,
    DOSParams,
    SpectrumGrid,
    SpectrumPoint,
    dos_curve,
    left_edge,
    mp_cdf,
    mp_density,
    mp_edges,
    right_edge_or_none,
    solve_dos_point,
    tail_density,
)
from .ensemble import (
    DeltaGaussian,
    EnsembleParams,
    LogNormal,
    ReturnsMatrix,
    StudentInverseGamma,
    eigenvalues,
    pearson_estimator,
    sample_returns,
    sample_sigma,
    spectrum_histogram,
)
from .kl import (
    KLBenchmarks,
    gaussian_kl,
    kl_benchmarks,
    kl_monte_carlo,
    kl_table,
    student_kl_finite,
    student_kl_largeN,
    z_gaussian,
    z_student,
    zprime_gaussian,
    zprime_student,
)
from .mle import MLEConfig, MLEResult, mle_denominator_check, mle_solve
from .montecarlo import analytic_cdf, ks_distance, mle_spectrum_vs_mp, sample_spectra
from .quadrature import gamma_weight_integral

__all__ = [name for name in dir() if not name.startswith("_")]
