"""
Kullback-Leibler entropies between elliptic laws and their benchmark values.

Every entropy here depends on the pair ``(C1, C2)`` only through the
generalised eigenvalues ``a_i`` of ``C2^-1 C1``:

* Gaussian:          ``S = 1/2 sum (a - log a - 1)``
* Student, finite N: ``S = -1/2 sum log a + (N+mu)/2 <log[(1 + sum a / 2s) / (1 + N / 2s)]>_s``
* Student, large N:  ``S = -1/2 sum log a + N/2 log(mean a)``

The benchmark values ``Z/N = <S(E; C)>/N`` and ``Z'/N = <S(E1; E2)>/N`` do not
depend on the true correlation matrix and follow from the spectral density of
the empirical matrix (Marcenko-Pastur for Gaussian returns).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .dos import DensityOfStates, DOSParams, mp_density, mp_edges
from .ensemble import (
    DeltaGaussian,
    EnsembleParams,
    StudentInverseGamma,
    pearson_estimator,
    sample_returns,
    spawn_generators,
)
from .quadrature import gamma_weight_integral

__all__ = [
    "KLBenchmarks",
    "generalized_eigenvalues",
    "gaussian_kl",
    "student_kl_finite",
    "student_kl_largeN",
    "z_gaussian",
    "zprime_gaussian",
    "z_student",
    "zprime_student",
    "kl_benchmarks",
    "kl_table",
    "kl_monte_carlo",
]


@dataclass(frozen=True)
class KLBenchmarks:
    mu: float
    Q: float
    Z_over_N: float
    Zprime_over_N: float
    meta: dict


def generalized_eigenvalues(C1, C2) -> np.ndarray:
    """Eigenvalues of ``C2^-1 C1`` via the symmetric-definite pencil ``(C1, C2)``."""
    C1 = np.asarray(C1, dtype=float)
    C2 = np.asarray(C2, dtype=float)
    if C1.shape != C2.shape or C1.ndim != 2 or C1.shape[0] != C1.shape[1]:
        raise ValueError("C1 and C2 must be square matrices of the same shape")
    try:
        return linalg.eigh(C1, C2, eigvals_only=True)
    except linalg.LinAlgError as exc:
        raise ValueError("C2 is singular or not positive definite") from exc


def _check_positive(a):
    if np.any(a <= 0):
        raise ValueError("C1 must be positive definite (C2^-1 C1 has non-positive eigenvalues)")
    return a


def gaussian_kl(C1, C2) -> float:
    """KL entropy of two zero-mean Gaussian laws, ``1/2 sum (a - log a - 1)``."""
    a = _check_positive(generalized_eigenvalues(C1, C2))
    return 0.5 * float(np.sum(a - np.log(a) - 1.0))


def student_kl_finite(C1, C2, mu: float, N: int | None = None) -> float:
    """KL entropy of two multivariate Student laws with exponent ``mu``."""
    if not mu > 2:
        raise ValueError(f"mu must exceed 2, got {mu}")
    a = _check_positive(generalized_eigenvalues(C1, C2))
    N = a.size if N is None else N
    tr = float(a.sum())

    def f(s):
        return np.log((2.0 * s + tr) / (2.0 * s + N))

    integral = gamma_weight_integral(f, mu)
    return -0.5 * float(np.sum(np.log(a))) + 0.5 * (N + mu) * float(np.real(integral))


def student_kl_largeN(C1, C2, N: int | None = None) -> float:
    """Large-N Student KL entropy, ``-1/2 sum log a + N/2 log(sum a / N)``."""
    a = _check_positive(generalized_eigenvalues(C1, C2))
    N = a.size if N is None else N
    return -0.5 * float(np.sum(np.log(a))) + 0.5 * N * math.log(float(a.sum()) / N)


# ---------------------------------------------------------------------------
# Benchmarks from the spectral density
# ---------------------------------------------------------------------------


def _mp_expectation(f, Q: float, order: int = 256) -> float:
    q = 1.0 / Q
    lo, hi = mp_edges(q)
    x, w = np.polynomial.legendre.leggauss(order)
    th = 0.5 * np.pi * (x + 1.0)
    lam = 0.5 * (hi + lo) - 0.5 * (hi - lo) * np.cos(th)
    jac = 0.5 * np.pi * w * 0.5 * (hi - lo) * np.sin(th)
    return float(np.sum(jac * mp_density(lam, q) * f(lam)))


def _check_Q(Q):
    if not Q > 1:
        raise ValueError(f"benchmarks need Q > 1, got {Q}")


def z_gaussian(Q: float) -> float:
    """``Z/N = 1/2 int rho_MP (-log lambda + 1 - lambda)``."""
    if math.isinf(Q):
        return 0.0
    _check_Q(Q)
    return 0.5 * _mp_expectation(lambda x: -np.log(x) + 1.0 - x, Q)


def zprime_gaussian(Q: float, method: str = "closed") -> float:
    """``Z'/N = -1/2 + 1/2 <lambda> <1/lambda>`` for Marcenko-Pastur spectra.

    ``method="closed"`` uses ``<lambda> = 1`` and ``<1/lambda> = Q/(Q-1)``;
    ``method="quadrature"`` integrates the density.
    """
    if math.isinf(Q):
        return 0.0
    _check_Q(Q)
    if method == "closed":
        return 0.5 / (Q - 1.0)
    if method == "quadrature":
        m1 = _mp_expectation(lambda x: x, Q)
        minv = _mp_expectation(lambda x: 1.0 / x, Q)
        return -0.5 + 0.5 * m1 * minv
    raise ValueError(f"unknown method {method!r}")


def _student_moments(Q, mu, **kw):
    return DensityOfStates(DOSParams(StudentInverseGamma(mu), Q)).moments(**kw)


def z_student(Q: float, mu: float, **kw) -> float:
    """``Z/N = -1/2 int rho_S log lambda + 1/2 log int rho_S lambda``."""
    if math.isinf(mu):
        return z_gaussian(Q)
    _check_Q(Q)
    m = _student_moments(Q, mu, **kw)
    return -0.5 * m.log + 0.5 * math.log(m.mean)


def zprime_student(Q: float, mu: float, **kw) -> float:
    """``Z'/N = 1/2 log int rho_S lambda + 1/2 log int rho_S / lambda``."""
    if math.isinf(mu):
        return zprime_gaussian(Q)
    _check_Q(Q)
    m = _student_moments(Q, mu, **kw)
    return 0.5 * math.log(m.mean) + 0.5 * math.log(m.inverse)


def kl_benchmarks(mu: float, Q: float, tail_rtol: float = 1e-3) -> KLBenchmarks:
    """Both benchmark entropies for one ``(mu, Q)`` cell (``mu=inf`` is Gaussian)."""
    _check_Q(Q)
    if math.isinf(mu):
        z, zp = z_gaussian(Q), zprime_gaussian(Q)
        meta = dict(law="gaussian", method="Marcenko-Pastur quadrature / closed form")
    else:
        m = _student_moments(Q, mu, tail_rtol=tail_rtol)
        z = -0.5 * m.log + 0.5 * math.log(m.mean)
        zp = 0.5 * math.log(m.mean) + 0.5 * math.log(m.inverse)
        meta = dict(law=f"student(mu={mu:g})", mass=m.mass, mean=m.mean, inverse=m.inverse, log=m.log,
                    lam_cut=m.lam_cut, tail_rtol=tail_rtol)
    if z < -1e-12 or zp < -1e-12:
        meta["warning"] = "negative entropy"
    if zp < z:
        meta["warning"] = "Z'/N < Z/N"
    return KLBenchmarks(mu, Q, z, zp, meta)


def kl_table(mu_list, Q_list, tail_rtol: float = 1e-3) -> list[KLBenchmarks]:
    return [kl_benchmarks(mu, Q, tail_rtol) for mu in mu_list for Q in Q_list]


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def kl_monte_carlo(params: EnsembleParams, trueC=None, mode: str = "E_vs_C", n_samples: int = 100,
                   seed=0) -> tuple[float, float]:
    """Sample mean and standard error of ``S/N`` over Monte Carlo replicas.

    ``mode="E_vs_C"`` compares a Pearson matrix with the true one,
    ``mode="E1_vs_E2"`` two independent Pearson matrices. Gaussian ensembles
    use the Gaussian entropy, Student ensembles the large-N Student entropy.
    """
    if mode not in ("E_vs_C", "E1_vs_E2"):
        raise ValueError(f"unknown mode {mode!r}")
    if params.T <= params.N:
        raise ValueError("need T > N for invertible empirical matrices")
    N = params.N
    C = np.eye(N) if trueC is None else np.asarray(trueC, dtype=float)
    kl = gaussian_kl if isinstance(params.sigma_law, DeltaGaussian) else student_kl_largeN
    values = np.empty(n_samples)
    for k, rng in enumerate(spawn_generators(seed, n_samples)):
        E1 = pearson_estimator(sample_returns(params, rng, C))
        E2 = C if mode == "E_vs_C" else pearson_estimator(sample_returns(params, rng, C))
        values[k] = kl(E1, E2) / N
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n_samples))
