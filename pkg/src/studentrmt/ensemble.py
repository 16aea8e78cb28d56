"""
Elliptic return ensembles and Pearson correlation spectra.

Returns are generated as ``r_i^t = sigma_t * eta_i^t`` where ``eta^t`` is a
Gaussian vector with correlation matrix ``C`` and ``sigma_t`` is a volatility
factor common to all variables on day ``t``. Three volatility laws are
provided, all normalised so that ``<sigma^2> = 1``:

* :class:`StudentInverseGamma` -- ``sigma^2 = mu_bar / s`` with
  ``s ~ Gamma(mu/2)`` and ``mu_bar = mu/2 - 1``. The returns are then
  multivariate Student with tail exponent ``mu``.
* :class:`DeltaGaussian` -- ``sigma = 1``; the classical Wishart case.
* :class:`LogNormal` -- ``log sigma^2 ~ N(-v/2, v)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "StudentInverseGamma",
    "DeltaGaussian",
    "LogNormal",
    "SigmaLaw",
    "EnsembleParams",
    "ReturnsMatrix",
    "parse_law",
    "sample_sigma",
    "sample_returns",
    "pearson_estimator",
    "eigenvalues",
    "spectrum_histogram",
    "check_correlation",
    "spawn_generators",
]


@dataclass(frozen=True)
class StudentInverseGamma:
    """Inverse-gamma variance law giving multivariate Student returns."""

    mu: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 2):
            raise ValueError(f"Student tail exponent must satisfy mu > 2, got {self.mu}")

    @property
    def mu_bar(self) -> float:
        return self.mu / 2.0 - 1.0

    @property
    def shape(self) -> float:
        """Shape parameter of the Gamma law of ``s``."""
        return self.mu / 2.0

    def sample_sigma2(self, rng, size=None):
        s = rng.gamma(self.shape, size=size)
        return self.mu_bar / s

    def describe(self) -> str:
        return f"student(mu={self.mu:g})"


@dataclass(frozen=True)
class DeltaGaussian:
    """Constant volatility, ``sigma = 1``."""

    def sample_sigma2(self, rng, size=None):
        if size is None:
            return 1.0
        return np.ones(size)

    def describe(self) -> str:
        return "gaussian"


@dataclass(frozen=True)
class LogNormal:
    """Log-normal variance law.

    ``log_var`` is the variance of ``log sigma^2``; its mean is fixed at
    ``-log_var / 2`` so that ``<sigma^2> = 1``.
    """

    log_var: float

    def __post_init__(self):
        if not (math.isfinite(self.log_var) and self.log_var >= 0):
            raise ValueError(f"log-variance must be >= 0, got {self.log_var}")

    def sample_sigma2(self, rng, size=None):
        z = rng.standard_normal(size=size)
        return np.exp(math.sqrt(self.log_var) * z - 0.5 * self.log_var)

    def describe(self) -> str:
        return f"lognormal(log_var={self.log_var:g})"


SigmaLaw = Union[StudentInverseGamma, DeltaGaussian, LogNormal]


def parse_law(name: str, mu: float | None = None, log_var: float | None = None) -> SigmaLaw:
    """Build a volatility law from a CLI-style name."""
    name = name.lower()
    if name == "student":
        if mu is None:
            raise ValueError("student law requires mu")
        if math.isinf(mu):
            return DeltaGaussian()
        return StudentInverseGamma(mu)
    if name == "gaussian":
        return DeltaGaussian()
    if name == "lognormal":
        if log_var is None:
            raise ValueError("lognormal law requires log_var")
        return LogNormal(log_var)
    raise ValueError(f"unknown volatility law {name!r}")


@dataclass(frozen=True)
class EnsembleParams:
    """Matrix dimensions and volatility law of a Wishart-type ensemble."""

    N: int
    T: int
    sigma_law: SigmaLaw = DeltaGaussian()

    def __post_init__(self):
        if self.N < 1 or self.T < 1:
            raise ValueError(f"need N >= 1 and T >= 1, got N={self.N}, T={self.T}")

    @classmethod
    def from_ratio(cls, N: int, Q: float, sigma_law: SigmaLaw = DeltaGaussian()) -> "EnsembleParams":
        return cls(N, int(round(Q * N)), sigma_law)

    @property
    def Q(self) -> float:
        return self.T / self.N

    @property
    def q(self) -> float:
        return self.N / self.T


@dataclass
class ReturnsMatrix:
    """``N x T`` matrix of returns, with the volatility path if it is known."""

    values: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("returns must be a 2-d array (N x T)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("returns contain non-finite entries")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]


def spawn_generators(seed, n: int) -> list[np.random.Generator]:
    """Independent generators, one per Monte Carlo sample, derived from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(n)]


def sample_sigma(law: SigmaLaw, rng: np.random.Generator, size=None):
    """Draw volatility values ``sigma > 0`` from ``law``."""
    return np.sqrt(law.sample_sigma2(rng, size=size))


def _correlation_factor(C: np.ndarray) -> np.ndarray:
    # symmetric square root; tolerates singular PSD input
    check_correlation(C)
    w, V = np.linalg.eigh(C)
    if w[0] < -1e-10 * max(w[-1], 0.0):
        raise np.linalg.LinAlgError(
            f"true correlation matrix is not positive semi-definite (min eigenvalue {w[0]:.3e})"
        )
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def sample_returns(
    params: EnsembleParams,
    rng: np.random.Generator,
    trueC: np.ndarray | None = None,
) -> ReturnsMatrix:
    """Sample an ``N x T`` elliptic returns matrix.

    Column ``t`` is ``sigma_t * sqrt(C) @ g_t`` with ``g_t`` i.i.d. standard
    Gaussian and ``sigma_t`` drawn from ``params.sigma_law``. ``trueC=None``
    means the identity.
    """
    N, T = params.N, params.T
    eta = rng.standard_normal((N, T))
    if trueC is not None:
        trueC = np.asarray(trueC, dtype=float)
        if trueC.shape != (N, N):
            raise ValueError(f"trueC has shape {trueC.shape}, expected {(N, N)}")
        eta = _correlation_factor(trueC) @ eta
    sigma = np.sqrt(params.sigma_law.sample_sigma2(rng, size=T))
    return ReturnsMatrix(eta * sigma, sigma)


def pearson_estimator(R) -> np.ndarray:
    """Pearson estimator ``E = R R^T / T`` (returns assumed zero-mean)."""
    X = R.values if isinstance(R, ReturnsMatrix) else np.asarray(R, dtype=float)
    if X.ndim != 2:
        raise ValueError("returns must be a 2-d array (N x T)")
    if not np.all(np.isfinite(X)):
        raise ValueError("returns contain non-finite entries")
    E = X @ X.T / X.shape[1]
    return 0.5 * (E + E.T)


def check_correlation(M: np.ndarray, psd: bool = False) -> np.ndarray:
    """Validate a square symmetric matrix, optionally numerically PSD."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = np.max(np.abs(M)) if M.size else 0.0
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric")
    if psd:
        w = np.linalg.eigvalsh(M)
        if w[0] < -1e-10 * max(w[-1], 0.0):
            raise ValueError(f"matrix is not positive semi-definite (min eigenvalue {w[0]:.3e})")
    return M


def eigenvalues(M: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix."""
    M = check_correlation(M)
    return np.linalg.eigvalsh(M)


def spectrum_histogram(spectra: Sequence[np.ndarray], bins) -> tuple[np.ndarray, np.ndarray]:
    """Pooled, normalised eigenvalue histogram.

    Returns ``(density, edges)``; the density integrates to one over the
    binned range (eigenvalues outside the edges are discarded).
    """
    if len(spectra) == 0:
        raise ValueError("no spectra given")
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be a strictly increasing sequence of length >= 2")
    pooled = np.concatenate([np.ravel(s) for s in spectra])
    counts, _ = np.histogram(pooled, bins=edges)
    total = counts.sum()
    if total == 0:
        raise ValueError("no eigenvalue falls inside the binned range")
    return counts / (total * np.diff(edges)), edges
