"""
Monte Carlo spectra of Pearson and maximum-likelihood estimators.

Each sample draws from its own generator spawned from the master seed, so
pooled spectra are identical whatever the number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dos import DensityOfStates, DOSParams, mp_cdf, mp_density, mp_edges
from .ensemble import DeltaGaussian, EnsembleParams, eigenvalues, pearson_estimator, sample_returns, spawn_generators
from .mle import MLEConfig, mle_solve

__all__ = [
    "default_threads",
    "sample_spectra",
    "analytic_cdf",
    "ks_distance",
    "MLESpectrumCheck",
    "mle_spectrum_vs_mp",
    "trace_inverse_mc",
]


def default_threads() -> int:
    return os.cpu_count() or 1


def _one_spectrum(params, rng, estimator, mle_cfg, trueC):
    R = sample_returns(params, rng, trueC)
    if estimator == "pearson":
        E = pearson_estimator(R)
    else:
        E = mle_solve(R, mle_cfg)
    return eigenvalues(E)


def sample_spectra(params: EnsembleParams, n_samples: int, seed=0, estimator: str = "pearson",
                   mle_cfg: MLEConfig | None = None, trueC=None, threads: int = 1) -> list[np.ndarray]:
    """Eigenvalue spectra of ``n_samples`` independent estimator draws.

    Parameters
    ----------
    estimator : {"pearson", "mle"}
    mle_cfg : MLEConfig, optional
        Required for ``estimator="mle"``.
    threads : int
        Worker threads; results do not depend on it.
    """
    if estimator not in ("pearson", "mle"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if estimator == "mle" and mle_cfg is None:
        raise ValueError("estimator='mle' needs an MLEConfig")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rngs = spawn_generators(seed, n_samples)
    if threads <= 1:
        return [_one_spectrum(params, r, estimator, mle_cfg, trueC) for r in rngs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: _one_spectrum(params, r, estimator, mle_cfg, trueC), rngs))


def analytic_cdf(sigma_law, Q: float, lam_max: float | None = None, points: int = 1200):
    """Vectorised limiting CDF of the Pearson spectrum for ``sigma_law``.

    Marcenko-Pastur in closed form for constant volatility; otherwise a
    table of the solved density, extended past its last point by the
    power-law survival of the tail.
    """
    if isinstance(sigma_law, DeltaGaussian):
        q = 1.0 / Q
        return lambda x: mp_cdf(x, q)
    dos = DensityOfStates(DOSParams(sigma_law, Q))
    lam, F = dos.cdf_table(lam_max=lam_max, points=points)
    lam_end, surv_end = lam[-1], 1.0 - F[-1]
    try:
        slope = dos.law.shape
    except AttributeError:
        slope = None

    def cdf(x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, lam, F, left=0.0, right=F[-1])
        far = x > lam_end
        if np.any(far) and slope is not None:
            out[far] = 1.0 - surv_end * (x[far] / lam_end) ** (-slope)
        return out

    return cdf


def ks_distance(samples, cdf) -> float:
    """Kolmogorov-Smirnov sup distance between the pooled sample and ``cdf``."""
    pooled = np.concatenate([np.ravel(s) for s in samples]) if isinstance(samples, (list, tuple)) else samples
    return float(stats.kstest(np.asarray(pooled, dtype=float), cdf).statistic)


@dataclass
class MLESpectrumCheck:
    density: np.ndarray
    edges: np.ndarray
    mp_curve: np.ndarray
    ks: float
    max_eigenvalue: float
    n_samples: int


def mle_spectrum_vs_mp(params: EnsembleParams, n_samples: int, mu: float | None = None, seed=0, bins: int = 60,
                       threads: int = 1, cfg: MLEConfig | None = None) -> MLESpectrumCheck:
    """Pooled maximum-likelihood spectra against the Marcenko-Pastur law.

    ``mu`` defaults to the tail exponent of the ensemble's Student law.
    """
    if params.T <= params.N:
        raise ValueError("need T > N")
    if cfg is None:
        if mu is None:
            mu = getattr(params.sigma_law, "mu", None)
            if mu is None:
                raise ValueError("mu is required for non-Student ensembles")
        cfg = MLEConfig(mu=mu)
    spectra = sample_spectra(params, n_samples, seed, "mle", cfg, threads=threads)
    pooled = np.concatenate(spectra)
    q = params.q
    lo, hi = mp_edges(q)
    edges = np.linspace(0.0, max(hi * 1.3, pooled.max() * 1.001), bins + 1)
    counts, _ = np.histogram(pooled, bins=edges)
    density = counts / (pooled.size * np.diff(edges))
    centers = 0.5 * (edges[1:] + edges[:-1])
    return MLESpectrumCheck(density, edges, mp_density(centers, q), ks_distance(pooled, lambda x: mp_cdf(x, q)),
                            float(pooled.max()), n_samples)


def trace_inverse_mc(N: int, Q: float, n_samples: int = 20, seed=0) -> tuple[float, float]:
    """Monte Carlo mean and standard error of ``N^-1 Tr E^-1`` for Gaussian Wishart matrices."""
    params = EnsembleParams.from_ratio(N, Q)
    values = np.empty(n_samples)
    for k, rng in enumerate(spawn_generators(seed, n_samples)):
        E = pearson_estimator(sample_returns(params, rng))
        values[k] = np.trace(np.linalg.inv(E)) / N
    err = values.std(ddof=1) / math.sqrt(n_samples) if n_samples > 1 else float("nan")
    return float(values.mean()), float(err)
