"""
Maximum-likelihood correlation estimator for multivariate Student returns.

The estimator is the fixed point of

    E* = (N + mu)/T * sum_t r_t r_t^T / (mu + r_t^T E*^-1 r_t),

solved by iteration from the trace-normalised Pearson matrix. At large N the
denominator becomes self-averaging and the estimator is a Wishart matrix of
the Gaussian components, so its spectrum is Marcenko-Pastur.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .ensemble import ReturnsMatrix, pearson_estimator

__all__ = ["MLEConfig", "MLEResult", "mle_solve", "mle_denominator_check"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MLEConfig:
    """Settings of the fixed-point solver.

    Attributes
    ----------
    mu : float
        Student tail exponent in the likelihood.
    tol : float
        Convergence threshold on the relative Frobenius change per step.
    max_iter : int
        Iteration cap.
    scheme : {"normalized", "plain"}
        ``"plain"`` iterates the map as written. ``"normalized"`` divides each
        update by the mean weight, which has the same fixed point (at the
        fixed point the mean weight is exactly one) and converges far faster.
    simplified : bool
        Use the large-N form ``w_t = N / d_t`` (``mu`` dropped). That form only
        fixes ``E*`` up to a constant, so each iterate is trace-normalised.
    normalization : {"trace", "none"}
        Post-iteration convention; ``"trace"`` rescales to ``Tr E* = N``.
    """

    mu: float
    tol: float = 1e-10
    max_iter: int = 2000
    scheme: str = "normalized"
    simplified: bool = False
    normalization: str = "trace"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.scheme not in ("normalized", "plain"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.normalization not in ("trace", "none"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if not self.mu > 0:
            raise ValueError("mu must be positive")


@dataclass
class MLEResult:
    estimate: np.ndarray
    iterations: int
    residual: float
    residuals: list = field(default_factory=list)
    ridge_events: int = 0
    monotone_violations: int = 0


class MLENonConvergence(ArithmeticError):
    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


def _factor(M, N):
    """Cholesky factor with a ridge guard for ill-conditioned iterates."""
    w = np.linalg.eigvalsh(M)
    ridged = False
    if w[0] <= 0 or w[-1] / w[0] > 1e12:
        eps = 1e-10 * np.trace(M) / N
        M = M + eps * np.eye(N)
        ridged = True
        log.info("MLE iterate ill-conditioned (cond=%.3e); added ridge %.3e", w[-1] / max(w[0], 1e-300), eps)
    return linalg.cholesky(M, lower=True), ridged


def _quadratic_forms(L, X):
    Y = linalg.solve_triangular(L, X, lower=True)
    return np.einsum("ij,ij->j", Y, Y)


def mle_solve(R, cfg: MLEConfig, return_info: bool = False):
    """Solve the Student likelihood equation for the correlation matrix.

    Parameters
    ----------
    R : ReturnsMatrix or array_like
        ``N x T`` returns with ``T > N``.
    cfg : MLEConfig
    return_info : bool
        Also return the :class:`MLEResult` with the residual history.

    Raises
    ------
    MLENonConvergence
        When ``cfg.max_iter`` is exhausted.
    """
    X = R.values if isinstance(R, ReturnsMatrix) else np.asarray(R, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("returns contain non-finite entries")
    N, T = X.shape
    if T <= N:
        raise ValueError(f"maximum likelihood needs T > N (got N={N}, T={T})")
    mu = cfg.mu
    M = pearson_estimator(X)
    M *= N / np.trace(M)
    residuals = []
    ridge_events = 0
    for it in range(1, cfg.max_iter + 1):
        L, ridged = _factor(M, N)
        ridge_events += ridged
        d = _quadratic_forms(L, X)
        if cfg.simplified:
            w = N / d
        else:
            w = (N + mu) / (mu + d)
        M_new = (X * w) @ X.T / T
        if cfg.scheme == "normalized":
            M_new /= w.mean()
        if cfg.simplified:
            M_new *= N / np.trace(M_new)
        M_new = 0.5 * (M_new + M_new.T)
        res = np.linalg.norm(M_new - M) / np.linalg.norm(M)
        if len(residuals) >= 3 and res > residuals[-1]:
            # residual went up: take a half step instead
            M_new = 0.5 * (M + M_new)
            res = 0.5 * res
        residuals.append(res)
        M = M_new
        if res <= cfg.tol:
            break
    else:
        result = MLEResult(M, cfg.max_iter, residuals[-1], residuals, ridge_events)
        raise MLENonConvergence(
            f"MLE fixed point not reached in {cfg.max_iter} iterations (last residual {residuals[-1]:.3e})", result
        )
    violations = sum(1 for a, b in zip(residuals[3:], residuals[4:]) if b > a * (1 + 1e-9) and b > 10 * cfg.tol)
    if violations:
        log.info("MLE residual increased %d times after step 3", violations)
    out = M * (N / np.trace(M)) if cfg.normalization == "trace" else M
    if return_info:
        return out, MLEResult(out, it, residuals[-1], residuals, ridge_events, violations)
    return out


def mle_denominator_check(R, Estar) -> np.ndarray:
    """Per-day denominators ``d_t = N^-1 eta_t^T E*^-1 eta_t``.

    ``eta_t`` is the day-``t`` return column divided by its volatility when
    ``R`` carries one (a :class:`ReturnsMatrix` from the sampler), otherwise
    the raw column.
    """
    if isinstance(R, ReturnsMatrix):
        X = R.values if R.sigma is None else R.values / R.sigma
    else:
        X = np.asarray(R, dtype=float)
    Estar = np.asarray(Estar, dtype=float)
    N = X.shape[0]
    try:
        L = linalg.cholesky(Estar, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError("E* is singular or not positive definite") from exc
    return _quadratic_forms(L, X) / N
