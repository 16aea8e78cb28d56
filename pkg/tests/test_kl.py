import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg
from scipy.special import digamma

from studentrmt.empirical import one_factor_correlation
from studentrmt.ensemble import EnsembleParams, StudentInverseGamma
from studentrmt.kl import (
    gaussian_kl,
    generalized_eigenvalues,
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

from conftest import random_spd


def _pair(seed, n):
    rng = np.random.default_rng(seed)
    return random_spd(rng, n), random_spd(rng, n)


# -- entropies ------------------------------------------------------------


def test_gaussian_kl_examples():
    assert gaussian_kl(np.eye(3), np.eye(3)) == 0.0
    assert abs(gaussian_kl([[2.0]], [[1.0]]) - (2 - math.log(2) - 1) / 2) < 1e-15
    assert abs(gaussian_kl([[2.0]], [[1.0]]) - 0.153426) < 1e-6


def test_gaussian_kl_matches_explicit_eigenvalues():
    C1, C2 = _pair(1, 5)
    a = np.linalg.eigvals(np.linalg.solve(C2, C1)).real
    assert abs(gaussian_kl(C1, C2) - 0.5 * np.sum(a - np.log(a) - 1)) < 1e-10


def test_generalized_eigenvalues_validation():
    with pytest.raises(ValueError):
        generalized_eigenvalues(np.eye(2), np.eye(3))
    with pytest.raises(ValueError):
        gaussian_kl(np.eye(2), np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        student_kl_largeN(np.diag([1.0, 0.0]), np.eye(2))


def test_student_kl_identity_and_scale_invariance():
    C1, C2 = _pair(2, 4)
    assert abs(student_kl_largeN(C1, C1)) < 1e-12
    assert abs(student_kl_finite(C1, C1, 5.0)) < 1e-12
    for c in (0.1, 3.0, 50.0):
        assert abs(student_kl_largeN(c * C2, C2)) < 1e-10


def test_student_large_n_spectral_function():
    C1, C2 = _pair(3, 4)
    a = np.linalg.eigvals(np.linalg.solve(C2, C1)).real
    ref = -0.5 * np.sum(np.log(a)) + 2 * math.log(a.sum() / 4)
    assert abs(student_kl_largeN(C1, C2) - ref) < 1e-10 and ref >= 0


def test_student_finite_rejects_small_mu():
    with pytest.raises(ValueError):
        student_kl_finite(np.eye(2), np.eye(2), 2.0)


def test_student_finite_gaussian_limit():
    C1, C2 = _pair(4, 5)
    assert abs(student_kl_finite(C1, C2, 1e4 * 5) / gaussian_kl(C1, C2) - 1) < 0.01


def test_student_finite_large_n_limit():
    rng = np.random.default_rng(5)
    N = 400
    A = rng.standard_normal((N, 3 * N))
    C1 = A @ A.T / (3 * N)
    C2 = np.eye(N)
    assert abs(student_kl_finite(C1, C2, 4.0) / student_kl_largeN(C1, C2) - 1) < 0.01


def test_finite_form_between_limits_is_not_monotone():
    # the interpolation in x = N/mu need not be monotone on a fixed pair
    C1, C2 = _pair(6, 6)
    vals = [student_kl_finite(C1, C2, 6 / x) for x in (1e-4, 0.1, 2.9)]
    assert abs(vals[0] / gaussian_kl(C1, C2) - 1) < 0.01
    assert vals[1] > vals[0] > vals[2]


def test_asymmetry():
    C1, C2 = _pair(7, 4)
    assert abs(gaussian_kl(C1, C2) - gaussian_kl(C2, C1)) > 1e-3


spd = st.integers(0, 2**32 - 1).flatmap(lambda s: st.integers(2, 7).map(lambda n: _pair(s, n)))


@settings(max_examples=40, deadline=None)
@given(spd)
def test_kl_non_negative(pair):
    C1, C2 = pair
    assert gaussian_kl(C1, C2) >= -1e-12
    assert student_kl_largeN(C1, C2) >= -1e-12
    assert student_kl_finite(C1, C2, 4.5) >= -1e-12


@settings(max_examples=25, deadline=None)
@given(spd, st.integers(0, 2**32 - 1))
def test_kl_conjugation_invariance(pair, seed):
    C1, C2 = pair
    n = C1.shape[0]
    A = np.random.default_rng(seed).standard_normal((n, n)) + 2 * np.eye(n)
    if np.linalg.cond(A) > 1e3:
        A = np.eye(n) + 0.1 * A
    D1, D2 = A @ C1 @ A.T, A @ C2 @ A.T
    for f in (gaussian_kl, student_kl_largeN, lambda x, y: student_kl_finite(x, y, 5.0)):
        assert abs(f(D1, D2) - f(C1, C2)) <= 1e-7 * max(1.0, abs(f(C1, C2)))


# -- benchmarks -----------------------------------------------------------


def test_z_gaussian():
    assert z_gaussian(math.inf) == 0.0
    assert abs(z_gaussian(2.0) - 0.1534) < 1e-4
    for Q in (1.5, 2.0, 3.0, 5.0):
        q = 1 / Q
        # -1/2 <log lambda>_MP in closed form
        closed = -0.5 * (-1 - (1 - q) / q * math.log(1 - q))
        assert abs(z_gaussian(Q) - closed) < 1e-8


def test_zprime_gaussian():
    assert zprime_gaussian(2.0) == 0.5
    assert zprime_gaussian(3.0) == 0.25
    assert zprime_gaussian(math.inf) == 0.0
    for Q in (1.5, 2.0, 5.0):
        assert abs(zprime_gaussian(Q, "quadrature") - zprime_gaussian(Q)) < 1e-8
    with pytest.raises(ValueError):
        zprime_gaussian(1.0)
    with pytest.raises(ValueError):
        zprime_gaussian(2.0, "series")


@pytest.mark.parametrize("mu,Q,expected", [(4, 2, 0.568792), (3, 5, 0.361961), (5, 1.5, 0.739387)])
def test_zprime_student_table_values(mu, Q, expected):
    assert abs(zprime_student(Q, mu) - expected) < 1e-3


def test_student_benchmarks_gaussian_limit():
    assert z_student(2.0, math.inf) == z_gaussian(2.0)
    assert zprime_student(2.0, math.inf) == 0.5
    b = kl_benchmarks(math.inf, 3.0)
    assert b.Zprime_over_N == 0.25


def test_z_student_log_moment_oracle():
    # Z/N from the gap-branch integral of <log lambda>, independent of the density solve
    from scipy import integrate
    from studentrmt.dos import DensityOfStates, DOSParams
    dos = DensityOfStates(DOSParams(StudentInverseGamma(4), 2.0))
    f = lambda t: 1 / (1 + t) + dos.resolvent_negative(t)
    logm = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
    assert abs(z_student(2.0, 4) - (-0.5 * logm)) < 1e-7


def test_kl_table_invariants():
    cells = kl_table([4.0], [1.5, 3.0])
    assert [c.Q for c in cells] == [1.5, 3.0]
    for c in cells:
        assert 0 <= c.Z_over_N <= c.Zprime_over_N
        assert "warning" not in c.meta
        assert abs(c.meta["mass"] - 1) < 1e-8


# -- Monte Carlo ----------------------------------------------------------


def test_mc_modes_validated():
    with pytest.raises(ValueError):
        kl_monte_carlo(EnsembleParams(5, 20), mode="E_vs_E")
    with pytest.raises(ValueError):
        kl_monte_carlo(EnsembleParams(5, 5))


def test_mc_gaussian_z_matches_exact_wishart_log_det():
    N, T = 50, 150
    m, se = kl_monte_carlo(EnsembleParams(N, T), n_samples=200, seed=2)
    exact = -0.5 / N * (digamma((T - np.arange(N)) / 2).sum() + N * math.log(2 / T))
    assert abs(m - exact) < 3 * se


def test_mc_gaussian_zprime_finite_n():
    N, T = 100, 300
    m, se = kl_monte_carlo(EnsembleParams(N, T), mode="E1_vs_E2", n_samples=100, seed=1)
    # E[E2^-1] = T/(T-N-1) C^-1 gives the exact finite-N mean (N+1)/(2(T-N-1))
    assert abs(m - (N + 1) / (2 * (T - N - 1))) < 3 * se
    assert abs(m / zprime_gaussian(3.0) - 1) < 0.02


def test_mc_c_independence_gaussian():
    N = 50
    params = EnsembleParams(N, 150)
    a, sa = kl_monte_carlo(params, None, n_samples=200, seed=2)
    b, sb = kl_monte_carlo(params, one_factor_correlation(N, 0.3), n_samples=200, seed=3)
    assert abs(a - b) < 3 * math.hypot(sa, sb)


def test_mc_student_zprime():
    m, _ = kl_monte_carlo(EnsembleParams(100, 200, StudentInverseGamma(4)), mode="E1_vs_E2", n_samples=100, seed=1)
    assert abs(m / 0.568792 - 1) < 0.05


def test_mc_self_averaging():
    sds = []
    for N in (20, 80):
        vals = [kl_monte_carlo(EnsembleParams(N, 3 * N), n_samples=2, seed=s)[0] for s in range(30)]
        sds.append(np.std(vals))
    assert sds[1] < sds[0]
