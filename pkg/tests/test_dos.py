import math

import numpy as np
import pytest
from scipy import integrate, special

from studentrmt.dos import (
    BULK,
    GAP,
    TAIL,
    DensityOfStates,
    DOSParams,
    dos_curve,
    left_edge,
    mp_cdf,
    mp_density,
    mp_edges,
    right_edge_or_none,
    solve_dos_point,
    tail_density,
)
from studentrmt.ensemble import DeltaGaussian, EnsembleParams, LogNormal, StudentInverseGamma

S6 = DOSParams(StudentInverseGamma(6), 2.0)


# -- Marcenko-Pastur ------------------------------------------------------


def test_mp_density_examples():
    assert abs(mp_density(1.0, 0.5) - math.sqrt(1.75) / math.pi) < 1e-14
    assert mp_density(3.0, 0.5) == 0.0
    lo, hi = mp_edges(0.5)
    assert mp_density(lo, 0.5) == 0.0 and mp_density(hi, 0.5) == 0.0


def test_mp_edges_examples():
    assert mp_edges(0.0) == (1.0, 1.0)
    assert np.allclose(mp_edges(0.25), (0.25, 2.25))
    assert np.allclose(mp_edges(0.5), (0.085786, 2.914214), atol=1e-6)
    for q in (1.0, 1.5, -0.1):
        with pytest.raises(ValueError):
            mp_edges(q)


@pytest.mark.parametrize("q", [0.2, 0.5, 0.8])
def test_mp_normalised_and_cdf(q):
    lo, hi = mp_edges(q)
    mass, _ = integrate.quad(lambda x: mp_density(x, q), lo, hi, limit=200)
    mean, _ = integrate.quad(lambda x: x * mp_density(x, q), lo, hi, limit=200)
    assert abs(mass - 1) < 1e-8 and abs(mean - 1) < 1e-8
    for x in np.linspace(lo, hi, 7):
        ref, _ = integrate.quad(lambda y: mp_density(y, q), lo, x, limit=200)
        assert abs(mp_cdf(x, q) - ref) < 1e-8
    assert mp_cdf(lo - 1e-3, q) == 0.0 and mp_cdf(hi + 1.0, q) == 1.0


# -- delta-law reduction --------------------------------------------------


@pytest.mark.parametrize("Q", [1.5, 2.0, 2.5, 5.0])
def test_delta_law_reproduces_mp(Q):
    q = 1 / Q
    lo, hi = mp_edges(q)
    lam = np.linspace(lo, hi, 52)[1:-1]
    grid = dos_curve(DOSParams(DeltaGaussian(), Q), lam)
    assert np.max(np.abs(grid.rho - mp_density(lam, q))) < 1e-8
    assert abs(left_edge(DOSParams(DeltaGaussian(), Q)) - lo) < 1e-8
    assert abs(right_edge_or_none(DOSParams(DeltaGaussian(), Q)) - hi) < 1e-12


def test_delta_law_gap_branch_is_mp_resolvent():
    Q = 2.0
    q = 1 / Q
    for lam in (0.02, 3.5, 10.0):
        p = solve_dos_point(lam, DOSParams(DeltaGaussian(), Q))
        # real MP resolvent outside the support
        disc = math.sqrt((lam - 1 - q) ** 2 - 4 * q)
        G = (lam + q - 1 - math.copysign(disc, lam - 1 - q)) / (2 * q * lam)
        assert p.branch == GAP and p.rho == 0.0
        assert abs(p.G_R - G) < 1e-10


def test_lognormal_small_variance_is_mp():
    Q = 2.0
    dos = DensityOfStates(DOSParams(LogNormal(1e-6), Q))
    lo, hi = mp_edges(1 / Q)
    assert abs(dos.left_edge() - lo) < 1e-3
    lam = np.linspace(0.3, 2.5, 5)
    assert np.max(np.abs(dos.curve(lam).rho - mp_density(lam, 1 / Q))) < 2e-3


def test_no_right_edge_for_fat_laws():
    assert right_edge_or_none(S6) is None
    assert right_edge_or_none(DOSParams(LogNormal(0.5), 2.0)) is None
    assert abs(right_edge_or_none(DOSParams(DeltaGaussian(), 2.0)) - 2.914214) < 1e-6


# -- Student law ----------------------------------------------------------


def test_accepts_ensemble_params():
    p = EnsembleParams(100, 200, StudentInverseGamma(6))
    assert left_edge(p) == left_edge(S6)
    with pytest.raises(ValueError):
        DOSParams(StudentInverseGamma(6), 1.0)


def test_gap_branch_below_left_edge():
    dos = DensityOfStates(S6)
    lam_min = dos.left_edge()
    for lam in (0.2 * lam_min, 0.9 * lam_min):
        p = dos.solve(lam)
        assert p.branch == GAP and p.rho == 0.0 and p.G_R < 0
        assert abs(1 / p.G_R + dos.kernel(p.G_R)[0].real - lam) < 1e-10


def test_coupled_equations_residual():
    dos = DensityOfStates(S6)
    for lam in (0.1, 0.5, 1.0, 3.0, 10.0):
        p = dos.solve(lam)
        G = complex(p.G_R, math.pi * p.rho)
        assert p.branch == BULK and p.rho > 0
        assert abs(dos.blue(G)[0] - lam) < 1e-10


def test_warm_start_agrees_with_continuation():
    dos = DensityOfStates(S6)
    a = dos.solve(1.0)
    b = dos.solve(1.0, init=(a.G_R * 1.05, a.rho * 0.95))
    assert abs(a.G_R - b.G_R) < 1e-10 and abs(a.rho - b.rho) < 1e-10


def test_left_edge_is_maximum_of_real_branch():
    dos = DensityOfStates(S6)
    g, lam_min = dos.edge()
    assert abs(dos._stationarity(g)) < 1e-10
    assert dos._h(g * 1.01) < lam_min and dos._h(g * 0.99) < lam_min
    # density switches on at the edge
    assert dos.solve(lam_min * (1 + 1e-6)).rho < 1e-2
    assert dos.solve(lam_min * (1 + 1e-2)).rho > 0


def test_left_edge_gaussian_limit():
    lo, _ = mp_edges(0.5)
    edges = [left_edge(DOSParams(StudentInverseGamma(mu), 2.0)) for mu in (6, 20, 100, 300)]
    gaps = [abs(e - lo) for e in edges]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


@pytest.mark.parametrize("a", [1.25, 2.5, 10.0, 50.0, 150.0])
def test_closed_kernel_accurate_for_large_shape(a):
    from studentrmt.dos import _student_stieltjes
    from studentrmt.quadrature import gamma_weight_stieltjes
    for w in (-0.5, -5.0, -50.0, -200.0, 0.5 + 0.1j, 30 + 1j):
        ref = gamma_weight_stieltjes(w, 2 * a)
        assert abs(_student_stieltjes(complex(w), a)[0] - ref) <= 1e-12 * abs(ref)


def test_quadrature_kernel_agrees_with_closed_form():
    a = DensityOfStates(S6)
    b = DensityOfStates(S6, kernel="quadrature")
    for lam in (0.3, 2.0):
        pa, pb = a.solve(lam), b.solve(lam)
        assert abs(pa.rho - pb.rho) < 1e-8 and abs(pa.G_R - pb.G_R) < 1e-8
    assert abs(a.left_edge() - b.left_edge()) < 1e-9


def test_tail_examples():
    assert abs(tail_density(10.0, S6) - 1e-4) < 1e-16
    lam = np.geomspace(5, 500, 7)
    assert np.allclose(tail_density(lam, S6), lam ** -4.0, rtol=1e-13)
    for mu, Q in [(3, 1.5), (5, 4.0)]:
        y = tail_density(lam, DOSParams(StudentInverseGamma(mu), Q))
        slope = np.polyfit(np.log(lam), np.log(y), 1)[0]
        assert abs(slope + 1 + mu / 2) < 1e-12
    with pytest.raises(ValueError):
        tail_density(10.0, DOSParams(DeltaGaussian(), 2.0))


def test_solved_density_approaches_tail_law():
    dos = DensityOfStates(S6)
    ratios = [dos.solve(lam).rho / dos.tail(lam) for lam in (10.0, 100.0, 1000.0, 5000.0)]
    # subleading correction of relative order 1/lambda
    assert all(r > 1 for r in ratios)
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    assert abs(ratios[-1] - 1) < 1e-2


@pytest.mark.parametrize("mu,Q", [(3, 1.5), (4, 2.5), (6, 5.0)])
def test_asymptotic_tail_slope(mu, Q):
    dos = DensityOfStates(DOSParams(StudentInverseGamma(mu), Q))
    lam = np.geomspace(2e3, 2e4, 6)
    rho = np.array([G.imag for G in dos._bulk_solutions(lam)]) / math.pi
    slope = np.polyfit(np.log(lam), np.log(rho), 1)[0]
    assert abs(slope + 1 + mu / 2) < 0.01


def test_rare_event_identity():
    # one day with a huge sigma*: lambda ~ sigma*^2 / Q, so rho dlambda = Q P(s) ds with s = mu_bar / (Q lambda)
    law = StudentInverseGamma(6)
    Q, a, mb = 2.0, law.shape, law.mu_bar
    for lam in (100.0, 1000.0, 10000.0):
        s = mb / (Q * lam)
        P = math.exp((a - 1) * math.log(s) - s - special.gammaln(a))
        rare = Q * P * mb / (Q * lam * lam)
        assert abs(rare / tail_density(lam, S6) - 1) < 0.05


def test_rho_lambda_vanishes():
    dos = DensityOfStates(S6)
    vals = [dos.solve(lam).rho * lam for lam in (10.0, 100.0, 1000.0)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-8


def test_curve_branch_tags_and_continuity():
    dos = DensityOfStates(S6)
    lam_min = dos.left_edge()
    cut = dos.tail_crossover(0.02)
    lam = np.concatenate([np.linspace(0.5 * lam_min, 4.0, 200), np.geomspace(4.5, 2 * cut, 30)])
    grid = dos.curve(lam, tail_rtol=0.02)
    assert grid.lam_cut == cut
    assert set(grid.branch) == {GAP, BULK, TAIL}
    assert np.all(grid.rho[grid.branch == GAP] == 0)
    assert np.all(grid.lam[grid.branch == GAP] <= lam_min)
    assert np.all(grid.rho[grid.branch == BULK] > 0)
    # density jump at the bulk/tail switch is within the 2% crossover tolerance
    i = np.flatnonzero(grid.branch == TAIL)[0]
    assert abs(grid.rho[i] / dos.solve(grid.lam[i]).rho - 1) < 0.02
    assert len(grid.points()) == lam.size
    with pytest.raises(ValueError):
        dos.curve([1.0, 0.5])


@pytest.mark.parametrize("mu,Q", [(3, 1.5), (4, 2.0), (6, 2.0), (5, 5.0)])
def test_moments_normalised(mu, Q):
    m = DensityOfStates(DOSParams(StudentInverseGamma(mu), Q)).moments()
    assert abs(m.mass - 1) < 1e-8
    assert abs(m.mean - 1) < 1e-7


def test_moments_against_real_axis_oracle():
    # <1/lambda> = -G(0) and <log lambda> = int_0^inf [1/(1+t) + G(-t)] dt use only the gap branch
    dos = DensityOfStates(DOSParams(StudentInverseGamma(4), 2.0))
    m = dos.moments()
    assert abs(m.inverse + dos.resolvent_negative(0.0)) < 1e-8
    f = lambda t: 1 / (1 + t) + dos.resolvent_negative(t)
    ref = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
    assert abs(m.log - ref) < 1e-7


def test_lognormal_moments():
    m = DensityOfStates(DOSParams(LogNormal(0.5), 2.0)).moments()
    assert abs(m.mass - 1) < 1e-6 and abs(m.mean - 1) < 1e-5


def test_cdf_table_monotone_and_complete():
    lam, F = DensityOfStates(S6).cdf_table(lam_max=50.0, points=600)
    assert F[0] == 0 and np.all(np.diff(F) >= -1e-12)
    surv = integrate.quad(lambda x: x ** -4.0, 50.0, np.inf)[0]
    # survival beyond 50 is close to the pure tail law
    assert abs((1 - F[-1]) / surv - 1) < 0.1
