"""
Analytic density of states of Wishart-type correlation matrices.

The resolvent ``G(z) = N^-1 Tr (z - E)^-1`` of the Pearson matrix of elliptic
returns ``r = sigma * eta`` is the functional inverse of the Blue function

    B(G) = 1/G + < v / (1 - v G / Q) >,     v = sigma^2,

averaged over the volatility law. On the real axis ``G(lambda - i0) =
G_R + i pi rho``, so the density follows from solving ``B(G) = lambda`` for
``G`` in the upper half plane (the real and imaginary parts of this complex
equation are the two coupled equations on ``G_R`` and ``rho``). When no such
root exists the density vanishes and ``G`` is the real root of the same
equation.

For the Student law ``v = mu_bar / s`` with ``s ~ Gamma(mu/2)``, so the
average is ``mu_bar * I(mu_bar G / Q)`` with the Stieltjes transform

    I(w) = int P(s) / (s - w) ds = c^(a-1) e^c Gamma(1-a, c),   c = -w, a = mu/2,

evaluated in closed form with :mod:`mpmath`. The same integral is available
by Gamma-weight quadrature (``kernel="quadrature"``), which is also the only
route for the log-normal law.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate, optimize, special

from .ensemble import DeltaGaussian, EnsembleParams, LogNormal, SigmaLaw, StudentInverseGamma
from .quadrature import gamma_weight_stieltjes

__all__ = [
    "ConvergenceError",
    "DOSParams",
    "SpectrumPoint",
    "SpectrumGrid",
    "SpectralMoments",
    "DensityOfStates",
    "mp_density",
    "mp_edges",
    "mp_cdf",
    "solve_dos_point",
    "left_edge",
    "right_edge_or_none",
    "tail_density",
    "tail_amplitude",
    "dos_curve",
    "density_of_states",
]

log = logging.getLogger(__name__)

GAP, BULK, TAIL = "gap", "bulk", "tail-asymptotic"


class ConvergenceError(ArithmeticError):
    """A root or fixed-point search failed; carries the diagnostic state."""

    def __init__(self, message, lam=None, residual=None, branch=None):
        super().__init__(message)
        self.lam = lam
        self.residual = residual
        self.branch = branch


# ---------------------------------------------------------------------------
# Marcenko-Pastur
# ---------------------------------------------------------------------------


def _check_q(q):
    if not 0 < q < 1:
        raise ValueError(f"Marcenko-Pastur law needs 0 < q < 1, got q={q}")


def mp_edges(q: float) -> tuple[float, float]:
    """Support ``((1-sqrt q)^2, (1+sqrt q)^2)`` of the Marcenko-Pastur law."""
    if q == 0:
        return 1.0, 1.0
    _check_q(q)
    r = math.sqrt(q)
    return (1.0 - r) ** 2, (1.0 + r) ** 2


def mp_density(lam, q: float):
    """Marcenko-Pastur density for aspect ratio ``q = N/T < 1``."""
    _check_q(q)
    lam = np.asarray(lam, dtype=float)
    lo, hi = mp_edges(q)
    inside = (lam > lo) & (lam < hi)
    safe = np.where(inside, lam, 1.0)
    rho = np.sqrt(np.clip(4 * safe * q - (safe - 1 + q) ** 2, 0, None)) / (2 * np.pi * safe * q)
    out = np.where(inside, rho, 0.0)
    return out.item() if out.ndim == 0 else out


def mp_cdf(lam, q: float):
    """Cumulative distribution of the Marcenko-Pastur law (closed form)."""
    _check_q(q)
    lam = np.asarray(lam, dtype=float)
    lo, hi = mp_edges(q)
    x = np.clip(lam, lo, hi)
    # int sqrt((hi-x)(x-lo))/x dx = R + m asin((2x-lo-hi)/(hi-lo)) - sqrt(lo hi) asin(((lo+hi)x - 2 lo hi)/(x (hi-lo)))
    m, s = 0.5 * (lo + hi), math.sqrt(lo * hi)
    R = np.sqrt(np.clip((hi - x) * (x - lo), 0, None))
    xs = np.where(x > 0, x, 1.0)
    t1 = np.arcsin(np.clip((2 * x - lo - hi) / (hi - lo), -1, 1))
    t2 = np.arcsin(np.clip(((lo + hi) * xs - 2 * lo * hi) / (xs * (hi - lo)), -1, 1))
    F = (R + m * t1 - s * t2 + 0.5 * np.pi * (m - s)) / (2 * np.pi * q)
    F = np.where(lam <= lo, 0.0, np.where(lam >= hi, 1.0, F))
    return F.item() if F.ndim == 0 else F


# ---------------------------------------------------------------------------
# Parameters and containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DOSParams:
    """Large-N ensemble description: volatility law and ``Q = T/N``."""

    sigma_law: SigmaLaw
    Q: float

    def __post_init__(self):
        if not self.Q > 1:
            raise ValueError(f"the density of states is computed for Q > 1, got Q={self.Q}")

    @property
    def q(self) -> float:
        return 1.0 / self.Q


def _as_params(params) -> DOSParams:
    if isinstance(params, DOSParams):
        return params
    if isinstance(params, EnsembleParams):
        return DOSParams(params.sigma_law, params.Q)
    raise TypeError(f"expected DOSParams or EnsembleParams, got {type(params).__name__}")


@dataclass(frozen=True)
class SpectrumPoint:
    lam: float
    G_R: float
    rho: float
    branch: str


@dataclass
class SpectrumGrid:
    """Sampled density of states."""

    lam: np.ndarray
    G_R: np.ndarray
    rho: np.ndarray
    branch: np.ndarray
    params: DOSParams
    lam_cut: float | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.lam)

    def points(self) -> list[SpectrumPoint]:
        return [SpectrumPoint(*row) for row in zip(self.lam, self.G_R, self.rho, self.branch)]


@dataclass(frozen=True)
class SpectralMoments:
    """``int rho``, ``int lambda rho``, ``int rho / lambda`` and ``int rho log lambda``."""

    mass: float
    mean: float
    inverse: float
    log: float
    lam_cut: float | None


# ---------------------------------------------------------------------------
# Law-specific kernels  K(G) = <v/(1 - vG/Q)>,  K'(G)
# ---------------------------------------------------------------------------


def _student_stieltjes(w: complex, a: float):
    """``I(w) = int P(s)/(s-w) ds`` and ``I'(w)`` for the Gamma(a) law."""
    if w == 0:
        inv = 1.0 / (a - 1.0)
        dinv = 1.0 / ((a - 1.0) * (a - 2.0)) if a > 2 else math.inf
        return inv, dinv
    if w.imag == 0 and w.real < 0:
        c = mpmath.mpf(-w.real)
    else:
        c = -mpmath.mpc(w.real, w.imag)
    try:
        val = _incomplete_gamma_form(c, a)
    except (ValueError, ArithmeticError):
        val = None
    if val is None:
        # hypergeometric series did not settle; integrate instead
        mu = 2.0 * a
        return gamma_weight_stieltjes(w, mu, 1), gamma_weight_stieltjes(w, mu, 2)
    dval = 1 / c - val * (1 + (a - 1) / c)
    return complex(val), complex(dval)


def _incomplete_gamma_form(c, a):
    """``c^(a-1) e^c Gamma(1-a, c)``, with extra working precision when ``a > 3``.

    For larger ``a`` the three factors are huge and cancel, so the value is
    recomputed at increasing precision until two levels agree.
    """
    if a <= 3:
        return c ** (a - 1) * mpmath.exp(c) * mpmath.gammainc(1 - a, c)
    prev = None
    for extra in (10, 30, 70, 150):
        with mpmath.workdps(15 + extra + int(a)):
            val = c ** (a - 1) * mpmath.exp(c) * mpmath.gammainc(1 - a, c)
        if prev is not None and abs(val - prev) <= 1e-15 * abs(val):
            return val
        prev = val
    return None


def _lognormal_average(G: complex, Q: float, omega: float, zmax: float = 12.0) -> complex:
    """``E[v / (1 - vG/Q)]`` for ``v = exp(omega z - omega^2/2)``, z standard normal.

    The integrand has a pole at ``v(z_p) = Q/G``; when it approaches the real
    axis its principal part is integrated analytically.
    """
    norm = 1.0 / math.sqrt(2 * math.pi)

    def f(z):
        v = cmath.exp(omega * z - 0.5 * omega * omega)
        return norm * cmath.exp(-0.5 * z * z) * v / (1.0 - v * G / Q)

    zp = (cmath.log(Q / G) + 0.5 * omega * omega) / omega if G != 0 else None
    opts = dict(limit=400, epsabs=1e-14, epsrel=1e-12, complex_func=True)
    if zp is None or abs(zp.imag) > 1.0 or abs(zp.real) > zmax:
        return integrate.quad(f, -zmax, zmax, **opts)[0]
    # residue of the pole: 1 - vG/Q ~ -omega (z - z_p)
    c = norm * cmath.exp(-0.5 * zp * zp) * (Q / G) / (-omega)
    value = integrate.quad(lambda z: f(z) - c / (z - zp), -zmax, zmax, points=[zp.real], **opts)[0]
    return value + c * (cmath.log(zmax - zp) - cmath.log(-zmax - zp))


class DensityOfStates:
    """Solver for the limiting spectrum of one (law, Q) ensemble.

    Parameters
    ----------
    params : DOSParams or EnsembleParams
    kernel : {"auto", "closed", "quadrature"}
        How the volatility average is computed. ``"auto"`` uses the closed
        form for the Student and delta laws and quadrature otherwise.
    tol : float
        Absolute residual tolerance on ``B(G) - lambda``.
    max_iter : int
        Newton iteration cap per point.
    """

    def __init__(self, params, kernel: str = "auto", tol: float = 1e-10, max_iter: int = 200):
        self.params = _as_params(params)
        self.law = self.params.sigma_law
        self.Q = self.params.Q
        if kernel not in ("auto", "closed", "quadrature"):
            raise ValueError(f"unknown kernel {kernel!r}")
        if kernel == "closed" and isinstance(self.law, LogNormal):
            raise ValueError("no closed-form kernel for the log-normal law")
        self.kernel_mode = kernel
        self.tol = tol
        self.max_iter = max_iter
        self._edge = None
        self._cuts = {}
        self.diagnostics: list[str] = []

    # -- kernels -----------------------------------------------------------

    def kernel(self, G: complex) -> tuple[complex, complex]:
        """Return ``K(G) = <v/(1 - vG/Q)>`` and its derivative."""
        law, Q = self.law, self.Q
        if isinstance(law, DeltaGaussian):
            d = 1.0 - G / Q
            return 1.0 / d, 1.0 / (Q * d * d)
        if isinstance(law, StudentInverseGamma):
            mb = law.mu_bar
            w = mb * G / Q
            if self.kernel_mode == "quadrature":
                I = gamma_weight_stieltjes(w, law.mu, 1)
                dI = gamma_weight_stieltjes(w, law.mu, 2)
            else:
                I, dI = _student_stieltjes(complex(w), law.shape)
            return mb * I, mb * mb / Q * dI
        if isinstance(law, LogNormal):
            return self._lognormal_kernel(G)
        raise TypeError(f"unsupported volatility law {law!r}")

    def _lognormal_kernel(self, G):
        omega = math.sqrt(self.law.log_var)
        if omega == 0:
            d = 1.0 - G / self.Q
            return 1.0 / d, 1.0 / (self.Q * d * d)
        K = _lognormal_average(complex(G), self.Q, omega)
        # derivative only steers Newton and the edge search; central difference suffices
        h = 1e-5 * max(abs(G), 1e-3)
        dK = (_lognormal_average(complex(G) + h, self.Q, omega) - _lognormal_average(complex(G) - h, self.Q, omega)) / (2 * h)
        if isinstance(G, float) or (isinstance(G, complex) and G.imag == 0):
            return K.real, dK.real
        return K, dK

    def blue(self, G):
        """Blue function ``B(G)`` and ``B'(G)``."""
        K, dK = self.kernel(G)
        return 1.0 / G + K, -1.0 / (G * G) + dK

    # -- real axis ---------------------------------------------------------

    def _h(self, g: float) -> float:
        return (1.0 / g + self.kernel(g)[0]).real

    def _stationarity(self, g: float) -> float:
        # g^2 K'(g) - 1: zero where the real-axis Blue function is extremal
        return (g * g * self.kernel(g)[1]).real - 1.0

    def _left_extremum(self) -> float:
        Q = self.Q
        lo, hi = -Q, -1e-6
        while self._stationarity(lo) <= 0:
            lo *= 4.0
            if lo < -1e12:
                raise ConvergenceError("could not bracket the left edge maximum", branch=GAP)
        while self._stationarity(hi) >= 0:
            hi *= 0.1
            if hi > -1e-14:
                raise ConvergenceError("could not bracket the left edge maximum", branch=GAP)
        scan = -np.geomspace(-lo, -hi, 40)
        signs = np.sign([self._stationarity(g) for g in scan])
        changes = int(np.count_nonzero(np.diff(signs)))
        if changes > 1:
            msg = f"left-edge stationarity has {changes} sign changes; using the one closest to G=0"
            log.warning(msg)
            self.diagnostics.append(msg)
            idx = np.nonzero(np.diff(signs))[0][-1]
            lo, hi = scan[idx], scan[idx + 1]
        return optimize.brentq(self._stationarity, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)

    def edge(self) -> tuple[float, float]:
        """``(G*, lambda_min)`` at the maximum of the real-axis Blue function."""
        if self._edge is None:
            if isinstance(self.law, DeltaGaussian):
                g = -self.Q / (math.sqrt(self.Q) - 1.0)
            else:
                g = self._left_extremum()
            self._edge = (g, self._h(g))
        return self._edge

    def left_edge(self) -> float:
        return self.edge()[1]

    def right_edge(self) -> float | None:
        if isinstance(self.law, DeltaGaussian):
            return mp_edges(self.params.q)[1]
        if isinstance(self.law, LogNormal) and self.law.log_var == 0:
            return mp_edges(self.params.q)[1]
        return None

    def real_root(self, lam: float) -> float:
        """Real ``G`` outside the bulk (``rho = 0``)."""
        lam_max = self.right_edge()
        if lam_max is not None and lam > lam_max:
            g_star = self.Q / (math.sqrt(self.Q) + 1.0)
            return optimize.brentq(lambda g: self._h(g) - lam, 1e-300 + 0.5 / (abs(lam) + 2.0) * 1e-3, g_star,
                                   xtol=1e-16, rtol=1e-15, maxiter=500)
        g_star, lam_min = self.edge()
        if lam > lam_min:
            raise ValueError(f"lambda={lam} is inside the bulk (left edge {lam_min})")
        if lam == lam_min:
            return g_star
        hi = -0.5 / (abs(lam) + 2.0)
        while self._h(hi) >= lam:
            hi *= 0.5
        return optimize.brentq(lambda g: self._h(g) - lam, g_star, hi, xtol=1e-16, rtol=1e-15, maxiter=500)

    def resolvent_negative(self, t: float) -> float:
        """``G(-t) = -<1/(lambda + t)>`` for ``t >= 0``."""
        return self.real_root(-t)

    # -- complex branch ----------------------------------------------------

    def _newton(self, lam: float, G0: complex) -> tuple[complex, float]:
        tol = max(self.tol, 64 * np.finfo(float).eps * abs(lam))
        G = complex(G0)
        if G.imag <= 0:
            raise ValueError("Newton start must lie in the upper half plane")
        B, dB = self.blue(G)
        r = B - lam
        for _ in range(self.max_iter):
            if abs(r) <= tol:
                return G, abs(r)
            step = r / dB
            t = 1.0
            while True:
                Gn = G - t * step
                if Gn.imag > 0:
                    Bn, dBn = self.blue(Gn)
                    rn = Bn - lam
                    if abs(rn) < abs(r) or t < 1e-6:
                        break
                t *= 0.5
                if t < 1e-12:
                    raise ConvergenceError("Newton step left the upper half plane", lam, abs(r), BULK)
            G, B, dB, r = Gn, Bn, dBn, rn
        raise ConvergenceError(f"Newton did not converge at lambda={lam} (residual {abs(r):.3e})", lam, abs(r), BULK)

    def _edge_start(self, lam: float) -> complex:
        g, lam_min = self.edge()
        d = 1e-4 * max(abs(g), 1e-3)
        d2 = ((-1 / (g + d) ** 2 + self.kernel(g + d)[1]) - (-1 / (g - d) ** 2 + self.kernel(g - d)[1])).real / (2 * d)
        return complex(g, math.sqrt(2 * max(lam - lam_min, 0.0) / abs(d2)))

    def _continue(self, lams, G_prev=None, lam_prev=None):
        """Yield bulk solutions along increasing ``lams`` by continuation."""
        _, lam_min = self.edge()
        hist = []
        if G_prev is not None:
            hist.append((lam_prev, G_prev))
        for lam in lams:
            targets = [lam]
            while targets:
                target = targets[-1]
                if hist:
                    lp, Gp = hist[-1]
                    if len(hist) > 1:
                        lpp, Gpp = hist[-2]
                        guess = Gp + (Gp - Gpp) * (target - lp) / (lp - lpp)
                        if guess.imag <= 0:
                            guess = Gp
                    else:
                        guess = Gp
                else:
                    lp = lam_min
                    guess = self._edge_start(target)
                try:
                    G, _ = self._newton(target, guess)
                    ok = G.imag > 0
                except ConvergenceError:
                    ok = False
                if ok and hist:
                    # reject jumps to a different branch
                    Gp = hist[-1][1]
                    ok = abs(G - Gp) < 0.5 * abs(Gp) + 10 * abs(target - lp) * max(abs(Gp) ** 2, 1.0)
                if ok:
                    hist.append((target, G))
                    hist = hist[-2:]
                    targets.pop()
                    continue
                gap = target - (hist[-1][0] if hist else lam_min)
                if gap < 1e-9 * max(1.0, target):
                    raise ConvergenceError(f"continuation stalled at lambda={target}", target, None, BULK)
                targets.append(target - 0.5 * gap)
            yield lam, hist[-1][1]

    def solve(self, lam: float, init: complex | tuple | None = None) -> SpectrumPoint:
        """Solve for ``(G_R, rho)`` at one ``lambda``."""
        lam = float(lam)
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        g_star, lam_min = self.edge()
        lam_max = self.right_edge()
        if lam <= lam_min or (lam_max is not None and lam >= lam_max):
            return SpectrumPoint(lam, self.real_root(lam), 0.0, GAP)
        if init is not None:
            G0 = complex(init[0], math.pi * init[1]) if isinstance(init, tuple) else complex(init)
            if G0.imag > 0:
                try:
                    G, _ = self._newton(lam, G0)
                    if G.imag > 0:
                        return SpectrumPoint(lam, G.real, G.imag / math.pi, BULK)
                except ConvergenceError:
                    pass
        # continuation from the left edge
        path = lam_min + (lam - lam_min) * np.geomspace(1e-6, 1.0, 40)
        for _, G in self._continue(path):
            pass
        return SpectrumPoint(lam, G.real, G.imag / math.pi, BULK)

    # -- tail --------------------------------------------------------------

    def tail_amplitude(self) -> float:
        law = self.law
        if not isinstance(law, StudentInverseGamma):
            raise ValueError("the power-law tail is only defined for the Student law")
        a = law.shape
        return math.exp(a * math.log(law.mu_bar) - special.gammaln(a) - (a - 1.0) * math.log(self.Q))

    def tail(self, lam):
        a = self.law.shape if isinstance(self.law, StudentInverseGamma) else None
        A = self.tail_amplitude()
        return A * np.asarray(lam, dtype=float) ** (-1.0 - a)

    def tail_crossover(self, rtol: float = 0.02, start: float | None = None, max_lam: float = 1e8) -> float:
        """Smallest scanned ``lambda`` beyond which the solved density matches the tail law within ``rtol``."""
        key = round(rtol, 12)
        if key in self._cuts:
            return self._cuts[key]
        _, lam_min = self.edge()
        lam0 = max(start if start is not None else 10.0 / self.Q, 2.0 * lam_min)
        lams = lam0 * 1.25 ** np.arange(0, int(math.log(max_lam / lam0) / math.log(1.25)) + 2)
        tail = self.tail(lams)
        found, streak = None, 0
        pre = lam_min + (lam0 - lam_min) * np.geomspace(1e-6, 1.0, 30)[:-1]
        it = self._continue(np.concatenate([pre, lams]))
        for _ in pre:
            next(it)
        for k, (lam, G) in enumerate(it):
            rel = abs(G.imag / math.pi / tail[k] - 1.0)
            if rel < rtol:
                streak += 1
                if found is None:
                    found = lam
                if streak >= 3:
                    break
            else:
                found, streak = None, 0
        if found is None:
            raise ConvergenceError(f"tail law not reached within rtol={rtol} below lambda={max_lam:g}", max_lam, None, TAIL)
        self._cuts[key] = float(found)
        return float(found)

    # -- curves and integrals ---------------------------------------------

    def curve(self, lam_grid, tail_rtol: float | None = 0.02) -> SpectrumGrid:
        """Solve on an increasing grid, switching to the tail law past ``lambda_cut``."""
        lam_grid = np.asarray(lam_grid, dtype=float)
        if lam_grid.ndim != 1 or np.any(np.diff(lam_grid) <= 0) or lam_grid[0] <= 0:
            raise ValueError("lambda grid must be positive and strictly increasing")
        n = lam_grid.size
        G_R, rho = np.zeros(n), np.zeros(n)
        branch = np.empty(n, dtype=object)
        _, lam_min = self.edge()
        lam_max = self.right_edge()
        lam_cut = None
        if tail_rtol is not None and isinstance(self.law, StudentInverseGamma):
            lam_cut = self.tail_crossover(tail_rtol)
        bulk_idx = []
        for i, lam in enumerate(lam_grid):
            if lam <= lam_min or (lam_max is not None and lam >= lam_max):
                G_R[i], rho[i], branch[i] = self.real_root(lam), 0.0, GAP
            elif lam_cut is not None and lam > lam_cut:
                G_R[i], rho[i], branch[i] = 1.0 / lam, self.tail(lam), TAIL
            else:
                bulk_idx.append(i)
        if bulk_idx:
            lams = lam_grid[bulk_idx]
            first = lams[0]
            pre = lam_min + (first - lam_min) * np.geomspace(1e-6, 1.0, 30)[:-1]
            it = self._continue(np.concatenate([pre, lams]))
            for _ in pre:
                next(it)
            for i, (lam, G) in zip(bulk_idx, it):
                G_R[i], rho[i], branch[i] = G.real, G.imag / math.pi, BULK
        meta = dict(law=self.law.describe(), Q=self.Q, tol=self.tol, lam_min=lam_min, lam_max=lam_max)
        return SpectrumGrid(lam_grid, G_R, rho, branch, self.params, lam_cut, meta)

    def _bulk_solutions(self, lams):
        return np.array([G for _, G in self._continue(lams)])

    def _quadrature_nodes(self, lam_cut: float, order: int):
        """Nodes ``lambda_k`` and weights ``w_k`` so that ``sum w_k f(lambda_k) ~ int_{lam_min}^{lam_cut} f``."""
        _, lam_min = self.edge()
        x, w = np.polynomial.legendre.leggauss(order)
        nodes, weights = [], []
        # square-root edge: lambda = lam_min + u^2
        a = min(lam_cut, lam_min + max(4.0, 4.0 * lam_min))
        for u0, u1 in ((0.0, 0.5 * math.sqrt(a - lam_min)), (0.5 * math.sqrt(a - lam_min), math.sqrt(a - lam_min))):
            u = 0.5 * (u1 - u0) * x + 0.5 * (u1 + u0)
            nodes.append(lam_min + u * u)
            weights.append(0.5 * (u1 - u0) * w * 2 * u)
        # smooth decay: log-spaced panels, one per half decade
        if lam_cut > a:
            edges = np.exp(np.linspace(math.log(a), math.log(lam_cut), max(2, int(2 * math.log10(lam_cut / a)) + 2)))
            for y0, y1 in zip(np.log(edges[:-1]), np.log(edges[1:])):
                y = 0.5 * (y1 - y0) * x + 0.5 * (y1 + y0)
                lam = np.exp(y)
                nodes.append(lam)
                weights.append(0.5 * (y1 - y0) * w * lam)
        return np.concatenate(nodes), np.concatenate(weights)

    def _tail_integrals(self, lam_cut: float, rho_cut: float):
        """Analytic ``int_{lam_cut}^inf rho * {1, lambda, 1/lambda, log lambda}``.

        The tail is modelled as ``A lambda^-p (1 + b/lambda)`` with ``b``
        matched to the solved density at ``lam_cut``.
        """
        p = 1.0 + self.law.shape
        A = self.tail_amplitude()
        b = lam_cut * (rho_cut / (A * lam_cut ** -p) - 1.0)

        def power(k):
            # int_L^inf lambda^-k
            return lam_cut ** (1 - k) / (k - 1)

        def power_log(k):
            return lam_cut ** (1 - k) * (math.log(lam_cut) / (k - 1) + 1.0 / (k - 1) ** 2)

        mass = A * (power(p) + b * power(p + 1))
        mean = A * (power(p - 1) + b * power(p))
        inverse = A * (power(p + 1) + b * power(p + 2))
        logm = A * (power_log(p) + b * power_log(p + 1))
        return mass, mean, inverse, logm

    def moments(self, tail_rtol: float = 1e-3, order: int = 48) -> SpectralMoments:
        """Quadrature of the density with analytic tail completion."""
        law = self.law
        if isinstance(law, DeltaGaussian) or (isinstance(law, LogNormal) and law.log_var == 0):
            lo, hi = mp_edges(self.params.q)
            x, w = np.polynomial.legendre.leggauss(4 * order)
            th = 0.5 * np.pi * (x + 1)
            lam = 0.5 * (hi + lo) - 0.5 * (hi - lo) * np.cos(th)
            wt = 0.5 * np.pi * w * 0.5 * (hi - lo) * np.sin(th)
            G = self._bulk_solutions(lam)
            rho = G.imag / math.pi
            f = wt * rho
            return SpectralMoments(f.sum(), (f * lam).sum(), (f / lam).sum(), (f * np.log(lam)).sum(), None)
        if isinstance(law, StudentInverseGamma):
            lam_cut = self.tail_crossover(tail_rtol)
        else:
            lam_cut = self._lognormal_cutoff()
        nodes, weights = self._quadrature_nodes(lam_cut, order)
        G = self._bulk_solutions(np.concatenate([nodes, [lam_cut]]))
        rho = G[:-1].imag / math.pi
        f = weights * rho
        m = np.array([f.sum(), (f * nodes).sum(), (f / nodes).sum(), (f * np.log(nodes)).sum()])
        if isinstance(law, StudentInverseGamma):
            m += np.array(self._tail_integrals(lam_cut, G[-1].imag / math.pi))
        return SpectralMoments(*m, lam_cut)

    def _lognormal_cutoff(self) -> float:
        _, lam_min = self.edge()
        lam = max(10.0, 4 * lam_min)
        for _, G in self._continue(lam * 2.0 ** np.arange(0, 40)):
            if G.imag / math.pi * lam * lam < 1e-14:
                return lam
            lam *= 2.0
        return lam

    def cdf_table(self, lam_max: float | None = None, points: int = 1200, tail_rtol: float = 1e-3):
        """Tabulated cumulative distribution ``(lambda, F)`` on ``[lambda_min, lam_max]``.

        For the Student law the table also carries the exact survival mass
        beyond ``lam_max`` so that ``F(lam_max) = 1 - tail``.
        """
        _, lam_min = self.edge()
        hi_edge = self.right_edge()
        if hi_edge is not None:
            lo, hi = lam_min, hi_edge
            th = np.linspace(0.0, np.pi, points)
            lam = 0.5 * (hi + lo) - 0.5 * (hi - lo) * np.cos(th)
            rho = np.zeros_like(lam)
            rho[1:-1] = self._bulk_solutions(lam[1:-1]).imag / math.pi
            g = rho * 0.5 * (hi - lo) * np.sin(th)
            F = integrate.cumulative_simpson(g, x=th, initial=0.0)
            return lam, F / F[-1] if abs(F[-1] - 1) < 1e-3 else F
        if lam_max is None:
            lam_max = 50.0 * lam_min + 50.0
        # u-grid near the edge, log grid beyond
        a = min(lam_max, lam_min + max(4.0, 4.0 * lam_min))
        n1 = points // 2
        u = np.linspace(0.0, math.sqrt(a - lam_min), n1)
        lam1 = lam_min + u * u
        y = np.linspace(math.log(a), math.log(lam_max), points - n1 + 1)[1:]
        lam2 = np.exp(y)
        G = self._bulk_solutions(np.concatenate([lam1[1:], lam2]))
        rho = np.concatenate([[0.0], G.imag / math.pi])
        F1 = integrate.cumulative_simpson(rho[:n1] * 2 * u, x=u, initial=0.0)
        F2 = F1[-1] + integrate.cumulative_simpson(np.concatenate([[rho[n1 - 1] * a], rho[n1:] * lam2]),
                                                   x=np.concatenate([[math.log(a)], y]), initial=0.0)[1:]
        lam = np.concatenate([lam1, lam2])
        F = np.concatenate([F1, F2])
        if isinstance(self.law, StudentInverseGamma):
            cut = self.tail_crossover(tail_rtol)
            if lam_max < cut:
                G_far = self._bulk_solutions(np.geomspace(lam_max, cut, 60))
                lg = np.log(np.geomspace(lam_max, cut, 60))
                mid = integrate.simpson(G_far.imag / math.pi * np.exp(lg), x=lg)
                surv = mid + self._tail_integrals(cut, G_far[-1].imag / math.pi)[0]
            else:
                surv = self._tail_integrals(lam_max, rho[-1])[0]
            F = F * (1.0 - surv) / F[-1] if F[-1] > 0 else F
        return lam, F


@lru_cache(maxsize=128)
def density_of_states(params, kernel: str = "auto") -> DensityOfStates:
    """Cached solver per ensemble."""
    return DensityOfStates(_as_params(params), kernel=kernel)


def solve_dos_point(lam: float, params, init=None) -> SpectrumPoint:
    """Solve the coupled density equations at a single ``lambda``.

    ``init`` may be a complex ``G`` or a ``(G_R, rho)`` pair used as warm
    start; without it the solution is continued from the left edge.
    """
    return density_of_states(_as_params(params)).solve(lam, init)


def left_edge(params) -> float:
    """Lower edge of the spectrum: maximum of the real-axis Blue function."""
    return density_of_states(_as_params(params)).left_edge()


def right_edge_or_none(params) -> float | None:
    """Upper edge, or ``None`` when the volatility law lets ``s`` reach 0."""
    return density_of_states(_as_params(params)).right_edge()


def tail_amplitude(params) -> float:
    return density_of_states(_as_params(params)).tail_amplitude()


def tail_density(lam, params):
    """Large-``lambda`` density ``mu_bar^(mu/2) / (Gamma(mu/2) Q^(mu/2-1)) * lambda^(-1-mu/2)``."""
    return density_of_states(_as_params(params)).tail(lam)


def dos_curve(params, lam_grid, tail_rtol: float | None = 0.02) -> SpectrumGrid:
    """Density of states on ``lam_grid`` by continuation."""
    return density_of_states(_as_params(params)).curve(lam_grid, tail_rtol)
