"""Stationary photon statistics, first-order coherence and linewidths.

Two independent routes give the linewidth: the slowest eigenvalue of the
k = 1 sideband generator, and the power spectrum obtained by integrating the
sideband in time and cosine-transforming g1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, sparse
from scipy.integrate import solve_ivp, trapezoid
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import ConvergenceError, DomainError, GridError, StiffnessError, TruncationError
from .fock import PhotonDistribution, coherent_state
from .models import LaserModel, SidebandBlock, sideband_block

RTOL = 1e-9
ATOL = 1e-12
STATIONARY_RESIDUAL = 1e-10
TAIL_LEVELS = 5
TAIL_MONITOR = 1e-8
POINTS_PER_COHERENCE_TIME = 64
COHERENCE_TIMES = 8
FIT_WINDOW = (0.5, 4.0)
TAIL_CUT = 1e-3


@dataclass(frozen=True)
class CorrelationSeries:
    tau: np.ndarray
    g1: np.ndarray

    def coherence_time(self) -> float:
        """First time at which |g1| falls to 1/e (log-linear interpolation)."""
        logmag = np.log(np.abs(self.g1))
        below = np.nonzero(logmag <= -1.0)[0]
        if len(below) == 0 or below[0] == 0:
            raise GridError("g1 never decays to 1/e on this time grid")
        i = below[0]
        return float(np.interp(-1.0, logmag[i - 1 : i + 1][::-1], self.tau[i - 1 : i + 1][::-1]))

    def fit_decay(self, window=FIT_WINDOW) -> float:
        """Exponential decay rate from a least-squares line through log|g1|.

        The window is given in coherence times.
        """
        tc = self.coherence_time()
        sel = (self.tau >= window[0] * tc) & (self.tau <= window[1] * tc)
        if sel.sum() < 3:
            raise GridError("too few samples inside the fit window")
        slope = np.polyfit(self.tau[sel], np.log(np.abs(self.g1[sel])), 1)[0]
        return float(-slope)


@dataclass(frozen=True)
class Spectrum:
    omega: np.ndarray
    power: np.ndarray
    fwhm: float
    fit_decay: float


@dataclass(frozen=True)
class SidebandSeries:
    t: np.ndarray
    values: np.ndarray  # shape (len(t), block.size)


def stationary_distribution(model: LaserModel) -> PhotonDistribution:
    """Null vector of the k = 0 block via the detailed-balance recursion
    mu g(n, n) P[n-1] = n P[n], carried out in log space."""
    block = sideband_block(model, 0)
    dim = block.size
    if model.mu == 0:
        p = np.zeros(dim)
        p[0] = 1.0
    else:
        births = block.sub  # mu * g(n, n), from n-1 to n
        deaths = block.sup  # n, from n to n-1
        logp = np.concatenate([[0.0], np.cumsum(np.log(births) - np.log(deaths))])
        p = np.exp(logp - logsumexp(logp))
    residual = np.max(np.abs(block.matvec(p)))
    if residual > STATIONARY_RESIDUAL:
        raise ConvergenceError(f"stationary residual {residual:.3g} exceeds {STATIONARY_RESIDUAL}")
    return PhotonDistribution(p / p.sum())


def evolve_sideband(block: SidebandBlock, v0, t_grid, rtol=RTOL, atol=ATOL) -> SidebandSeries:
    """Integrate v' = G v with an implicit adaptive integrator (Radau IIA).

    G is real, so complex vectors are integrated as stacked real and
    imaginary parts.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    v0 = np.asarray(v0)
    if v0.shape != (block.size,):
        raise DomainError(f"initial vector has shape {v0.shape}, block size is {block.size}")
    if np.any(np.diff(t_grid) <= 0):
        raise DomainError("time grid must be strictly ascending")
    G = block.to_sparse()
    if not np.any(G.data):
        return SidebandSeries(t_grid, np.tile(v0, (len(t_grid), 1)))
    if len(t_grid) == 1:
        return SidebandSeries(t_grid, v0[None, :].copy())
    is_complex = np.iscomplexobj(v0)
    if is_complex:
        y0 = np.concatenate([v0.real, v0.imag])
        G = sparse.block_diag([G, G], format="csr")
    else:
        y0 = v0.astype(float)
    sol = solve_ivp(
        lambda t, y: G @ y,
        (t_grid[0], t_grid[-1]),
        y0,
        method="Radau",
        jac=G,
        t_eval=t_grid,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise StiffnessError(f"integrator failed: {sol.message}")
    y = sol.y.T
    if is_complex:
        n = block.size
        y = y[:, :n] + 1j * y[:, n:]
    return SidebandSeries(t_grid, y)


def slowest_decay_rate(block: SidebandBlock) -> float:
    """-Re of the generator eigenvalue with the largest real part.

    The tridiagonal generator is symmetrized when sub*sup > 0 everywhere (true
    for every model in its valid domain), giving a real symmetric eigenproblem;
    otherwise a dense general eigensolve is used.
    """
    prod = block.sub * block.sup
    try:
        if block.size == 1:
            return float(-block.diag[0])
        if np.all(prod > 0):
            top = block.size - 1
            w = linalg.eigh_tridiagonal(
                block.diag, np.sqrt(prod), eigvals_only=True, select="i", select_range=(top, top)
            )
            return float(-w[0])
        w = linalg.eigvals(block.to_dense())
    except (linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceError(str(exc)) from exc
    return float(-np.max(w.real))


def default_time_grid(rate: float) -> np.ndarray:
    tc = 1.0 / rate
    n = POINTS_PER_COHERENCE_TIME * COHERENCE_TIMES
    return np.linspace(0.0, COHERENCE_TIMES * tc, n + 1)


def default_omega_grid(rate: float, span: float = 5.0, points: int = 2001) -> np.ndarray:
    """Symmetric grid covering +-span expected FWHMs (FWHM ~ 2*rate)."""
    half = span * 2.0 * rate
    return np.linspace(-half, half, points)


def initial_f(model: LaserModel) -> np.ndarray:
    """f_n(0) = sqrt(n) rho[n-1, n](0) / conj(alpha) for rho(0) = |alpha><alpha|,
    alpha = sqrt(mu)."""
    alpha = math.sqrt(model.mu)
    psi = coherent_state(alpha, model.space).amplitudes
    n = np.arange(1, model.space.dim)
    return np.sqrt(n) * psi[:-1] * np.conj(psi[1:]) / np.conj(alpha)


def g1_series(model: LaserModel, t_grid=None) -> CorrelationSeries:
    if model.mu <= 0:
        raise DomainError("g1 needs a lasing model (mu > 0)")
    block = sideband_block(model, 1, normalization="f")
    if t_grid is None:
        t_grid = default_time_grid(slowest_decay_rate(block))
    series = evolve_sideband(block, initial_f(model), t_grid)
    f = series.values
    scale = np.max(np.abs(f[0]))
    tail = np.max(np.abs(f[:, -TAIL_LEVELS:])) / scale
    if tail > TAIL_MONITOR:
        raise TruncationError(f"sideband reached truncation edge (relative tail {tail:.3g})")
    return CorrelationSeries(series.t, f.sum(axis=1))


def _half_crossing(omega, power, i0, step):
    i = i0
    while 0 <= i + step < len(power):
        j = i + step
        if power[j] <= 0.5:
            a, b = sorted((i, j))
            return brentq(lambda w: np.interp(w, omega[a : b + 1], power[a : b + 1]) - 0.5, omega[a], omega[b])
        i = j
    raise GridError("omega grid does not bracket the half maximum")


def power_spectrum(series: CorrelationSeries, omega_grid=None) -> Spectrum:
    """Spectrum proportional to Re int_0^T g1(tau) exp(-i omega tau) dtau, by
    trapezoidal quadrature; peak normalized to 1."""
    tau = np.asarray(series.tau)
    g1 = np.asarray(series.g1)
    tail = abs(g1[-1]) / abs(g1[0])
    if tail >= TAIL_CUT:
        raise GridError(f"g1 has only decayed to {tail:.3g} at the end of the time grid")
    tc = series.coherence_time()
    if omega_grid is None:
        omega_grid = default_omega_grid(1.0 / tc)
    omega = np.asarray(omega_grid, dtype=float)
    phase = np.outer(omega, tau)
    integrand = g1.real * np.cos(phase) + g1.imag * np.sin(phase)
    power = trapezoid(integrand, tau, axis=1)
    i0 = int(np.argmax(power))
    power = power / power[i0]
    left = _half_crossing(omega, power, i0, -1)
    right = _half_crossing(omega, power, i0, +1)
    return Spectrum(omega, power, float(right - left), series.fit_decay())


@dataclass(frozen=True)
class LinewidthReport:
    eigen_fwhm: float
    spectrum_fwhm: Optional[float]
    fit_fwhm: Optional[float]
    slowest_rate: float


def measure_linewidth(model: LaserModel, spectrum: bool = True) -> LinewidthReport:
    """FWHM by the eigenvalue route and, optionally, by the spectrum route."""
    block = sideband_block(model, 1, normalization="f")
    lam = slowest_decay_rate(block)
    if not spectrum:
        return LinewidthReport(2 * lam, None, None, lam)
    series = g1_series(model, default_time_grid(lam))
    spec = power_spectrum(series, default_omega_grid(lam))
    return LinewidthReport(2 * lam, spec.fwhm, 2 * spec.fit_decay, lam)
