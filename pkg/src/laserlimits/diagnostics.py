"""Closed-form linewidths and the diagnostics that explain them.

Simulator linewidths are in units of kappa; only ``schawlow_townes_chain``
works in SI (angular frequencies in rad/s, power in W).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from scipy import constants

from .errors import DomainError, MissingField
from .fock import FockSpace, annihilation_op, coherent_state, default_cutoff
from .models import LaserModel, ModelKind, _coefficients

SMALL_ANGLE_MIN_NBAR = 10.0


def micromaser_linewidth(mu: float, phi: float) -> float:
    """(1/4mu) [1 + (sin(phi/mu) / (sin(phi)/mu))^2]; tends to 1/2mu as phi -> 0."""
    if phi == 0:
        return 1.0 / (2.0 * mu)
    ratio = math.sin(phi / mu) / (math.sin(phi) / mu)
    return (1.0 + ratio * ratio) / (4.0 * mu)


def predicted_linewidth(model: LaserModel) -> float:
    mu = model.mu
    kind = model.kind
    if kind is ModelKind.STANDARD:
        return 1.0 / (2.0 * mu)
    if kind is ModelKind.UNSTIMULATED:
        return 1.0 / (4.0 * mu)
    if kind is ModelKind.NONLINEAR:
        return 3.0 / (8.0 * mu)
    return micromaser_linewidth(mu, model.phi)


@dataclass(frozen=True)
class RatioReport:
    n: float
    exact: float
    asymptotic: float

    @property
    def deviation(self) -> float:
        return self.exact - self.asymptotic


def asymptotic_ratio(model: LaserModel, n: float) -> float:
    kind = model.kind
    if kind is ModelKind.STANDARD:
        return 1.0 - 1.0 / (8.0 * n * n)
    if kind is ModelKind.UNSTIMULATED:
        return 1.0
    if kind is ModelKind.NONLINEAR:
        return 1.0 - 1.0 / (16.0 * n * n)
    # evaluated at n = mu with phi held fixed
    phi, mu = model.phi, model.mu
    return 1.0 - math.sin(phi / mu) ** 2 / (8.0 * math.sin(phi) ** 2)


def gain_ratio(model: LaserModel, n: int) -> RatioReport:
    """Off-diagonal gain coefficient g(n, n+1) against its leading-order form.

    ``n`` may exceed the model's truncation: the coefficient is an analytic
    function of n and is evaluated directly.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    exact = float(_coefficients(model, n, n + 1))
    return RatioReport(n, exact, asymptotic_ratio(model, n))


def gain_decay_contribution(model: LaserModel, n_bar: Optional[float] = None) -> float:
    """mu (1 - g(n_bar, n_bar + 1)): the gain's share of the amplitude decay
    rate. Twice this is its share of the FWHM."""
    if n_bar is None:
        n_bar = model.mu
    return model.mu * (1.0 - float(_coefficients(model, n_bar, n_bar + 1)))


@dataclass(frozen=True)
class LimitInputs:
    """SI inputs for the Schawlow-Townes refinement chain. Unused fields may
    be left as None. ``gamma = inf`` represents an adiabatically eliminated
    gain medium."""

    omega: Optional[float] = None
    p_out: Optional[float] = None
    gamma: Optional[float] = None
    kappa: Optional[float] = None
    n_bar: Optional[float] = None
    n_coh: Optional[float] = None
    hbar: float = constants.hbar

    def require(self, name, formula):
        value = getattr(self, name)
        if value is None:
            raise MissingField(name, formula)
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")
        return value

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


CHAIN_OUTPUTS = ("ell_ST", "ell_bare", "ell_ST2", "ell_st", "ell_0")


def schawlow_townes_chain(inputs: LimitInputs, want=CHAIN_OUTPUTS) -> dict:
    """Evaluate the requested linewidths of the refinement chain.

    Besides the five linewidths, ``ell_ST2_bound`` and ``ell_st_bound`` give
    the output-power forms, ``coupling_efficiency`` is P_out / (ell_bare E),
    and ``bound_holds`` flags whether the stored-energy value lies below the
    output-power bound.
    """
    unknown = set(want) - set(CHAIN_OUTPUTS)
    if unknown:
        raise DomainError(f"unknown outputs: {sorted(unknown)}")
    inp = inputs
    out = {}

    def bare():
        gamma = inp.require("gamma", "ell_bare")
        kappa = inp.require("kappa", "ell_bare")
        return kappa / (1.0 + kappa / gamma)

    if "ell_ST" in want:
        photon = inp.require("hbar", "ell_ST") * inp.require("omega", "ell_ST")
        out["ell_ST"] = photon / inp.require("p_out", "ell_ST") * inp.require("gamma", "ell_ST") ** 2
    if "ell_bare" in want:
        out["ell_bare"] = bare()
    if "ell_ST2" in want or "ell_st" in want:
        lb = bare()
        n_coh = inp.require("n_coh", "ell_ST2/ell_st")
        if "ell_ST2" in want:
            out["ell_ST2"] = lb / n_coh
        if "ell_st" in want:
            out["ell_st"] = lb / (2.0 * n_coh)
        if inp.p_out is not None and inp.omega is not None:
            photon = inp.hbar * inp.omega
            bound = photon / inp.p_out * lb * lb
            out["ell_ST2_bound"] = bound
            out["ell_st_bound"] = bound / 2.0
            out["coupling_efficiency"] = inp.p_out / (lb * n_coh * photon)
            out["bound_holds"] = bool(lb / n_coh <= bound * (1 + 1e-12))
    if "ell_0" in want:
        out["ell_0"] = inp.require("kappa", "ell_0") / (2.0 * inp.require("n_bar", "ell_0"))
    return out


def phase_variance_coherent(n_bar: float) -> float:
    """Small-angle phase variance V(Y)/Xbar^2 = 1/(4 n_bar) of a coherent state."""
    if n_bar < SMALL_ANGLE_MIN_NBAR:
        raise DomainError(f"small-angle estimate needs n_bar >= {SMALL_ANGLE_MIN_NBAR:g}")
    return 1.0 / (4.0 * n_bar)


@dataclass(frozen=True)
class Quadratures:
    mean_x: float
    mean_y: float
    var_x: float
    var_y: float

    @property
    def phase_variance(self) -> float:
        return self.var_y / self.mean_x**2


def coherent_quadratures(alpha: complex, space: Optional[FockSpace] = None) -> Quadratures:
    """Moments of X = a + a^dagger and Y = -i(a - a^dagger) for a truncated
    coherent state (so X/2, Y/2 are the real and imaginary parts of a)."""
    if space is None:
        space = FockSpace(default_cutoff(abs(alpha) ** 2))
    state = coherent_state(alpha, space)
    a = annihilation_op(space)
    ea = state.expect(a)
    ea2 = state.expect(a @ a)
    en = state.expect(a.adjoint() @ a).real
    # <X^2> = <a^2> + <a^dag^2> + 2<a^dag a> + 1, and <Y^2> with the a^2 terms negated
    ex2 = 2 * ea2.real + 2 * en + 1
    ey2 = -2 * ea2.real + 2 * en + 1
    mx, my = 2 * ea.real, 2 * ea.imag
    return Quadratures(mx, my, ex2 - mx * mx, ey2 - my * my)


@dataclass(frozen=True)
class UncertaintyChain:
    phase_variance: float  # of the coherent state, 1/(4 n_bar)
    diffusion_rate: float  # dV/dt = kappa/(4 n_bar)
    g1_decay_rate: float  # V/2 per unit time
    linewidth: float

    def variance_at(self, t):
        return self.diffusion_rate * np.asarray(t)

    def g1(self, t):
        return np.exp(-self.variance_at(t) / 2.0)


def uncertainty_chain(n_bar: float, kappa: float = 1.0) -> UncertaintyChain:
    """Phase diffusion from loss alone: each dt of damping adds kappa dt/(4 n_bar)
    to the phase variance; g1 ~ exp(-V/2) is Lorentzian in frequency."""
    v = phase_variance_coherent(n_bar)
    rate = kappa * v
    decay = rate / 2.0
    return UncertaintyChain(v, rate, decay, 2.0 * decay)


def ultimate_linewidth_from_uncertainty(n_bar: float, kappa: float = 1.0) -> float:
    return uncertainty_chain(n_bar, kappa).linewidth
