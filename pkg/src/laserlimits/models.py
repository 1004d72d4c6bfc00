"""Gain mechanisms in the Fock basis and the Liouvillian restricted to one
off-diagonal of the density matrix.

All rates are in units of the cavity intensity loss rate (kappa = 1). Every
master equation here has the structure

    rho_dot[n, m] = mu * (g(n, m) rho[n-1, m-1] - rho[n, m])
                    - (n + m)/2 rho[n, m] + sqrt((n+1)(m+1)) rho[n+1, m+1]

so only the gain coefficient g(n, m) distinguishes the four models.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import DomainError, ModelMismatch, SizeGuard
from .fock import FockSpace, default_cutoff

DEGENERACY_TOL = 1e-14
FULL_GENERATOR_MAX_NMAX = 400


class ModelKind(str, enum.Enum):
    STANDARD = "standard"
    UNSTIMULATED = "unstimulated"
    MICROMASER = "micromaser"
    NONLINEAR = "nonlinear"


@dataclass(frozen=True)
class LaserModel:
    """A gain mechanism plus linear loss on a truncated Fock space.

    ``epsilon`` is the scaled atom-field interaction time and is only used by
    the micromaser. ``kappa`` is recorded for unit conversion; the dynamics
    are always expressed with kappa = 1.
    """

    kind: ModelKind
    mu: float
    space: FockSpace
    epsilon: Optional[float] = None
    kappa: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        mu = float(self.mu)
        object.__setattr__(self, "mu", mu)
        if not math.isfinite(mu) or mu < 0:
            raise DomainError(f"gain rate mu must be >= 0, got {self.mu}")
        if self.kappa <= 0:
            raise DomainError("kappa must be positive")
        kind = self.kind
        if kind is ModelKind.MICROMASER:
            if self.epsilon is None or not self.epsilon > 0:
                raise DomainError("micromaser needs an interaction parameter epsilon > 0")
            if self.epsilon * math.sqrt(self.space.n_max) >= math.pi:
                raise SizeGuard(
                    f"epsilon*sqrt(n_max) = {self.epsilon * math.sqrt(self.space.n_max):.4g} "
                    "reaches the first Rabi zero; lower n_max or epsilon"
                )
        elif self.epsilon is not None:
            raise ModelMismatch(f"epsilon only applies to the micromaser, not {kind.value}")
        if kind is ModelKind.NONLINEAR:
            if mu <= 0:
                raise DomainError("nonlinear gain needs mu > 0")
            if self.space.n_max >= 3 * mu:
                raise SizeGuard(
                    f"nonlinear gain amplitude vanishes at n = 3 mu = {3 * mu:g}; "
                    f"n_max = {self.space.n_max} must be below it"
                )

    @property
    def n_max(self) -> int:
        return self.space.n_max

    @property
    def phi(self) -> Optional[float]:
        if self.epsilon is None:
            return None
        return self.epsilon * math.sqrt(self.mu)


def make_model(kind, mu, *, epsilon=None, phi=None, n_max=None, kappa=1.0) -> LaserModel:
    """Build a model, choosing the truncation and converting phi to epsilon.

    For the nonlinear model the default truncation is clipped below 3 mu.
    """
    kind = ModelKind(kind)
    if not (math.isfinite(mu) and mu >= 0):
        raise DomainError(f"gain rate mu must be >= 0, got {mu}")
    if epsilon is not None and phi is not None:
        raise DomainError("give either epsilon or phi, not both")
    if phi is not None:
        if mu <= 0:
            raise DomainError("phi = epsilon*sqrt(mu) needs mu > 0")
        epsilon = phi / math.sqrt(mu)
    if n_max is None:
        n_max = default_cutoff(mu)
        if kind is ModelKind.NONLINEAR:
            n_max = min(n_max, int(math.ceil(3 * mu)) - 1)
    return LaserModel(kind, mu, FockSpace(n_max), epsilon=epsilon, kappa=kappa)


def _amplitude(kind: ModelKind, mu: float, n):
    n = np.asarray(n, dtype=float)
    if kind is ModelKind.STANDARD:
        return np.sqrt(n)
    if kind is ModelKind.UNSTIMULATED:
        return np.ones_like(n)
    if kind is ModelKind.NONLINEAR:
        return np.sqrt(n) * (3.0 - n / mu)
    raise ModelMismatch("micromaser gain has no single-pass amplitude")


def gain_amplitude(model: LaserModel, n: int) -> float:
    """Matrix element <n| c |n-1> of the photon-adding operator c."""
    if not 1 <= n <= model.n_max:
        raise DomainError(f"n = {n} outside 1..{model.n_max}")
    c = float(_amplitude(model.kind, model.mu, n))
    if c <= 0:
        raise DomainError(f"gain amplitude non-positive at n = {n}")
    return c


def _coefficients(model: LaserModel, n, m) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    m = np.asarray(m, dtype=float)
    if model.kind is ModelKind.MICROMASER:
        a = model.epsilon * np.sqrt(n)
        b = model.epsilon * np.sqrt(m)
        # 1 - cos(a)cos(b) without cancellation at small epsilon
        denom = np.sin((a - b) / 2) ** 2 + np.sin((a + b) / 2) ** 2
        if np.any(denom < DEGENERACY_TOL):
            raise DomainError("micromaser gain denominator vanishes (trapping point)")
        return np.sin(a) * np.sin(b) / denom
    cn = _amplitude(model.kind, model.mu, n)
    cm = _amplitude(model.kind, model.mu, m)
    return 2.0 * cn * cm / (cn * cn + cm * cm)


def gain_coefficient(model: LaserModel, n: int, m: int) -> float:
    """Multiplier g(n, m) of rho[n-1, m-1] in the gain term."""
    for k in (n, m):
        if not 1 <= k <= model.n_max:
            raise DomainError(f"index {k} outside 1..{model.n_max}")
    return float(_coefficients(model, n, m))


@dataclass(frozen=True)
class SidebandBlock:
    """Tridiagonal generator for v_n = rho[n-k, n], n = k..n_max.

    ``sub[i]`` couples v[i] into v[i+1] (gain), ``sup[i]`` couples v[i+1] into
    v[i] (loss); both have length ``size - 1``. In the ``"f"`` normalization
    (k = 1 only) the vector is f_n = sqrt(n) rho[n-1, n] / conj(alpha).
    """

    k: int
    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    normalization: str = "raw"

    @property
    def size(self) -> int:
        return len(self.diag)

    @property
    def indices(self) -> np.ndarray:
        """Column photon number n of each component."""
        return np.arange(self.k, self.k + self.size)

    def to_sparse(self) -> sparse.csr_matrix:
        return sparse.diags([self.sub, self.diag, self.sup], [-1, 0, 1], format="csr")

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v)
        out = self.diag * v
        out[1:] += self.sub * v[:-1]
        out[:-1] += self.sup * v[1:]
        return out


def sideband_block(model: LaserModel, k: int, normalization: str = "raw") -> SidebandBlock:
    if not 0 <= k <= model.n_max:
        raise DomainError(f"sideband index k = {k} outside 0..{model.n_max}")
    if normalization not in ("raw", "f"):
        raise DomainError(f"unknown normalization {normalization!r}")
    if normalization == "f" and k != 1:
        raise DomainError("f normalization is defined for k = 1 only")
    mu = model.mu
    n = np.arange(k, model.n_max + 1, dtype=float)
    diag = -mu - (2 * n - k) / 2.0
    # transitions v_n -> v_{n+1} (gain) and v_{n+1} -> v_n (loss), n = k..n_max-1
    lo = n[:-1]
    sub = mu * _coefficients(model, lo - k + 1, lo + 1)
    sup = np.sqrt((lo + 1) * (lo + 1 - k))
    if normalization == "f":
        sub = sub * np.sqrt((lo + 1) / lo)
        sup = sup * np.sqrt(lo / (lo + 1))
    return SidebandBlock(int(k), sub, diag, sup, normalization)


class FullGenerator:
    """Action of the Liouvillian on full (n_max+1)^2 density matrices.

    Built independently of ``sideband_block`` from the dense table of gain
    coefficients; used to cross-check the block decomposition.
    """

    def __init__(self, model: LaserModel):
        if model.n_max > FULL_GENERATOR_MAX_NMAX:
            raise SizeGuard(
                f"full generator limited to n_max <= {FULL_GENERATOR_MAX_NMAX}, got {model.n_max}"
            )
        self.model = model
        dim = model.space.dim
        n = np.arange(dim, dtype=float)
        N, M = np.meshgrid(n[1:], n[1:], indexing="ij")
        self._g = _coefficients(model, N, M)
        self._damp = -model.mu - (n[:, None] + n[None, :]) / 2.0
        self._feed = np.sqrt(np.outer(n[1:], n[1:]))

    @property
    def dim(self) -> int:
        return self.model.space.dim

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho)
        out = self._damp * rho
        out[1:, 1:] += self.model.mu * self._g * rho[:-1, :-1]
        out[:-1, :-1] += self._feed * rho[1:, 1:]
        return out

    __call__ = apply

    def as_linear_operator(self) -> splinalg.LinearOperator:
        d = self.dim

        def mv(x):
            return self.apply(np.reshape(x, (d, d))).ravel()

        return splinalg.LinearOperator((d * d, d * d), matvec=mv, dtype=complex)


def full_generator(model: LaserModel) -> FullGenerator:
    return FullGenerator(model)
