"""Truncated Fock space: banded operators, pure states and photon-number
distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import sparse
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import DegenerateInput, DomainError, TruncationError

TAIL_TOL = 1e-12
NORM_TOL = 1e-10


def default_cutoff(mu: float) -> int:
    """Photon-number truncation that keeps the Poisson(mu) tail negligible."""
    return int(math.ceil(mu + 10.0 * math.sqrt(mu) + 10.0))


@dataclass(frozen=True)
class FockSpace:
    n_max: int
    tail_tol: float = TAIL_TOL
    norm_tol: float = NORM_TOL

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise DomainError(f"n_max must be an integer >= 1, got {self.n_max}")
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def dim(self) -> int:
        return self.n_max + 1

    @property
    def numbers(self) -> np.ndarray:
        return np.arange(self.dim)


def _frozen(a) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BandedOperator:
    """Operator stored by diagonals.

    ``bands[d][i]`` is the matrix element at row ``i`` and column ``i + d``
    for ``d >= 0``, and at row ``i - d`` and column ``i`` for ``d < 0``.
    """

    space: FockSpace
    bands: dict = field(default_factory=dict)

    def __post_init__(self):
        dim = self.space.dim
        clean = {}
        for d, c in self.bands.items():
            d = int(d)
            if abs(d) > self.space.n_max:
                raise DomainError(f"band offset {d} outside [-n_max, n_max]")
            c = np.asarray(c)
            if c.shape != (dim - abs(d),):
                raise DomainError(f"band {d} has shape {c.shape}, expected ({dim - abs(d)},)")
            clean[d] = _frozen(c)
        object.__setattr__(self, "bands", clean)

    def __getitem__(self, idx):
        row, col = idx
        c = self.bands.get(col - row)
        if c is None:
            return 0.0
        return c[min(row, col)]

    def adjoint(self) -> BandedOperator:
        return BandedOperator(self.space, {-d: np.conj(c) for d, c in self.bands.items()})

    @property
    def H(self) -> BandedOperator:
        return self.adjoint()

    def to_sparse(self) -> sparse.csr_matrix:
        if not self.bands:
            return sparse.csr_matrix((self.space.dim, self.space.dim))
        offsets = list(self.bands)
        return sparse.diags([self.bands[d] for d in offsets], offsets, format="csr")

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v)
        dtype = np.result_type(v, *self.bands.values()) if self.bands else v.dtype
        out = np.zeros(self.space.dim, dtype=dtype)
        for d, c in self.bands.items():
            if d >= 0:
                out[: len(c)] += c * v[d:]
            else:
                out[-d:] += c * v[: len(c)]
        return out

    def __matmul__(self, other):
        if isinstance(other, BandedOperator):
            return self._compose(other)
        return self.matvec(other)

    def _compose(self, other: BandedOperator) -> BandedOperator:
        if other.space != self.space:
            raise DomainError("operators live on different spaces")
        A, B = self.to_sparse(), other.to_sparse()
        prod = (A @ B).todia()
        bands = {}
        dim = self.space.dim
        for d, row in zip(prod.offsets, prod.data):
            # dia storage keeps entry (i, i+d) at row[i + d]; trailing zeros may be trimmed
            row = np.pad(row, (0, dim - len(row)))
            if d >= 0:
                c = row[d:]
            else:
                c = row[: dim + d]
            bands[int(d)] = c
        return BandedOperator(self.space, bands)


def annihilation_op(space: FockSpace) -> BandedOperator:
    return BandedOperator(space, {1: np.sqrt(np.arange(1, space.dim, dtype=float))})


def creation_op(space: FockSpace) -> BandedOperator:
    return annihilation_op(space).adjoint()


def sg_lowering_op(space: FockSpace) -> BandedOperator:
    """Susskind-Glogower phase operator e = sum |n-1><n|."""
    return BandedOperator(space, {1: np.ones(space.n_max)})


def shift_up_op(space: FockSpace) -> BandedOperator:
    """S = e^dagger, the semi-unitary one-photon raising operator."""
    return sg_lowering_op(space).adjoint()


def number_function(space: FockSpace, f: Callable, offset: int = 0) -> BandedOperator:
    """Diagonal operator with entries f(n + offset).

    ``offset=1`` gives functions of aa^dagger, e.g. cos(eps*sqrt(aa^dagger)).
    """
    n = np.arange(space.dim, dtype=float) + offset
    return BandedOperator(space, {0: np.asarray(f(n), dtype=float)})


def number_op(space: FockSpace) -> BandedOperator:
    return number_function(space, lambda n: n)


def identity_op(space: FockSpace) -> BandedOperator:
    return BandedOperator(space, {0: np.ones(space.dim)})


@dataclass(frozen=True)
class PhotonDistribution:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1:
            raise DomainError("photon distribution must be one-dimensional")
        if np.any(p < 0):
            raise DomainError("negative probability")
        if abs(p.sum() - 1.0) > NORM_TOL:
            raise DomainError(f"probabilities sum to {p.sum()!r}")
        object.__setattr__(self, "p", _frozen(p))

    @property
    def n(self) -> np.ndarray:
        return np.arange(len(self.p))

    @classmethod
    def poisson(cls, mean: float, space: FockSpace) -> PhotonDistribution:
        p = poisson.pmf(space.numbers, mean)
        return cls(p / p.sum())

    def total_variation(self, other) -> float:
        q = other.p if isinstance(other, PhotonDistribution) else np.asarray(other)
        m = max(len(self.p), len(q))
        a = np.pad(self.p, (0, m - len(self.p)))
        b = np.pad(q, (0, m - len(q)))
        return 0.5 * float(np.abs(a - b).sum())


class Moments(NamedTuple):
    mean: float
    variance: float
    fano: float


def moments(p: PhotonDistribution, fano: bool = True) -> Moments:
    """Mean, variance and Fano factor of a photon-number distribution.

    The Fano factor is NaN when ``fano=False``; with ``fano=True`` a zero mean
    raises ``DegenerateInput``.
    """
    probs = p.p if isinstance(p, PhotonDistribution) else np.asarray(p, dtype=float)
    n = np.arange(len(probs))
    mean = float(probs @ n)
    var = float(probs @ (n - mean) ** 2)
    if not fano:
        return Moments(mean, var, math.nan)
    if mean == 0:
        raise DegenerateInput("Fano factor undefined for zero mean")
    return Moments(mean, var, var / mean)


@dataclass(frozen=True)
class PureState:
    space: FockSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (self.space.dim,):
            raise DomainError(f"expected {self.space.dim} amplitudes, got {a.shape}")
        object.__setattr__(self, "amplitudes", _frozen(a))

    @classmethod
    def fock(cls, n: int, space: FockSpace) -> PureState:
        if not 0 <= n <= space.n_max:
            raise DomainError(f"|{n}> not in space with n_max={space.n_max}")
        a = np.zeros(space.dim, dtype=complex)
        a[n] = 1.0
        return cls(space, a)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> PureState:
        nrm = self.norm
        if nrm == 0:
            raise DegenerateInput("cannot normalize the zero vector")
        return PureState(self.space, self.amplitudes / nrm)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def distribution(self) -> PhotonDistribution:
        w = self.populations()
        return PhotonDistribution(w / w.sum())

    def expect(self, op: BandedOperator) -> complex:
        psi = self.amplitudes
        return complex(np.vdot(psi, op.matvec(psi)) / np.vdot(psi, psi))


def coherent_state(alpha: complex, space: FockSpace) -> PureState:
    """Coherent state |alpha>, renormalized on the truncated space.

    Raises ``TruncationError`` if the Poisson mass above ``n_max`` exceeds the
    space's tail tolerance.
    """
    nbar = abs(alpha) ** 2
    tail = float(poisson.sf(space.n_max, nbar)) if nbar > 0 else 0.0
    if tail > space.tail_tol:
        raise TruncationError(
            f"coherent state with |alpha|^2={nbar:g} leaves tail mass {tail:.3g} "
            f"above n_max={space.n_max}"
        )
    n = space.numbers
    if alpha == 0:
        return PureState.fock(0, space)
    log_mag = n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1.0)
    log_mag -= log_mag.max()
    amps = np.exp(log_mag) * np.exp(1j * np.angle(alpha) * n)
    return PureState(space, amps / np.linalg.norm(amps))
