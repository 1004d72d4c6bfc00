"""Quantum-jump Monte Carlo of the repeat-until-lower gain protocol.

Atoms arrive as a Poisson process at rate mu. Each atom passes through the
cavity repeatedly, with the two-outcome measurement

    Omega_u |n> = cos(theta_n) |n>,    Omega_l |n> = sin(theta_n) |n+1>,

until it leaves in the lower state. theta_n = eps * c(n+1), where c is the
gain amplitude (sqrt(n) for the linear coupling). The unstimulated model
applies the shift operator S directly. Loss is unravelled into photon-counting
jumps a with no-jump decay exp(-a^dagger a t / 2).

The number of upper outcomes K before the lower one has Born probability
sum_n |psi_n|^2 cos^(2K)(theta_n) sin^2(theta_n), a mixture of geometric laws.
It is sampled exactly by drawing a latent n from |psi_n|^2 and then K from
the corresponding geometric law; the post-measurement state depends only on
K. A state that is a single Fock state stays one under every operation, and
such states are propagated with scalar arithmetic.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import (
    ConvergenceError,
    DomainError,
    InsufficientData,
    NonTermination,
    TruncationError,
)
from .fock import FockSpace, PhotonDistribution, PureState
from .models import LaserModel, ModelKind

MAX_REPEATS = 10**6
TAIL_LEVELS = 5
TAIL_TOL = 1e-8
NORM_TOL = 1e-8
K_BINS = 10
DEFAULT_PASS_SCALE = 0.01


def default_pass_epsilon(model: LaserModel) -> float:
    if model.kind is ModelKind.MICROMASER:
        return model.epsilon
    if model.mu <= 0:
        return DEFAULT_PASS_SCALE
    return DEFAULT_PASS_SCALE / math.sqrt(model.mu)


def default_initial_state(model: LaserModel) -> PureState:
    """Fock state at the stationary mean photon number.

    Starting from vacuum with a small per-pass epsilon makes the first atoms
    need ~1/epsilon^2 passes, which trips the repeat guard.
    """
    return PureState.fock(min(int(round(model.mu)), model.n_max), model.space)


def pass_angles(kind, dim: int, epsilon: float, mu: Optional[float] = None) -> np.ndarray:
    """Rotation angle theta_n of one atom pass, for n = 0..dim-1."""
    kind = ModelKind(kind)
    m = np.arange(1, dim + 1, dtype=float)
    if kind is ModelKind.UNSTIMULATED:
        return np.full(dim, math.pi / 2)
    if kind is ModelKind.NONLINEAR:
        if not mu:
            raise DomainError("nonlinear pass angles need mu")
        return epsilon * np.sqrt(m) * (3.0 - m / mu)
    return epsilon * np.sqrt(m)


class _Kraus:
    """Precomputed per-level quantities for one atom cycle."""

    def __init__(self, theta: np.ndarray, unstimulated: bool):
        self.unstimulated = unstimulated
        self.sin = np.sin(theta)
        cos = np.cos(theta)
        self.p = self.sin**2
        self.abs_cos = np.abs(cos)
        self.neg_cos = cos < 0
        with np.errstate(divide="ignore"):
            self.log_q = np.log1p(-self.p)


def _check_tail(w, top):
    if w[-TAIL_LEVELS:].sum() > TAIL_TOL:
        raise TruncationError(f"photon-number mass reached the truncation edge n_max={top}")


def _sample_repeats(p_j: float, rng) -> int:
    if p_j <= 0:
        raise NonTermination("lower-state probability is zero at this photon number")
    k = int(rng.geometric(p_j)) - 1
    if k > MAX_REPEATS:
        raise NonTermination(f"atom needed {k} passes (> {MAX_REPEATS})")
    return k


def _cycle_vector(psi: np.ndarray, kraus: _Kraus, rng):
    """Atom cycle on a general state vector; returns (K, latent n, new psi)."""
    w = np.abs(psi) ** 2
    w /= w.sum()
    _check_tail(w, len(psi) - 1)
    if kraus.unstimulated:
        out = np.zeros_like(psi)
        out[1:] = psi[:-1]
        return 0, None, out / np.linalg.norm(out)
    j = int(np.searchsorted(np.cumsum(w), rng.random(), side="right"))
    j = min(j, len(psi) - 1)
    k = _sample_repeats(kraus.p[j], rng)
    factor = kraus.sin * np.power(kraus.abs_cos, k)
    if k % 2:
        factor = np.where(kraus.neg_cos, -factor, factor)
    amp = factor * psi
    out = np.zeros_like(psi)
    out[1:] = amp[:-1]
    nrm = np.linalg.norm(out)
    if nrm == 0:
        raise NonTermination("post-measurement state vanished")
    return k, j, out / nrm


def atom_cycle(state: PureState, epsilon: float, rng, kind="standard", mu=None):
    """Pass one upper-state atom through the cavity until it is detected in
    the lower state.

    Returns ``(K, new_state)`` where K counts the passes that ended in the
    upper state.
    """
    kind = ModelKind(kind)
    if kind is not ModelKind.UNSTIMULATED and not epsilon > 0:
        raise DomainError("epsilon must be positive")
    theta = pass_angles(kind, state.space.dim, epsilon, mu)
    kraus = _Kraus(theta, kind is ModelKind.UNSTIMULATED)
    k, _, psi = _cycle_vector(np.array(state.amplitudes), kraus, rng)
    return k, PureState(state.space, psi)


@dataclass(frozen=True)
class TrajectoryConfig:
    model: LaserModel
    duration: float
    seed: int = 0
    sample_dt: float = 1.0
    epsilon: Optional[float] = None
    initial: Optional[PureState] = None
    stream: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError("duration must be positive")
        if not self.sample_dt > 0:
            raise DomainError("sample_dt must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if self.initial is not None and self.initial.space != self.model.space:
            raise DomainError("initial state lives on a different Fock space")

    @property
    def pass_epsilon(self) -> float:
        return self.epsilon if self.epsilon is not None else default_pass_epsilon(self.model)

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(ss))

    def with_stream(self, stream: int) -> TrajectoryConfig:
        return TrajectoryConfig(
            self.model, self.duration, self.seed, self.sample_dt, self.epsilon, self.initial, stream
        )


def k_bin_edges(config: TrajectoryConfig, bins: int = K_BINS) -> np.ndarray:
    """Bin edges for repeat counts K: quantiles of the geometric law at the
    mean photon number, last edge infinite."""
    model = config.model
    if model.kind is ModelKind.UNSTIMULATED:
        return np.array([0.0, 1.0, np.inf])
    dim = model.space.dim
    theta = pass_angles(model.kind, dim, config.pass_epsilon, model.mu)
    n_ref = min(int(round(model.mu)), dim - 2)
    p = math.sin(theta[n_ref]) ** 2
    if p >= 1:
        return np.array([0.0, 1.0, np.inf])
    q = np.arange(1, bins) / bins
    inner = np.ceil(np.log1p(-q) / math.log1p(-p))
    return np.unique(np.concatenate([[0.0], inner, [np.inf]]))


def _bin_table(kraus: _Kraus, edges: np.ndarray) -> np.ndarray:
    """P(edges[b] <= K < edges[b+1] | latent n) for every level n."""
    lq = kraus.log_q[:, None]
    e = edges[None, :]
    with np.errstate(invalid="ignore"):
        surv = np.where(np.isinf(e), 0.0, np.exp(np.where(e == 0, 0.0, e * lq)))
    return surv[:, :-1] - surv[:, 1:]


@dataclass(frozen=True)
class TrajectoryRecord:
    loss_times: np.ndarray
    atom_times: np.ndarray
    repeat_counts: np.ndarray
    sample_times: np.ndarray
    n_samples: np.ndarray
    populations: np.ndarray
    final_state: PureState
    k_edges: np.ndarray
    k_expected: np.ndarray
    max_norm_error: float
    duration: float = field(default=0.0)


def _jump_delay(w, n, r):
    """Delay s at which sum_n w_n exp(-n s) falls to r (inf if never)."""
    if w[0] >= r:
        return math.inf
    log_r = math.log(r)
    s = 0.0
    for _ in range(200):
        e = w * np.exp(-n * s)
        total = e.sum()
        h = math.log(total) - log_r
        dh = -(n * e).sum() / total
        step = -h / dh
        s += step
        if abs(step) <= 1e-13 * (1.0 + s):
            return s
    raise ConvergenceError("jump-time root search did not converge")


def run_trajectory(config: TrajectoryConfig) -> TrajectoryRecord:
    model = config.model
    space = model.space
    dim = space.dim
    top = space.n_max
    mu = model.mu
    rng = config.rng()
    kraus = _Kraus(
        pass_angles(model.kind, dim, config.pass_epsilon, model.mu),
        model.kind is ModelKind.UNSTIMULATED,
    )
    edges = k_bin_edges(config)
    table = _bin_table(kraus, edges)
    k_expected = np.zeros(len(edges) - 1)
    nvec = np.arange(dim, dtype=float)

    init = config.initial if config.initial is not None else default_initial_state(model)
    psi = np.array(init.normalized().amplitudes)
    support = np.flatnonzero(psi)
    fock = int(support[0]) if len(support) == 1 else None

    T = config.duration
    n_samp = int(math.floor(T / config.sample_dt + 1e-9)) + 1
    sample_times = np.arange(n_samp) * config.sample_dt
    pops = np.zeros((n_samp, dim))
    si = 0
    loss_times, atom_times, repeats = [], [], []
    norm_err = 0.0
    t = 0.0

    while True:
        ta = t + rng.exponential(1.0 / mu) if mu > 0 else math.inf
        r = rng.random()
        if fock is not None:
            tj = t + (-math.log(r) / fock if fock > 0 else math.inf)
        else:
            w = np.abs(psi) ** 2
            w /= w.sum()
            if ta < math.inf and (w * np.exp(-nvec * (ta - t))).sum() > r:
                tj = math.inf
            else:
                tj = t + _jump_delay(w, nvec, r)
        tev = min(ta, tj)

        horizon = min(tev, T)
        while si < n_samp and sample_times[si] <= horizon:
            if fock is not None:
                pops[si, fock] = 1.0
            else:
                ww = w * np.exp(-nvec * (sample_times[si] - t))
                pops[si] = ww / ww.sum()
            si += 1
        if tev > T:
            break

        if fock is None:
            psi = psi * np.exp(-nvec * (tev - t) / 2.0)
            psi /= np.linalg.norm(psi)
        t = tev

        if ta <= tj:
            atom_times.append(t)
            if fock is not None:
                if fock >= top - TAIL_LEVELS + 1:
                    raise TruncationError(f"photon number reached the truncation edge n_max={top}")
                if kraus.unstimulated:
                    k = 0
                else:
                    k = _sample_repeats(kraus.p[fock], rng)
                k_expected += table[fock]
                fock += 1
                psi = np.zeros(dim, dtype=complex)
                psi[fock] = 1.0
            else:
                w = np.abs(psi) ** 2
                k_expected += (w / w.sum()) @ table
                k, _, psi = _cycle_vector(psi, kraus, rng)
            repeats.append(k)
        else:
            loss_times.append(t)
            if fock is not None:
                fock -= 1
                psi = np.zeros(dim, dtype=complex)
                psi[fock] = 1.0
            else:
                out = np.zeros_like(psi)
                out[:-1] = np.sqrt(nvec[1:]) * psi[1:]
                psi = out / np.linalg.norm(out)
        if fock is None:
            norm_err = max(norm_err, abs(np.linalg.norm(psi) - 1.0))
            if norm_err > NORM_TOL:
                raise ConvergenceError(f"state norm drifted by {norm_err:.3g}")
            support = np.flatnonzero(psi)
            if len(support) == 1:
                fock = int(support[0])

    return TrajectoryRecord(
        loss_times=np.array(loss_times),
        atom_times=np.array(atom_times),
        repeat_counts=np.array(repeats, dtype=np.int64),
        sample_times=sample_times,
        n_samples=pops @ nvec,
        populations=pops,
        final_state=PureState(space, psi),
        k_edges=edges,
        k_expected=k_expected,
        max_norm_error=norm_err,
        duration=T,
    )


def run_ensemble(config: TrajectoryConfig, count: int, workers: int = 1) -> list:
    """``count`` independent trajectories, stream i for trajectory i."""
    if count < 1:
        raise DomainError("need at least one trajectory")
    configs = [config.with_stream(i) for i in range(count)]
    if workers <= 1:
        return [run_trajectory(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_trajectory, configs))


@dataclass(frozen=True)
class EnsembleStats:
    n_records: int
    mean: float
    mean_se: float
    fano: float
    fano_se: float
    distribution: np.ndarray
    distribution_se: np.ndarray
    k_edges: np.ndarray
    k_observed: np.ndarray
    k_expected: np.ndarray
    chi2: float
    chi2_p: float
    atoms: int

    def photon_distribution(self) -> PhotonDistribution:
        return PhotonDistribution(self.distribution / self.distribution.sum())


def _pooled_fano(m1, m2):
    mean = m1.mean()
    return (m2.mean() - mean * mean) / mean


def ensemble_stats(records: Sequence[TrajectoryRecord], burn_in: float) -> EnsembleStats:
    """Pooled post-burn-in photon statistics with across-trajectory errors.

    Standard errors treat trajectories as the independent units: the mean's
    from the spread of per-trajectory means, the Fano factor's by jackknife.
    """
    if len(records) < 2:
        raise InsufficientData("need at least two trajectories")
    sel = records[0].sample_times >= burn_in
    if not sel.any():
        raise InsufficientData("burn-in leaves no samples")
    nvec = np.arange(records[0].populations.shape[1], dtype=float)
    pops = np.array([r.populations[sel].mean(axis=0) for r in records])
    m1 = pops @ nvec
    m2 = pops @ nvec**2
    N = len(records)
    mean = float(m1.mean())
    mean_se = float(m1.std(ddof=1) / math.sqrt(N))
    fano = float(_pooled_fano(m1, m2))
    idx = np.arange(N)
    jack = np.array([_pooled_fano(m1[idx != i], m2[idx != i]) for i in range(N)])
    fano_se = float(math.sqrt((N - 1) / N * ((jack - jack.mean()) ** 2).sum()))

    edges = records[0].k_edges
    observed = np.zeros(len(edges) - 1)
    expected = np.zeros(len(edges) - 1)
    for r in records:
        if len(r.repeat_counts):
            b = np.searchsorted(edges, r.repeat_counts, side="right") - 1
            observed += np.bincount(b, minlength=len(observed))
        expected += r.k_expected
    keep = expected > 0
    if keep.sum() >= 2:
        e = expected[keep] * observed[keep].sum() / expected[keep].sum()
        chi2, p = stats.chisquare(observed[keep], e)
    else:
        chi2, p = 0.0, 1.0

    return EnsembleStats(
        n_records=N,
        mean=mean,
        mean_se=mean_se,
        fano=fano,
        fano_se=fano_se,
        distribution=pops.mean(axis=0),
        distribution_se=pops.std(axis=0, ddof=1) / math.sqrt(N),
        k_edges=edges,
        k_observed=observed,
        k_expected=expected,
        chi2=float(chi2),
        chi2_p=float(p),
        atoms=int(sum(len(r.atom_times) for r in records)),
    )
