import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from laserlimits.dynamics import stationary_distribution
from laserlimits.errors import DomainError, InsufficientData, NonTermination, TruncationError
from laserlimits.fock import FockSpace, PureState, coherent_state, number_function, shift_up_op
from laserlimits.models import make_model
from laserlimits.trajectories import (
    TrajectoryConfig,
    atom_cycle,
    ensemble_stats,
    run_ensemble,
    run_trajectory,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_atom_cycle_pi_half_transfer():
    space = FockSpace(20)
    n = 8
    eps = math.pi / 2 / math.sqrt(n + 1)
    r = rng()
    for _ in range(20):
        k, out = atom_cycle(PureState.fock(n, space), eps, r)
        assert k == 0
        assert abs(out.amplitudes[n + 1]) == pytest.approx(1.0, abs=1e-15)


def test_atom_cycle_unstimulated_shift_keeps_phases():
    space = FockSpace(30)
    psi = coherent_state(2.0 * np.exp(0.4j), space)
    k, out = atom_cycle(psi, 0.0, rng(), kind="unstimulated")
    assert k == 0
    before = psi.amplitudes[:-1]
    after = out.amplitudes[1:]
    np.testing.assert_allclose(np.abs(after), np.abs(before) / np.linalg.norm(before), atol=1e-15)
    assert np.array_equal(np.angle(after), np.angle(before / np.linalg.norm(before)))
    assert out.amplitudes[0] == 0


def test_atom_cycle_mean_repeats():
    space = FockSpace(40)
    r = rng(1)
    ks = np.array([atom_cycle(PureState.fock(19, space), 0.01, r)[0] for _ in range(10_000)])
    assert ks.mean() == pytest.approx(1 / (0.01**2 * 20) - 1, rel=0.05)


def _kraus_ops(space, eps):
    up = number_function(space, lambda m: np.cos(eps * np.sqrt(m)), offset=1)
    low = shift_up_op(space) @ number_function(space, lambda m: np.sin(eps * np.sqrt(m)), offset=1)
    return up, low


def test_atom_cycle_matches_pass_by_pass_measurement():
    # brute force: one Born-sampled pass at a time with explicit Kraus operators
    space = FockSpace(25)
    eps = 0.35
    psi0 = coherent_state(1.5, space)
    up, low = _kraus_ops(space, eps)
    r = rng(2)
    brute = []
    for _ in range(4000):
        psi, k = psi0.amplitudes, 0
        while True:
            lo = low.matvec(psi)
            p_l = np.vdot(lo, lo).real
            if r.random() < p_l:
                break
            psi = up.matvec(psi)
            psi = psi / np.linalg.norm(psi)
            k += 1
        brute.append(k)
    fast = [atom_cycle(psi0, eps, r)[0] for _ in range(4000)]
    assert stats.ks_2samp(brute, fast).pvalue > 0.01
    # exact Born law P(K) = sum_n |psi_n|^2 cos^2K sin^2
    theta = eps * np.sqrt(np.arange(1, space.dim + 1))
    w = psi0.populations()
    K = np.arange(0, 12)
    pk = np.array([(w * np.cos(theta) ** (2 * k) * np.sin(theta) ** 2).sum() for k in K])
    obs = np.bincount(np.minimum(fast, 12), minlength=13)
    exp = np.append(pk, 1 - pk.sum()) * len(fast)
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_atom_cycle_post_state_is_kraus_product():
    space = FockSpace(25)
    eps = 0.35
    psi0 = coherent_state(1.5 * np.exp(1j), space)
    up, low = _kraus_ops(space, eps)
    for seed in range(10):
        k, out = atom_cycle(psi0, eps, rng(seed))
        ref = psi0.amplitudes
        for _ in range(k):
            ref = up.matvec(ref)
        ref = low.matvec(ref)
        ref = ref / np.linalg.norm(ref)
        np.testing.assert_allclose(out.amplitudes, ref, atol=1e-12)


def test_atom_cycle_errors():
    space = FockSpace(10)
    with pytest.raises(NonTermination):
        atom_cycle(PureState.fock(0, space), 1e-5, rng())
    with pytest.raises(DomainError):
        atom_cycle(PureState.fock(0, space), 0.0, rng())


def test_config_validation():
    m = make_model("standard", 20.0)
    with pytest.raises(DomainError):
        TrajectoryConfig(m, 0.0)
    with pytest.raises(DomainError):
        TrajectoryConfig(m, 10.0, sample_dt=0.0)
    with pytest.raises(DomainError):
        TrajectoryConfig(m, 10.0, initial=PureState.fock(0, FockSpace(5)))


def test_pure_decay_without_atoms():
    m = make_model("standard", 0.0)
    cfg = TrajectoryConfig(m, 3.0, seed=7, sample_dt=0.5, initial=PureState.fock(5, m.space))
    recs = run_ensemble(cfg, 1000)
    n = np.array([r.n_samples for r in recs])
    t = recs[0].sample_times
    mean, se = n.mean(axis=0), n.std(axis=0, ddof=1) / math.sqrt(len(recs))
    expect = 5 * np.exp(-t)
    assert np.all(np.abs(mean - expect) <= 3 * np.maximum(se, 1e-12))
    assert all(len(r.atom_times) == 0 for r in recs)


def test_determinism_bit_identical():
    m = make_model("standard", 20.0)
    cfg = TrajectoryConfig(m, 30.0, seed=123, initial=coherent_state(math.sqrt(20), m.space))
    a, b = run_trajectory(cfg), run_trajectory(cfg)
    for field in ("loss_times", "atom_times", "repeat_counts", "n_samples"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    c = run_trajectory(cfg.with_stream(1))
    assert not np.array_equal(a.atom_times, c.atom_times)


def test_vector_path_norm_and_ordering():
    m = make_model("standard", 20.0)
    cfg = TrajectoryConfig(m, 40.0, seed=5, initial=coherent_state(math.sqrt(20), m.space))
    rec = run_trajectory(cfg)
    assert rec.max_norm_error < 1e-8
    for times in (rec.atom_times, rec.loss_times):
        assert np.all(np.diff(times) > 0)
        assert times.min() >= 0 and times.max() <= cfg.duration
    assert abs(rec.final_state.norm - 1) < 1e-8


def test_unstimulated_trajectory_phase_preserved():
    m = make_model("unstimulated", 10.0)
    psi = coherent_state(math.sqrt(10) * np.exp(0.9j), m.space)
    cfg = TrajectoryConfig(m, 0.3, seed=2, initial=psi)
    rec = run_trajectory(cfg)
    assert len(rec.atom_times) > 0
    assert np.all(rec.repeat_counts == 0)
    amps = rec.final_state.amplitudes
    nz = np.abs(amps) > 1e-6
    # every jump and atom event is a shift or a real scaling, so phases stay n*0.9 shifted
    n = np.arange(len(amps))[nz]
    shift = len(rec.atom_times) - len(rec.loss_times)
    expect = np.angle(np.exp(1j * 0.9 * (n - shift)))
    np.testing.assert_allclose(np.angle(amps[nz]), expect, atol=1e-9)


def test_truncation_guard():
    m = make_model("standard", 20.0, n_max=28)
    with pytest.raises(TruncationError):
        run_trajectory(TrajectoryConfig(m, 200.0, seed=0))


def test_ensemble_stats_errors():
    m = make_model("standard", 5.0)
    cfg = TrajectoryConfig(m, 5.0)
    recs = run_ensemble(cfg, 2)
    with pytest.raises(InsufficientData):
        ensemble_stats(recs[:1], 1.0)
    with pytest.raises(InsufficientData):
        ensemble_stats(recs, 6.0)
    with pytest.raises(DomainError):
        run_ensemble(cfg, 0)


@pytest.fixture(scope="module")
def standard_ensemble():
    m = make_model("standard", 20.0)
    cfg = TrajectoryConfig(m, 200.0, seed=2024)
    recs = run_ensemble(cfg, 100)
    return m, cfg, recs, ensemble_stats(recs, 20.0)


def test_standard_ensemble_mean_and_fano(standard_ensemble):
    _, _, _, st_ = standard_ensemble
    assert abs(st_.mean - 20) < 3 * st_.mean_se
    assert abs(st_.fano - 1) < 3 * st_.fano_se
    assert st_.chi2_p > 0.01


def test_atom_arrivals_are_poisson(standard_ensemble):
    m, cfg, recs, _ = standard_ensemble
    counts = np.array([len(r.atom_times) for r in recs])
    se = counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(counts.mean() - m.mu * cfg.duration) < 3 * se


def test_ensemble_distribution_matches_stationary(standard_ensemble):
    m, _, recs, st_ = standard_ensemble
    p = stationary_distribution(m).p
    samples = len(recs) * (recs[0].sample_times >= 20.0).sum()
    keep = p * samples >= 10
    z = np.abs(st_.distribution - p)[keep] / st_.distribution_se[keep]
    assert np.all(z < 3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.2))
def test_atom_cycle_preserves_norm(seed, eps):
    space = FockSpace(30)
    psi = coherent_state(2.0, space)
    k, out = atom_cycle(psi, eps, rng(seed))
    assert k >= 0
    assert abs(out.norm - 1) < 1e-12
    assert out.amplitudes[0] == 0
