import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats

from laserlimits.errors import DomainError, ModelMismatch, SizeGuard
from laserlimits.models import (
    ModelKind,
    _coefficients,
    full_generator,
    gain_amplitude,
    gain_coefficient,
    make_model,
    sideband_block,
)

KINDS = ["standard", "unstimulated", "nonlinear", "micromaser"]


def build(kind, mu=20.0, **kw):
    if kind == "micromaser" and "phi" not in kw and "epsilon" not in kw:
        kw["phi"] = 0.8
    return make_model(kind, mu, **kw)


def test_gain_amplitude_examples():
    assert gain_amplitude(build("standard"), 4) == 2.0
    for n in (1, 7, 30):
        assert gain_amplitude(build("unstimulated"), n) == 1.0
    nl = make_model("nonlinear", 50.0)
    assert gain_amplitude(nl, 50) == pytest.approx(2 * math.sqrt(50), rel=1e-15)
    with pytest.raises(ModelMismatch):
        gain_amplitude(build("micromaser"), 3)


def test_gain_coefficient_examples():
    assert gain_coefficient(build("standard"), 1, 2) == pytest.approx(2 * math.sqrt(2) / 3, rel=1e-15)
    for kind in KINDS:
        m = build(kind)
        for n in (1, 5, 20):
            assert gain_coefficient(m, n, n) == pytest.approx(1.0, abs=1e-15)
    # eps*sqrt(n) = pi/2 at n = 4
    mm = make_model("micromaser", 4.0, epsilon=math.pi / 4, n_max=10)
    assert gain_coefficient(mm, 4, 4) == pytest.approx(1.0, abs=1e-15)


def test_gain_coefficient_range_errors():
    m = build("standard")
    with pytest.raises(DomainError):
        gain_coefficient(m, 0, 1)
    with pytest.raises(DomainError):
        gain_coefficient(m, 1, m.n_max + 1)


def test_micromaser_degeneracy_guard():
    m = make_model("micromaser", 4.0, epsilon=0.5, n_max=10)
    # the size guard keeps valid models away from the degeneracy; force it
    object.__setattr__(m, "epsilon", 2 * math.pi)
    with pytest.raises(DomainError):
        _coefficients(m, 1, 1)


def test_model_validation():
    with pytest.raises(DomainError):
        make_model("standard", -1.0)
    with pytest.raises(SizeGuard):
        make_model("nonlinear", 20.0, n_max=100)
    with pytest.raises(SizeGuard):
        make_model("micromaser", 100.0, phi=2.5)  # eps*sqrt(n_max) > pi
    with pytest.raises(ModelMismatch):
        make_model("standard", 20.0, epsilon=0.1)
    with pytest.raises(DomainError):
        make_model("micromaser", 20.0, epsilon=0.1, phi=0.4)
    with pytest.raises(DomainError):
        make_model("micromaser", 20.0)
    assert make_model("nonlinear", 20.0).n_max == 59


def test_phi_epsilon_conversion():
    m = make_model("micromaser", 100.0, phi=1.0)
    assert m.epsilon == pytest.approx(0.1, rel=1e-15)
    assert m.phi == pytest.approx(1.0, rel=1e-15)


def test_standard_k0_block_is_photon_number_equation():
    mu = 20.0
    blk = sideband_block(build("standard", mu), 0)
    n = np.arange(blk.size)
    np.testing.assert_allclose(blk.sub, mu, rtol=1e-15)
    np.testing.assert_array_equal(blk.sup, n[1:].astype(float))
    np.testing.assert_array_equal(blk.diag, -mu - n)


@pytest.mark.parametrize("kind", KINDS)
def test_k0_block_is_birth_death_generator(kind):
    blk = sideband_block(build(kind), 0)
    assert np.all(blk.sub >= 0) and np.all(blk.sup >= 0)
    cols = blk.to_dense().sum(axis=0)
    # the top column loses mu to the dropped gain transition out of n_max
    np.testing.assert_allclose(cols[:-1], 0.0, atol=1e-12)
    assert cols[-1] == pytest.approx(-blk.sub[0] if kind != "micromaser" else -20.0)


def test_f_normalized_sub_coefficients():
    mu = 20.0
    n = np.arange(2, 40, dtype=float)  # target index of the gain coupling
    un = sideband_block(build("unstimulated", mu), 1, "f")
    np.testing.assert_allclose(un.sub[: len(n)], mu * np.sqrt(n / (n - 1)), rtol=1e-14)
    sd = sideband_block(build("standard", mu), 1, "f")
    np.testing.assert_allclose(sd.sub[: len(n)], mu * 2 * n / (2 * n - 1), rtol=1e-14)


def test_f_normalization_is_similarity_transform():
    m = build("standard", 30.0)
    raw = sideband_block(m, 1).to_dense()
    f = sideband_block(m, 1, "f").to_dense()
    D = np.diag(np.sqrt(np.arange(1, m.n_max + 1.0)))
    np.testing.assert_allclose(f, D @ raw @ np.linalg.inv(D), atol=1e-12)


def test_block_argument_errors():
    m = build("standard")
    with pytest.raises(DomainError):
        sideband_block(m, m.n_max + 1)
    with pytest.raises(DomainError):
        sideband_block(m, 2, "f")


def _poisson_rho(model):
    p = stats.poisson.pmf(np.arange(model.space.dim), model.mu)
    return np.diag(p / p.sum())


@pytest.mark.parametrize("kind", KINDS)
def test_full_generator_stationary(kind):
    m = build(kind)
    assert np.max(np.abs(full_generator(m).apply(_poisson_rho(m)))) < 1e-10


@pytest.mark.parametrize("kind", KINDS)
def test_full_generator_trace_preserving(kind):
    m = build(kind)
    rng = np.random.default_rng(1)
    d = m.space.dim
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = x + x.conj().T
    rho[-1, :] = rho[:, -1] = 0  # keep clear of the dropped boundary gain
    assert abs(np.trace(full_generator(m).apply(rho))) < 1e-12 * np.abs(rho).sum()


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("k", [0, 1, 3])
def test_full_generator_matches_blocks(kind, k):
    m = build(kind)
    d = m.space.dim
    rng = np.random.default_rng(k)
    v = rng.normal(size=d - k) + 1j * rng.normal(size=d - k)
    rho = np.zeros((d, d), dtype=complex)
    idx = np.arange(k, d)
    rho[idx - k, idx] = v
    out = full_generator(m).apply(rho)
    # phase symmetry: nothing leaks off the k-th diagonal
    mask = np.zeros((d, d), bool)
    mask[idx - k, idx] = True
    assert np.all(out[~mask] == 0)
    np.testing.assert_allclose(out[idx - k, idx], sideband_block(m, k).matvec(v), atol=1e-12)


def test_full_generator_size_guard():
    with pytest.raises(SizeGuard):
        full_generator(make_model("standard", 400.0))


def test_full_generator_linear_operator():
    m = build("standard", 5.0)
    op = full_generator(m).as_linear_operator()
    rho = _poisson_rho(m)
    np.testing.assert_allclose(op.matvec(rho.ravel()), full_generator(m).apply(rho).ravel())


def test_standard_offdiagonal_defect():
    m = make_model("standard", 20.0, n_max=2000)
    n = np.arange(1, 1000, dtype=float)
    got = 1 - _coefficients(m, n, n + 1)
    np.testing.assert_allclose(got, (np.sqrt(n + 1) - np.sqrt(n)) ** 2 / (2 * n + 1), rtol=1e-7)
    # 1/(4n(2n+1)) shares only the leading 1/(8n^2) term
    ratio = got * 8 * n * n
    assert np.all(np.abs(ratio - 1) < 1.0 / n)
    assert abs(ratio[-1] - 1) < 2e-3


def test_micromaser_small_epsilon_recovers_standard():
    n = np.arange(1, 60, dtype=float)
    std = make_model("standard", 20.0)
    for eps, tol in ((1e-4, 1e-6), (1e-5, 1e-8)):
        mm = make_model("micromaser", 20.0, epsilon=eps)
        for m in (n + 1, n + 5):
            np.testing.assert_allclose(_coefficients(mm, n, m), _coefficients(std, n, m), rtol=tol)


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(KINDS),
    st.floats(5.0, 200.0),
    st.floats(0.05, 1.4),
    st.integers(1, 10**4),
    st.integers(1, 10**4),
)
def test_gain_coefficient_range_and_symmetry(kind, mu, phi, a, b):
    kw = {"phi": phi} if kind == "micromaser" else {}
    try:
        m = make_model(kind, mu, **kw)
    except SizeGuard:
        assume(False)  # outside the valid micromaser domain
    n = 1 + a % m.n_max
    k = 1 + b % m.n_max
    g = gain_coefficient(m, n, k)
    assert 0 < g <= 1 + 1e-15
    assert g == gain_coefficient(m, k, n)
