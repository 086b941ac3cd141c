import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dopfocus.focusing import focus_at
from dopfocus.scene import RadarParams, Target
from dopfocus.sparse_recovery import (
    Dictionary, annihilating_solve, build_dictionary, coherence, coherence_bruteforce,
    correlation_pattern, iht_solve, omp_solve, refine_parabolic,
)
from dopfocus.waveform import make_pulse
from dopfocus.xampler import select_kappa, xample_analytic


def test_full_band_dictionary_is_orthogonal(small, flat):
    kap = select_kappa(small, small.nyquist_count)
    D = build_dictionary(small, flat, kap, delta_tau=1 / small.bandwidth)
    G = D.matrix.conj().T @ D.matrix
    assert D.n_tau == small.nyquist_count
    assert np.allclose(G, G[0, 0].real * np.eye(D.n_tau), atol=1e-10 * abs(G[0, 0]))
    assert coherence(D) < 1e-10


def test_paper_dims_and_entries():
    p = RadarParams(100, 10e-6, 200e6)
    sh = make_pulse(p)
    kap = select_kappa(p, 200)
    D = build_dictionary(p, sh, kap, delta_tau=2.5e-9)
    assert D.matrix.shape == (200, 4000)
    assert D.n_tau * D.delta_tau == pytest.approx(p.pri, rel=1e-15)
    rng = np.random.default_rng(0)
    for m, q in zip(rng.integers(0, 200, 20), rng.integers(0, 4000, 20)):
        k = kap.kappa[m]
        ref = sh.spectrum(k) / p.pri * np.exp(-2j * np.pi * k * q / 4000)
        assert abs(D.matrix[m, q] - ref) < 1e-12 * abs(ref)


def test_dictionary_errors(small):
    sh = make_pulse(small, "flat", occupied=(-5, 4))
    with pytest.raises(ValueError, match="k=-6"):
        build_dictionary(small, sh, select_kappa(small, 12))
    with pytest.raises(ValueError, match="does not divide"):
        build_dictionary(small, make_pulse(small), select_kappa(small, 4), delta_tau=3e-8)


def test_off_grid_atoms_agree_with_columns(small, flat):
    D = build_dictionary(small, flat, select_kappa(small, 10))
    assert np.allclose(D.atoms(D.delays[[3, 77]]), D.matrix[:, [3, 77]], atol=1e-12 * np.abs(D.matrix).max())


def test_coherence_fast_equals_bruteforce(small, flat):
    for mode in ("consecutive", "random"):
        D = build_dictionary(small, flat, select_kappa(small, 15, mode, rng_seed=3))
        assert coherence(D) == pytest.approx(coherence_bruteforce(D), rel=1e-12)
        mu = correlation_pattern(D, 5)
        assert mu[5] == pytest.approx(1.0) and np.all(mu <= 1 + 1e-12)


def test_coherence_consecutive_vs_random():
    p = RadarParams(100, 10e-6, 200e6)
    sh = make_pulse(p)
    cons = coherence(build_dictionary(p, sh, select_kappa(p, 200)))
    assert abs(cons - 0.9) <= 0.1
    # half-bin neighbours see in-band phases spread over [-pi/2, pi/2): mean |e^{j theta}| -> 2/pi
    rand = coherence(build_dictionary(p, sh, select_kappa(p, 200, "random", rng_seed=0)))
    assert rand == pytest.approx(2 / math.pi, abs=0.05)
    # on the Nyquist grid only the partial-DFT sidelobes remain
    rand_nyq = coherence(build_dictionary(p, sh, select_kappa(p, 200, "random", rng_seed=0), delta_tau=5e-9))
    assert rand_nyq < 0.3


def _rand_dict(seed, n_tau=64, K=16):
    p = RadarParams(1, 10e-6, 6.4e6)  # 64 Nyquist bins
    sh = make_pulse(p)
    return build_dictionary(p, sh, select_kappa(p, K, "random", rng_seed=seed), delta_tau=p.pri / n_tau)


def test_omp_one_sparse_exact():
    D = _rand_dict(1)
    x = np.zeros(D.n_tau, complex)
    x[17] = 0.3 - 2j
    s = omp_solve(D, D.matrix @ x, 1)
    assert list(s.support) == [17]
    assert abs(s.amplitudes[0] - x[17]) < 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_omp_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    D = _rand_dict(seed % 50)
    A = D.matrix
    n1, n2 = rng.choice(D.n_tau, 2, replace=False)
    if min(abs(n1 - n2), D.n_tau - abs(n1 - n2)) < 4:
        n2 = (n1 + 8) % D.n_tau
    x = np.zeros(D.n_tau, complex)
    x[[n1, n2]] = rng.uniform(0.5, 1.5, 2) * np.exp(2j * np.pi * rng.uniform(size=2))
    y = A @ x
    best, best_r = None, np.inf
    for sup in itertools.combinations(range(D.n_tau), 2):
        coef, *_ = np.linalg.lstsq(A[:, sup], y, rcond=None)
        r = np.linalg.norm(y - A[:, sup] @ coef)
        if r < best_r - 1e-12:
            best, best_r = set(sup), r
    s = omp_solve(D, y, 2)
    assert set(s.support) == best == {n1, n2}
    assert np.allclose(s.dense(D.n_tau), x, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), order=st.integers(1, 6))
def test_omp_residual_orthogonal_and_monotone(seed, order):
    rng = np.random.default_rng(seed)
    D = _rand_dict(seed % 20)
    y = rng.standard_normal(len(D.kappa)) + 1j * rng.standard_normal(len(D.kappa))
    s = omp_solve(D, y, order)
    r = y - D.matrix[:, s.support] @ s.amplitudes
    assert np.abs(D.matrix[:, s.support].conj().T @ r).max() < 1e-9
    assert np.all(np.diff(s.energy_history) <= 1e-12)
    assert len(s.support) <= order
    assert s.residual_energy == pytest.approx(np.vdot(r, r).real, rel=1e-9, abs=1e-20)


def test_omp_rank_deficient_stops():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 10)) + 1j * rng.standard_normal((3, 10))
    A[2] = A[0] + A[1]  # atoms span only a plane of C^3
    D = Dictionary(A, 1.0, 10, select_kappa(RadarParams(1, 1.0, 10.0), 3), np.ones(3), 1.0)
    s = omp_solve(D, rng.standard_normal(3) + 0j, 3)
    assert len(s.support) == 2 and s.rank_deficient
    exact = omp_solve(D, A[:, 4] - 2 * A[:, 7], 3)
    assert len(exact.support) == 2 and not exact.rank_deficient  # any two atoms span the plane
    assert exact.residual_energy < 1e-20


def test_iht_recovers_sparse():
    D = _rand_dict(3, K=32)
    x = np.zeros(D.n_tau, complex)
    x[[5, 40]] = [1.0, -0.7j]
    s = iht_solve(D, D.matrix @ x, 2, n_iter=500)
    assert set(s.support) == {5, 40}
    assert np.allclose(s.dense(D.n_tau), x, atol=1e-8)


def test_model_consistency_focus_equals_pAx(small, flat):
    kap = select_kappa(small, 20, "random", rng_seed=1)
    D = build_dictionary(small, flat, kap)
    nu = 3 * small.doppler_bin
    x = np.zeros(D.n_tau, complex)
    x[[10, 250]] = [1.0, 0.4 + 0.2j]
    tg = [Target(D.delays[n], nu, x[n]) for n in (10, 250)]
    psi = focus_at(xample_analytic(small, flat, tg, kap), nu).psi
    assert np.abs(psi - small.pulse_count * D.matrix @ x).max() < 1e-10 * np.abs(psi).max()


def test_omp_amplitude_through_focusing(small, flat):
    kap = select_kappa(small, 20)
    D = build_dictionary(small, flat, kap)
    tg = Target(D.delays[123], -2 * small.doppler_bin, 0.6 * np.exp(0.4j))
    psi = focus_at(xample_analytic(small, flat, [tg], kap), tg.doppler).psi
    s = omp_solve(D, psi, 1)
    assert list(s.support) == [123]
    assert abs(s.amplitudes[0] / small.pulse_count - tg.amplitude) < 1e-6


def test_annihilating_single():
    t0, a = 0.3141592, 0.8 - 0.1j
    k = np.arange(-3, 1)
    r = annihilating_solve(a * np.exp(-2j * np.pi * k * t0), 1, k0=-3)
    assert r.recoverable and not r.ill_conditioned
    assert abs(r.delays[0] - t0) < 1e-10 * t0 and abs(r.amplitudes[0] - a) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_annihilating_two_off_grid(seed):
    rng = np.random.default_rng(seed)
    pri = 10e-6
    d = np.sort(rng.uniform(0.05, 0.45, 2)) * pri + np.array([0.0, 0.5 * pri])
    a = rng.uniform(0.5, 1.5, 2) * np.exp(2j * np.pi * rng.uniform(size=2))
    k = np.arange(-2, 2)
    y = np.exp(-2j * np.pi * np.outer(k, d) / pri) @ a
    r = annihilating_solve(y, 2, k0=-2, pri=pri)
    assert np.allclose(r.delays, d, rtol=1e-9, atol=0)
    assert np.allclose(r.amplitudes, a, rtol=1e-9, atol=0)


def test_annihilating_too_few_samples_and_ill_conditioned():
    assert not annihilating_solve(np.ones(5, complex), 3).recoverable
    rng = np.random.default_rng(1)
    junk = rng.standard_normal(8) * np.exp(0.9 * np.arange(8))
    assert annihilating_solve(junk.astype(complex), 2).ill_conditioned


def test_parabolic_examples():
    assert refine_parabolic((1, 2, 1)) == (0.0, True)
    assert refine_parabolic((1, 2, 2)) == (0.5, True)
    assert refine_parabolic((3, 2, 1)) == (0.0, False)


@pytest.mark.parametrize("frac", [0.0, 0.125, 0.25, 0.375, 0.5, -0.25])
def test_parabolic_off_grid_delay(small, flat, frac):
    kap = select_kappa(small, 20)
    D = build_dictionary(small, flat, kap)
    n0 = 100
    y = D.atoms((n0 + frac) * D.delta_tau)[:, 0]
    c = np.abs(D.matrix.conj().T @ y)
    n = int(np.argmax(c))
    off, ok = refine_parabolic(c[[n - 1, n, n + 1]])
    assert ok and abs(n + off - (n0 + frac)) < 0.1
