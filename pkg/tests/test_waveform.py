import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dopfocus.scene import RadarParams, Target, random_scene
from dopfocus.waveform import (
    add_awgn, band_indices, decimate, make_pulse, noise_level_for_snr, noise_psd_for_snr,
    read_signal, read_signal_header, spectrum_at, synthesize, write_signal,
)

SQRT_HALF = 0.7071067811865476


@pytest.mark.parametrize("kind,kw", [("flat", {}), ("rrc", {"rolloff": 0.25}), ("gaussian", {"width": 0.2}),
                                     ("flat", {"occupied": (-10, 9)})])
def test_unit_power_and_band_limit(small, kind, kw):
    sh = make_pulse(small, kind, **kw)
    # quadrature of |h|^2 over one period at 4x oversampling (exact for a trig. polynomial)
    n = 4 * small.nyquist_count
    t = np.arange(n) * small.pri / n
    e = np.sum(np.abs(sh.time_response(t)) ** 2) * small.pri / n
    assert e / small.pulse_time == pytest.approx(1.0, abs=1e-9)
    k = np.arange(sh.k_min, sh.k_max + 1)
    band = np.isin(k, band_indices(small))
    frac = np.sum(np.abs(sh.table[~band]) ** 2) / np.sum(np.abs(sh.table) ** 2)
    assert frac < 1e-6


def test_flat_spectrum_constant_and_edges(small, flat):
    vals = [spectrum_at(flat, k) for k in band_indices(small)]
    assert np.ptp(np.abs(vals)) == 0.0
    assert abs(spectrum_at(flat, 100)) < 1e-6 * abs(vals[0])
    with pytest.raises(ValueError, match="band edge"):
        spectrum_at(flat, 10_000)


def test_rrc_profile_midpoint(small):
    sh = make_pulse(small, "rrc", rolloff=0.25)
    # taper spans 6..10 MHz; k = 80 sits at 8 MHz, the taper midpoint
    assert abs(spectrum_at(sh, 80) / spectrum_at(sh, 0)) == pytest.approx(SQRT_HALF, rel=1e-12)
    assert abs(spectrum_at(sh, 60) / spectrum_at(sh, 0)) == pytest.approx(1.0, rel=1e-12)


def test_flat_time_response_matches_fourier_sum(small, flat):
    t = np.linspace(-3e-6, 13e-6, 97)
    k = band_indices(small)
    direct = np.exp(2j * np.pi * np.outer(t, k) / small.pri) @ flat.spectrum(k) / small.pri
    assert np.allclose(flat.time_response(t), direct, rtol=0, atol=1e-9 * np.abs(direct).max())


def test_synthesize_empty_and_static(small, flat):
    z = synthesize(small, flat, [])
    assert z.samples.shape == (small.pulse_count * small.nyquist_count,)
    assert not z.samples.any()
    s = synthesize(small, flat, [Target(2.3e-6, 0.0, 0.5j)]).frames
    assert np.array_equal(s, np.broadcast_to(s[0], s.shape))


def test_synthesize_doppler_quarter_cycle(small, flat):
    nu = math.pi / (2 * small.pri)
    fr = synthesize(small, flat, [Target(1.7e-6, nu, 1.0)]).frames
    for p in range(small.pulse_count):
        assert np.allclose(fr[p], fr[0] * (-1j) ** p, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_synthesize_linear(seed):
    p = RadarParams(6, 10e-6, 20e6)
    sh = make_pulse(p, "rrc", rolloff=0.3)
    a = random_scene(p, 2, seed)
    b = random_scene(p, 3, seed + 1)
    sa, sb = synthesize(p, sh, a).samples, synthesize(p, sh, b).samples
    sab = synthesize(p, sh, a + b).samples
    assert np.max(np.abs(sab - sa - sb)) < 1e-12 * max(1.0, np.abs(sab).max())


def test_awgn_infinite_snr_is_identity(small, flat):
    s = synthesize(small, flat, [Target(1e-6, 0.0)])
    assert add_awgn(s, small, math.inf, Target(1e-6, 0.0), 0) is s


def test_awgn_empirical_snr(flat):
    p = RadarParams(50, 10e-6, 20e6)  # 10^4 samples
    ref = Target(1e-6, 0.0, 0.8)
    sh = make_pulse(p, "flat")
    noise = add_awgn(synthesize(p, sh, []), p, -7.0, ref, 3).samples
    n0_hat = 2.0 * np.mean(np.abs(noise) ** 2) / p.bandwidth  # PSD N0/2
    snr_hat = 10 * math.log10(abs(ref.amplitude) ** 2 / (n0_hat * p.bandwidth))
    assert abs(snr_hat - (-7.0)) < 0.2


def test_awgn_band_limited(small, flat):
    sig = synthesize(small, flat, [], oversample=2)
    noisy = add_awgn(sig, small, 0.0, Target(0.0, 0.0), 1)
    spec = np.fft.fft(noisy.frames, axis=1)
    k = np.fft.fftfreq(noisy.frame_len, 1.0 / noisy.frame_len).astype(int)
    out = ~np.isin(k, band_indices(small))
    assert np.abs(spec[:, out]).max() < 1e-9 * np.abs(spec).max()


def test_snr_definition_amplitude_doubling(small):
    n0 = noise_psd_for_snr(-10.0, 1.0, small)
    assert noise_psd_for_snr(-10.0 + 20 * math.log10(2), 2.0, small) == pytest.approx(n0, rel=1e-12)
    assert noise_level_for_snr(-10.0, 1.0, small) == pytest.approx(n0 / 2, rel=1e-15)


def test_signal_dump_roundtrip(tmp_path, small, flat):
    s = add_awgn(synthesize(small, flat, [Target(1e-6, 100.0)]), small, 0.0, Target(0, 0), 2)
    write_signal(tmp_path / "s.bin", s)
    h = read_signal_header(tmp_path / "s.bin")
    assert (h["pulse_count"], h["frame_len"], h["rate"]) == (16, 200, 20e6)
    back = read_signal(tmp_path / "s.bin")
    assert np.allclose(back.samples, s.samples, atol=1e-6 * np.abs(s.samples).max())


def test_decimate_keeps_every_nth(small, flat):
    s = synthesize(small, flat, [Target(1e-6, 100.0)])
    d = decimate(s, 10)
    assert d.frame_len == 20 and d.rate == 2e6
    assert np.array_equal(d.frames, s.frames[:, ::10])
    with pytest.raises(ValueError):
        decimate(s, 7)
