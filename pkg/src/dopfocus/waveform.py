"""Transmit pulse spectra and Nyquist-rate signal synthesis.

Each received frame is modelled as the tau-periodic extension of the echo,
so the Fourier series of a frame is exactly ``H(2 pi k / tau) / tau`` times
the delay/Doppler phase terms. All pulses are band-limited to the in-band
harmonics ``k in [-N/2, N/2)`` with ``N = tau * B_h``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .scene import ClutterField, RadarParams, Target, target_arrays

KINDS = ("flat", "rrc", "gaussian")


def band_indices(params: RadarParams) -> np.ndarray:
    """In-band Fourier indices ``[-N/2, N/2)``."""
    n = params.nyquist_count
    return np.arange(-(n // 2), n - n // 2)


@dataclass(frozen=True)
class PulseShape:
    """A band-limited pulse described by its spectrum on the Fourier grid.

    ``table[i]`` holds H(2 pi k / tau) for ``k = k_min + i``; the table spans
    twice the band so that out-of-band lookups return exact zeros. The
    spectrum is scaled so that ``(1/T_p) * int |h(t)|^2 dt = 1``.
    """

    kind: str
    bandwidth: float
    duration: float
    pri: float
    k_min: int
    table: np.ndarray
    rolloff: float = 0.0
    width: float = 0.0
    occupied: Optional[tuple] = None

    @property
    def k_max(self) -> int:
        return self.k_min + self.table.size - 1

    def spectrum(self, k) -> np.ndarray:
        k = np.asarray(k)
        if k.size and (k.min() < self.k_min or k.max() > self.k_max):
            raise ValueError(
                f"Fourier index outside tabulated range [{self.k_min}, {self.k_max}]; "
                f"band edge is |2 pi k / tau| = pi B_h at |k| = {self.bandwidth * self.pri / 2:g}"
            )
        return self.table[k - self.k_min]

    def time_response(self, t) -> np.ndarray:
        """The tau-periodic pulse evaluated at times ``t`` [s]."""
        t = np.asarray(t, dtype=float)
        if self.kind == "flat":
            return self._flat_time(t)
        k = np.arange(self.k_min, self.k_max + 1)
        nz = np.nonzero(self.table)[0]
        k, hk = k[nz], self.table[nz]
        out = np.empty(t.shape, dtype=complex)
        flat = t.ravel()
        res = out.ravel()
        chunk = max(1, 2_000_000 // max(1, k.size))
        for s in range(0, flat.size, chunk):
            ph = np.exp(2j * np.pi * np.outer(flat[s:s + chunk], k) / self.pri)
            res[s:s + chunk] = ph @ hk / self.pri
        return out

    def _flat_time(self, t):
        # Dirichlet kernel: sum over a run of `count` harmonics starting at k0
        nz = np.nonzero(self.table)[0]
        k0 = self.k_min + nz[0]
        count = nz.size
        h0 = self.table[nz[0]]
        x = 2.0 * np.pi * t / self.pri
        centre = k0 + (count - 1) / 2.0
        half = x / 2.0
        den = np.sin(half)
        small = np.abs(den) < 1e-12
        safe = np.where(small, 1.0, den)
        ratio = np.sin(count * half) / safe
        # at the poles the ratio tends to count * (-1)**(m*(count-1))
        m = np.round(x / (2.0 * np.pi))
        ratio = np.where(small, count * np.where((m * (count - 1)) % 2 == 0, 1.0, -1.0), ratio)
        return (h0 / self.pri) * np.exp(1j * centre * x) * ratio

    def energy(self) -> float:
        """Integral of |h(t)|^2 over one period, by Parseval."""
        return float(np.sum(np.abs(self.table) ** 2) / self.pri)


def _finish(kind, params, k, prof, **extra):
    k = np.asarray(k)
    prof = np.asarray(prof, dtype=complex)
    norm = math.sqrt(params.pri * params.pulse_time / np.sum(np.abs(prof) ** 2))
    return PulseShape(kind, params.bandwidth, params.pulse_time, params.pri, int(k[0]), prof * norm, **extra)


def _grid(params):
    n = params.nyquist_count
    k = np.arange(-n, n)
    band = (k >= -(n // 2)) & (k < n - n // 2)
    return k, band


def flat_pulse(params: RadarParams, occupied: Optional[tuple] = None) -> PulseShape:
    """Constant spectrum over the band, or over ``occupied = (k_lo, k_hi)`` only.

    A narrower occupied run keeps the same total energy, concentrating it in
    fewer harmonics.
    """
    k, band = _grid(params)
    if occupied is not None:
        lo, hi = occupied
        if lo > hi or lo < k[band][0] or hi > k[band][-1]:
            raise ValueError(f"occupied run {occupied} not inside the band")
        band = band & (k >= lo) & (k <= hi)
    prof = np.where(band, 1.0, 0.0)
    return _finish("flat", params, k, prof, occupied=None if occupied is None else tuple(int(v) for v in occupied))


def rrc_pulse(params: RadarParams, rolloff: float = 0.25) -> PulseShape:
    """Root-raised-cosine spectrum whose outer edge sits at B_h/2."""
    if not 0.0 <= rolloff <= 1.0:
        raise ValueError("rolloff must be in [0, 1]")
    k, band = _grid(params)
    f = np.abs(k / params.pri)
    rs = params.bandwidth / (1.0 + rolloff)
    f1 = (1.0 - rolloff) * rs / 2.0
    f2 = params.bandwidth / 2.0
    prof = np.where(f <= f1, 1.0, 0.0)
    if rolloff > 0:
        taper = (f > f1) & (f < f2)
        prof = np.where(taper, np.sqrt(0.5 * (1.0 + np.cos(np.pi * (f - f1) / (f2 - f1)))), prof)
    prof = np.where(band, prof, 0.0)
    return _finish("rrc", params, k, prof, rolloff=float(rolloff))


def gaussian_pulse(params: RadarParams, width: float = 0.25) -> PulseShape:
    """Gaussian spectrum with std ``width * B_h`` Hz, truncated to the band."""
    if width <= 0:
        raise ValueError("width must be positive")
    k, band = _grid(params)
    f = k / params.pri
    prof = np.where(band, np.exp(-0.5 * (f / (width * params.bandwidth)) ** 2), 0.0)
    return _finish("gaussian", params, k, prof, width=float(width))


def make_pulse(params: RadarParams, kind: str = "flat", **kw) -> PulseShape:
    if kind == "flat":
        return flat_pulse(params, **kw)
    if kind == "rrc":
        return rrc_pulse(params, **kw)
    if kind == "gaussian":
        return gaussian_pulse(params, **kw)
    raise ValueError(f"unknown pulse kind {kind!r}; expected one of {KINDS}")


def spectrum_at(shape: PulseShape, k: int) -> complex:
    """H(2 pi k / tau) for a single Fourier index."""
    return complex(shape.spectrum(int(k)))


@dataclass(frozen=True)
class NyquistSignal:
    """Complex baseband samples of a full CPI, frame after frame."""

    samples: np.ndarray
    rate: float
    frame_len: int
    pulse_count: int
    noise_psd: float = 0.0

    def __post_init__(self):
        if self.samples.size != self.frame_len * self.pulse_count:
            raise ValueError(
                f"sample count {self.samples.size} != frame_len * P = {self.frame_len * self.pulse_count}"
            )

    @property
    def frames(self) -> np.ndarray:
        """Samples reshaped to (P, frame_len)."""
        return self.samples.reshape(self.pulse_count, self.frame_len)


def synthesize(
    params: RadarParams,
    shape: PulseShape,
    targets: Sequence[Target],
    clutter: Optional[ClutterField] = None,
    oversample: int = 1,
) -> NyquistSignal:
    """Sample the received pulse train at ``oversample * B_h``.

    Frame p holds ``sum_l a_l exp(-j nu_l p tau) h(t - tau_l)`` for
    ``t in [0, tau)``: the Doppler phase is constant within a pulse.
    """
    if int(oversample) != oversample or oversample < 1:
        raise ValueError("oversample must be a positive integer")
    oversample = int(oversample)
    n = params.nyquist_count * oversample
    fs = params.bandwidth * oversample
    scat = list(targets) + (list(clutter.scatterers) if clutter is not None else [])
    P = params.pulse_count
    if not scat:
        return NyquistSignal(np.zeros(P * n, dtype=complex), fs, n, P)
    delays, dopplers, amps = target_arrays(scat)
    t = np.arange(n) / fs
    frames = np.zeros((P, n), dtype=complex)
    pulses = np.arange(P) * params.pri
    block = max(1, 500_000 // n)
    for s in range(0, delays.size, block):
        tmpl = shape.time_response(t[None, :] - delays[s:s + block, None])  # L x n
        tmpl *= amps[s:s + block, None]
        frames += np.exp(-1j * np.outer(pulses, dopplers[s:s + block])) @ tmpl
    return NyquistSignal(frames.ravel(), fs, n, P)


def noise_psd_for_snr(snr_db: float, ref_amplitude: complex, params: RadarParams) -> float:
    """N0 giving ``snr_db`` to a target of the given amplitude.

    SNR = (1/T_p) int |a h|^2 dt / (N0 B_h) = |a|^2 / (N0 B_h) with unit-power pulses.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return abs(ref_amplitude) ** 2 / (params.bandwidth * 10.0 ** (snr_db / 10.0))


def noise_level_for_snr(snr_db: float, ref_amplitude: complex, params: RadarParams) -> float:
    """White-noise level sigma^2 (two-sided PSD) for a given SNR.

    The noise PSD is N0/2 over the band, so sigma^2 = N0/2; the SNR definition
    keeps N0 * B_h in its denominator.
    """
    return 0.5 * noise_psd_for_snr(snr_db, ref_amplitude, params)


def complex_noise(rng, shape) -> np.ndarray:
    """Unit-variance circular complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def add_awgn(
    signal: NyquistSignal,
    params: RadarParams,
    snr_db_ref: float,
    ref_target: Target,
    rng_seed,
) -> NyquistSignal:
    """Add white noise band-limited to B_h at the level set by ``ref_target``.

    Noise is drawn as in-band Fourier coefficients of variance sigma^2/tau per
    frame (sigma^2 = N0/2), so at the Nyquist rate it is i.i.d. with variance
    sigma^2 * B_h.
    """
    s2 = noise_level_for_snr(snr_db_ref, ref_target.amplitude, params)
    if s2 == 0.0:
        return signal
    rng = np.random.default_rng(rng_seed)
    n_band = params.nyquist_count
    nf = signal.frame_len
    P = signal.pulse_count
    if signal.rate < params.bandwidth * (1 - 1e-12):
        raise ValueError("add_awgn needs a signal at or above the Nyquist rate; decimate afterwards")
    coef = complex_noise(rng, (P, n_band)) * math.sqrt(s2 / params.pri)
    spec = np.zeros((P, nf), dtype=complex)
    spec[:, band_indices(params) % nf] = coef
    noise = np.fft.ifft(spec, axis=1) * nf
    return NyquistSignal(signal.samples + noise.ravel(), signal.rate, nf, P, signal.noise_psd + s2)


def decimate(signal: NyquistSignal, factor: int) -> NyquistSignal:
    """Keep every ``factor``-th sample of each frame, with no anti-alias filter."""
    if signal.frame_len % factor:
        raise ValueError(f"frame length {signal.frame_len} not divisible by {factor}")
    fr = signal.frames[:, ::factor]
    return NyquistSignal(np.ascontiguousarray(fr).ravel(), signal.rate / factor, fr.shape[1], signal.pulse_count, signal.noise_psd)


# ---------------------------------------------------------------------------
# raw dump: magic, header (rate f64, P u32, N u32, noise_psd f64), complex64 LE
# ---------------------------------------------------------------------------

SIGNAL_MAGIC = b"DFSG"
_SIG_HEADER = struct.Struct("<4sdIId")


def write_signal(path, signal: NyquistSignal) -> None:
    hdr = _SIG_HEADER.pack(SIGNAL_MAGIC, signal.rate, signal.pulse_count, signal.frame_len, signal.noise_psd)
    with open(path, "wb") as f:
        f.write(hdr)
        f.write(signal.samples.astype("<c8").tobytes())


def read_signal_header(path) -> dict:
    with open(path, "rb") as f:
        raw = f.read(_SIG_HEADER.size)
    if len(raw) < _SIG_HEADER.size:
        raise ValueError(f"{path}: truncated signal header")
    magic, rate, P, n, n0 = _SIG_HEADER.unpack(raw)
    if magic != SIGNAL_MAGIC:
        raise ValueError(f"{path}: not a signal dump (magic {magic!r})")
    return {"kind": "signal", "rate": rate, "pulse_count": P, "frame_len": n, "noise_psd": n0}


def read_signal(path) -> NyquistSignal:
    h = read_signal_header(path)
    data = Path(path).read_bytes()[_SIG_HEADER.size:]
    samples = np.frombuffer(data, dtype="<c8").astype(complex)
    return NyquistSignal(samples, h["rate"], h["frame_len"], h["pulse_count"], h["noise_psd"])
