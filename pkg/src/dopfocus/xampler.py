"""Per-pulse Fourier-coefficient acquisition ("Xamples")."""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .scene import ClutterField, RadarParams, Target, target_arrays
from .waveform import NyquistSignal, PulseShape, band_indices, complex_noise


@dataclass(frozen=True)
class CoefficientSet:
    """Ordered, distinct in-band Fourier indices kappa."""

    kappa: np.ndarray
    mode: str
    n_band: int

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=np.int64)
        object.__setattr__(self, "kappa", k)
        if np.unique(k).size != k.size:
            raise ValueError("kappa indices must be distinct")
        lo, hi = -(self.n_band // 2), self.n_band - self.n_band // 2
        if k.size and (k.min() < lo or k.max() >= hi):
            raise ValueError(f"kappa must lie in the band [{lo}, {hi})")
        if self.mode == "consecutive" and k.size > 1 and not np.all(np.diff(k) == 1):
            raise ValueError("consecutive kappa must be a unit-step run")

    def __len__(self):
        return int(self.kappa.size)


def select_kappa(
    params: RadarParams,
    count: int,
    mode: str = "consecutive",
    rng_seed=None,
    offset: int = 0,
) -> CoefficientSet:
    """Choose ``count`` Fourier indices from the band.

    ``consecutive`` gives a run centred on DC, shifted by ``offset``;
    ``random`` draws uniformly without replacement and sorts.
    """
    band = band_indices(params)
    n = band.size
    if count < 1 or count > n:
        raise ValueError(f"count {count} exceeds band capacity of {n} in-band indices")
    if mode == "consecutive":
        start = -(count // 2) + offset
        k = np.arange(start, start + count)
        if k[0] < band[0] or k[-1] > band[-1]:
            raise ValueError(f"offset {offset} pushes the run outside the band")
    elif mode == "random":
        if count == n:
            k = band.copy()
        else:
            rng = np.random.default_rng(rng_seed)
            k = np.sort(rng.choice(band, size=count, replace=False))
    else:
        raise ValueError(f"unknown kappa mode {mode!r}")
    return CoefficientSet(k, mode, n)


@dataclass(frozen=True)
class XampleSet:
    """P x |kappa| coefficient matrix with its acquisition metadata."""

    coeffs: np.ndarray
    kappa: CoefficientSet
    params: RadarParams
    noise_var: float = 0.0

    def __post_init__(self):
        if self.coeffs.shape != (self.params.pulse_count, len(self.kappa)):
            raise ValueError(
                f"coefficient matrix {self.coeffs.shape} does not match "
                f"P x |kappa| = ({self.params.pulse_count}, {len(self.kappa)})"
            )

    def with_coeffs(self, coeffs, noise_var=None) -> "XampleSet":
        return XampleSet(coeffs, self.kappa, self.params, self.noise_var if noise_var is None else noise_var)


def scatterer_coeffs(params, shape, scatterers, kappa: CoefficientSet) -> np.ndarray:
    """Noise-free c_p[k] of a scatterer list (no validation)."""
    h = shape.spectrum(kappa.kappa)
    if not len(scatterers):
        return np.zeros((params.pulse_count, len(kappa)), dtype=complex)
    d, nu, a = target_arrays(scatterers)
    s = _kernels.scatter_sum(d, nu, a, kappa.kappa, params.pulse_count, params.pri)
    return s * (h / params.pri)[None, :]


def xample_analytic(
    params: RadarParams,
    shape: PulseShape,
    targets: Sequence[Target],
    kappa: CoefficientSet,
    clutter: Optional[ClutterField] = None,
    noise_sigma2: float = 0.0,
    rng_seed=None,
) -> XampleSet:
    """Closed-form Fourier coefficients, optionally with white noise.

    ``noise_sigma2`` is the continuous-time noise level sigma^2 (= N0/2); each
    coefficient then receives circular Gaussian noise of variance sigma^2/tau.
    """
    c = scatterer_coeffs(params, shape, list(targets), kappa)
    if clutter is not None:
        c = c + scatterer_coeffs(params, shape, clutter.scatterers, kappa)
    var = 0.0
    if noise_sigma2 > 0:
        var = noise_sigma2 / params.pri
        rng = np.random.default_rng(rng_seed)
        c = c + complex_noise(rng, c.shape) * math.sqrt(var)
    return XampleSet(c, kappa, params, var)


def xample_numeric(signal: NyquistSignal, params: RadarParams, kappa: CoefficientSet) -> XampleSet:
    """Fourier coefficients by quadrature of each sampled frame.

    Uses the rectangle rule on the periodic frame, which coincides with the
    trapezoid rule and is exact for band-limited frames sampled above
    Nyquist.
    """
    factor = signal.rate / params.bandwidth
    if factor < 1 - 1e-12:
        raise ValueError(f"oversampling factor {factor:g} < 1; quadrature needs at least the Nyquist rate")
    nf = signal.frame_len
    if abs(nf / signal.rate - params.pri) > 1e-9 * params.pri:
        raise ValueError("signal frame length does not span one PRI")
    n = np.arange(nf)
    kern = np.exp(-2j * np.pi * np.outer(n, kappa.kappa) / nf)
    c = signal.frames @ kern / nf
    return XampleSet(c, kappa, params, signal.noise_psd / params.pri)


# ---------------------------------------------------------------------------
# dumps: magic, header (P u32, K u32, tau f64, noise_var f64), kappa int32,
# coefficients complex64 row-major, all little-endian
# ---------------------------------------------------------------------------

XAMPLE_MAGIC = b"DFXS"
_XS_HEADER = struct.Struct("<4sIIdd")


def write_xamples(path, xs: XampleSet) -> None:
    P, K = xs.coeffs.shape
    with open(path, "wb") as f:
        f.write(_XS_HEADER.pack(XAMPLE_MAGIC, P, K, xs.params.pri, xs.noise_var))
        f.write(xs.kappa.kappa.astype("<i4").tobytes())
        f.write(xs.coeffs.astype("<c8").tobytes())


def read_xamples_header(path) -> dict:
    with open(path, "rb") as f:
        raw = f.read(_XS_HEADER.size)
    if len(raw) < _XS_HEADER.size:
        raise ValueError(f"{path}: truncated Xample header")
    magic, P, K, tau, var = _XS_HEADER.unpack(raw)
    if magic != XAMPLE_MAGIC:
        raise ValueError(f"{path}: not an Xample dump (magic {magic!r})")
    return {"kind": "xamples", "pulse_count": P, "n_kappa": K, "pri": tau, "noise_var": var}


def read_xamples(path, params: RadarParams, mode: str = "consecutive") -> XampleSet:
    """Load a dump, checking its dimensions against ``params``."""
    h = read_xamples_header(path)
    if h["pulse_count"] != params.pulse_count:
        raise ValueError(f"{path}: dump has P={h['pulse_count']} but the configuration has P={params.pulse_count}")
    if abs(h["pri"] - params.pri) > 1e-12 * params.pri:
        raise ValueError(f"{path}: dump PRI {h['pri']} differs from configured {params.pri}")
    data = Path(path).read_bytes()[_XS_HEADER.size:]
    K = h["n_kappa"]
    kappa = np.frombuffer(data[: 4 * K], dtype="<i4").astype(np.int64)
    coeffs = np.frombuffer(data[4 * K:], dtype="<c8").astype(complex)
    if coeffs.size != h["pulse_count"] * K:
        raise ValueError(f"{path}: expected {h['pulse_count'] * K} coefficients, found {coeffs.size}")
    if mode == "consecutive" and K > 1 and not np.all(np.diff(kappa) == 1):
        mode = "random"
    ks = CoefficientSet(kappa, mode, params.nyquist_count)
    return XampleSet(coeffs.reshape(h["pulse_count"], K), ks, params, h["noise_var"])


def write_xamples_csv(path, xs: XampleSet) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["p", "k", "re", "im"])
        for p in range(xs.coeffs.shape[0]):
            for j, k in enumerate(xs.kappa.kappa):
                v = xs.coeffs[p, j]
                w.writerow([p, int(k), repr(float(v.real)), repr(float(v.imag))])
