"""Doppler focusing of per-pulse Fourier coefficients."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import windows as _win

from .xampler import XampleSet

WINDOW_KINDS = ("rectangular", "hann", "blackman", "taylor")


@dataclass(frozen=True)
class Window:
    """Pulse-dimension weights, scaled so they sum to P."""

    kind: str
    weights: np.ndarray
    nbar: int = 0
    sidelobe_db: float = 0.0

    @property
    def descriptor(self) -> str:
        if self.kind == "taylor":
            return f"taylor(nbar={self.nbar},sll={self.sidelobe_db:g})"
        return self.kind

    def __len__(self):
        return int(self.weights.size)


def make_window(kind: str, P: int, nbar: int = 8, sidelobe_db: float = 50.0) -> Window:
    if kind == "rectangular":
        w = np.ones(P)
    elif kind in ("hann", "blackman"):
        # drop the zero end points so every weight stays positive
        w = getattr(_win, kind)(P + 2, sym=True)[1:-1]
    elif kind == "taylor":
        w = _win.taylor(P, nbar=nbar, sll=abs(sidelobe_db), norm=False, sym=True)
    else:
        raise ValueError(f"unknown window {kind!r}; expected one of {WINDOW_KINDS}")
    w = w * (P / np.sum(w))
    if kind == "taylor":
        return Window(kind, w, int(nbar), float(abs(sidelobe_db)))
    return Window(kind, w)


def parse_window(spec, P: int) -> Window:
    """Build a window from ``"hann"``, ``"taylor:50"`` or ``{"kind": ..., ...}``."""
    if isinstance(spec, Window):
        return spec
    if spec is None:
        return make_window("rectangular", P)
    if isinstance(spec, dict):
        d = dict(spec)
        return make_window(d.pop("kind"), P, **d)
    kind, _, arg = str(spec).partition(":")
    if kind == "taylor" and arg:
        return make_window(kind, P, sidelobe_db=float(arg))
    return make_window(kind, P)


@dataclass(frozen=True)
class FocusedVector:
    psi: np.ndarray
    nu: float
    window_id: str


@dataclass(frozen=True)
class FocusedGrid:
    """Row i holds the focused vector at Doppler ``nu[i] = 2 pi m_i / (tau M)``."""

    psi_grid: np.ndarray
    M: int
    m: np.ndarray
    nu: np.ndarray
    window_id: str


def _weights(x: XampleSet, window):
    P = x.params.pulse_count
    if window is None:
        return np.ones(P), "rectangular"
    if len(window) != P:
        raise ValueError(f"window length {len(window)} != P = {P}")
    return window.weights, window.descriptor


def focus_at(x: XampleSet, nu: float, window: Window = None) -> FocusedVector:
    """Weighted coherent sum over pulses at one Doppler frequency."""
    w, wid = _weights(x, window)
    P = x.params.pulse_count
    ph = w * np.exp(1j * nu * np.arange(P) * x.params.pri)
    return FocusedVector(ph @ x.coeffs, float(nu), wid)


def grid_indices(M: int) -> np.ndarray:
    """Integer Doppler indices m in [-M/2, M/2)."""
    return np.arange(M) - M // 2


def doppler_grid(pri: float, M: int) -> np.ndarray:
    return 2.0 * math.pi * grid_indices(M) / (pri * M)


def focus_grid(x: XampleSet, M: int, window: Window = None) -> FocusedGrid:
    """Focus on the uniform grid ``2 pi m / (tau M)`` with one length-M FFT.

    For M < P the pulse sequence is folded modulo M before the transform.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    w, wid = _weights(x, window)
    P = x.params.pulse_count
    weighted = x.coeffs * w[:, None]
    if P <= M:
        seq = np.zeros((M, weighted.shape[1]), dtype=complex)
        seq[:P] = weighted
    else:
        seq = np.zeros((M, weighted.shape[1]), dtype=complex)
        np.add.at(seq, np.arange(P) % M, weighted)
    # sum_p s_p exp(+j 2 pi m p / M) = M * ifft
    spec = np.fft.ifft(seq, axis=0) * M
    m = grid_indices(M)
    psi = spec[m % M]
    return FocusedGrid(psi, int(M), m, 2.0 * math.pi * m / (x.params.pri * M), wid)


def dirichlet_gain(nu: float, nu_l: float, P: int, pri: float, window: Window = None) -> complex:
    """Focusing gain ``g(nu | nu_l) = sum_p w[p] exp(j (nu - nu_l) p tau)``."""
    theta = math.remainder((nu - nu_l) * pri, 2.0 * math.pi)
    if window is None or window.kind == "rectangular":
        if theta == 0.0:
            return complex(P)
        half = theta / 2.0
        if abs(half) < 1e-9:  # sin ratio -> P, error O(half^2)
            return complex(P * np.exp(1j * half * (P - 1)))
        return complex(np.exp(1j * half * (P - 1)) * math.sin(P * half) / math.sin(half))
    return complex(np.sum(window.weights * np.exp(1j * theta * np.arange(P))))
