"""Sparse delay recovery on a partial-Fourier dictionary."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .scene import RadarParams
from .waveform import PulseShape
from .xampler import CoefficientSet


@dataclass(frozen=True)
class Dictionary:
    """``A = (1/tau) H V`` on a uniform delay grid of N_tau points."""

    matrix: np.ndarray
    delta_tau: float
    n_tau: int
    kappa: CoefficientSet
    h_diag: np.ndarray
    pri: float

    @property
    def delays(self) -> np.ndarray:
        return np.arange(self.n_tau) * self.delta_tau

    def atoms(self, delays) -> np.ndarray:
        """Columns for arbitrary (off-grid) delays, shape (|kappa|, len(delays))."""
        delays = np.atleast_1d(np.asarray(delays, dtype=float))
        ph = np.exp(-2j * np.pi * np.outer(self.kappa.kappa, delays) / self.pri)
        return ph * (self.h_diag / self.pri)[:, None]


def build_dictionary(
    params: RadarParams,
    shape: PulseShape,
    kappa: CoefficientSet,
    delta_tau: Optional[float] = None,
) -> Dictionary:
    """Dictionary with entries ``(1/tau) H(2 pi k_m / tau) exp(-j 2 pi k_m q / N_tau)``.

    ``delta_tau`` defaults to half a Nyquist delay bin.
    """
    if delta_tau is None:
        delta_tau = 0.5 / params.bandwidth
    n_tau_f = params.pri / delta_tau
    n_tau = int(round(n_tau_f))
    if n_tau < 1 or abs(n_tau_f - n_tau) > 1e-9 * n_tau_f:
        raise ValueError(f"delta_tau={delta_tau} does not divide tau={params.pri}")
    h = shape.spectrum(kappa.kappa)
    dead = np.nonzero(np.abs(h) <= 1e-12 * np.max(np.abs(shape.table)))[0]
    if dead.size:
        raise ValueError(f"H vanishes at k={int(kappa.kappa[dead[0]])}; dictionary cannot be normalized")
    q = np.arange(n_tau)
    V = np.exp(-2j * np.pi * np.outer(kappa.kappa, q) / n_tau)
    A = V * (h / params.pri)[:, None]
    return Dictionary(A, params.pri / n_tau, n_tau, kappa, h, params.pri)


def correlation_pattern(d: Dictionary, i: int) -> np.ndarray:
    """Normalized |<a_i, a_j>| for every column j."""
    A = d.matrix
    norms = np.linalg.norm(A, axis=0)
    return np.abs(A[:, i].conj() @ A) / (norms[i] * norms)


def coherence(d: Dictionary) -> float:
    """Largest normalized inner product between distinct columns.

    Columns of a partial-DFT dictionary on a uniform grid form a circulant
    Gram matrix, so one correlation pattern suffices.
    """
    if d.n_tau < 2:
        raise ValueError("coherence needs at least two columns")
    mu = correlation_pattern(d, 0)
    return float(np.max(mu[1:]))


def coherence_bruteforce(d: Dictionary) -> float:
    """Full Gram-matrix coherence; O(N_tau^2) memory."""
    A = d.matrix / np.linalg.norm(d.matrix, axis=0)
    G = np.abs(A.conj().T @ A)
    np.fill_diagonal(G, 0.0)
    return float(G.max())


@dataclass
class SparseSolution:
    support: np.ndarray
    amplitudes: np.ndarray
    residual_energy: float
    energy_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rank_deficient: bool = False

    def dense(self, n: int) -> np.ndarray:
        x = np.zeros(n, dtype=complex)
        x[self.support] = self.amplitudes
        return x


def omp_solve(d: Dictionary, y, order: int, tol: float = 0.0) -> SparseSolution:
    """Orthogonal matching pursuit.

    Picks the column with the largest normalized correlation to the residual,
    refits all chosen amplitudes by least squares and repeats until ``order``
    atoms are chosen or ``||r|| <= tol * ||y||``.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    y = np.asarray(y, dtype=complex)
    sup, coefs, n_sel, energy, _ = _kernels.omp_batch(d.matrix, y[None, :], order, tol)
    s = int(n_sel[0])
    hist = energy[0, : s + 1]
    deficient = s < order and energy[0, s] > max(tol * tol, _kernels.EXACT_FLOOR) * energy[0, 0]
    return SparseSolution(sup[0, :s].copy(), coefs[0, :s].copy(), float(energy[0, s]), hist, bool(deficient))


def iht_solve(d: Dictionary, y, order: int, n_iter: int = 200, step: Optional[float] = None) -> SparseSolution:
    """Iterative hard thresholding with a final least-squares polish."""
    if order < 1:
        raise ValueError("order must be >= 1")
    A = d.matrix
    y = np.asarray(y, dtype=complex)
    if step is None:
        step = 1.0 / np.linalg.norm(A, 2) ** 2
    x = np.zeros(A.shape[1], dtype=complex)
    for _ in range(n_iter):
        g = x + step * (A.conj().T @ (y - A @ x))
        keep = np.argsort(-np.abs(g), kind="stable")[:order]
        x = np.zeros_like(x)
        x[keep] = g[keep]
    sup = np.sort(np.nonzero(x)[0])
    if sup.size:
        amp, *_ = np.linalg.lstsq(A[:, sup], y, rcond=None)
    else:
        amp = np.zeros(0, dtype=complex)
    r = y - A[:, sup] @ amp
    return SparseSolution(sup, amp, float(np.vdot(r, r).real))


@dataclass
class AnnihilatingResult:
    delays: np.ndarray
    amplitudes: np.ndarray
    recoverable: bool
    ill_conditioned: bool = False
    order: int = 0


def annihilating_solve(
    samples,
    n_exp: int,
    k0: int = 0,
    pri: float = 1.0,
    rank_tol: float = 1e-8,
) -> AnnihilatingResult:
    """Prony / annihilating-filter recovery of a sum of exponentials.

    ``samples[i] = sum_l b_l exp(-j 2 pi (k0 + i) tau_l / pri)`` with the pulse
    spectrum already divided out. Needs at least ``2 * n_exp`` samples; the
    actual order is the numerical rank of the data matrix, capped at ``n_exp``.
    """
    y = np.asarray(samples, dtype=complex)
    K = y.size
    if K < 2 * n_exp or n_exp < 1:
        return AnnihilatingResult(np.zeros(0), np.zeros(0, complex), False)
    scale = np.max(np.abs(y)) if K else 0.0
    if scale == 0.0:
        return AnnihilatingResult(np.zeros(0), np.zeros(0, complex), True, False, 0)
    # Hankel rows [y[i], ..., y[i + n_exp]] for i = 0..K-n_exp-1
    rows = K - n_exp
    T = np.array([y[i:i + n_exp + 1] for i in range(rows)])
    sv = np.linalg.svd(T, compute_uv=False)
    order = int(np.sum(sv > rank_tol * sv[0]))
    order = max(1, min(order, n_exp))
    rows = K - order
    T = np.array([y[i:i + order + 1] for i in range(rows)])
    _, _, vh = np.linalg.svd(T)
    h = vh[-1].conj()  # sum_j h_j y[i + j] = 0
    roots = np.roots(h[::-1])
    ill = bool(np.any(np.abs(np.abs(roots) - 1.0) > 1e-3))
    u = roots / np.abs(roots)
    delays = np.mod(-np.angle(u) * pri / (2.0 * np.pi), pri)
    order_idx = np.argsort(delays)
    delays = delays[order_idx]
    u = np.exp(-2j * np.pi * delays / pri)
    V = u[None, :] ** (k0 + np.arange(K))[:, None]
    amps, *_ = np.linalg.lstsq(V, y, rcond=None)
    return AnnihilatingResult(delays, amps, True, ill, order)


def refine_parabolic(samples) -> tuple:
    """Vertex offset of the parabola through three equally spaced samples.

    Returns ``(offset, ok)``; ``ok`` is False, with zero offset, when the
    middle sample is not a local maximum.
    """
    a, b, c = (float(v) for v in samples)
    if not (b >= a and b >= c):
        return 0.0, False
    den = a - 2.0 * b + c
    if den == 0.0:
        return 0.0, True
    off = 0.5 * (a - c) / den
    lim = 1.0 - 1e-12
    return float(min(max(off, -lim), lim)), True
