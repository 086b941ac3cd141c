"""Delay-Doppler detection pipelines.

* ``focusing_detect``: iterative Doppler focusing with per-bin sparse delay
  recovery and exact-model subtraction.
* ``classic_detect``: matched filter plus Doppler DFT on time samples.
* ``twostage_detect``: joint-sparse delay support first, Doppler second.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import resample

from . import _kernels
from .focusing import Window, focus_at, focus_grid, grid_indices, parse_window
from .scene import RadarParams, Target
from .sparse_recovery import Dictionary, build_dictionary, refine_parabolic
from .waveform import NyquistSignal, PulseShape
from .xampler import XampleSet, scatterer_coeffs


@dataclass(frozen=True)
class Detection:
    tau_hat: float
    nu_hat: float
    alpha_hat: complex
    iteration: int
    peak_value: float
    degenerate: bool = False

    def as_target(self) -> Target:
        return Target(self.tau_hat, self.nu_hat, self.alpha_hat)


@dataclass(frozen=True)
class DelayDopplerMap:
    """Magnitude map ``Z[m, n]`` with its axes."""

    Z: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray
    complex_map: Optional[np.ndarray] = field(default=None, repr=False)


def _wrap_delay(t: float, pri: float) -> float:
    t = math.fmod(t, pri)
    return t + pri if t < 0 else t


def _wrap_doppler(nu: float, pri: float) -> float:
    lim = math.pi / pri
    nu = math.fmod(nu + lim, 2 * lim)
    if nu < 0:
        nu += 2 * lim
    return nu - lim


def _make_detection(tau, nu, alpha, it, peak, pri, degenerate=False) -> Detection:
    return Detection(_wrap_delay(tau, pri), _wrap_doppler(nu, pri), complex(alpha), int(it), float(peak), degenerate)


# ---------------------------------------------------------------------------
# Doppler focusing
# ---------------------------------------------------------------------------

def _excluded_rows(m: np.ndarray, exclude_cells) -> np.ndarray:
    if exclude_cells is None or exclude_cells < 0:
        return np.zeros(m.size, dtype=bool)
    return np.abs(m) <= exclude_cells


def _fit_on_support(D: Dictionary, psi, support, tau_hat, slot, gain) -> complex:
    """LS amplitude of the refined atom jointly with the other atoms of its bin."""
    cols = [D.atoms(tau_hat)[:, 0]]
    for s in support:
        if s >= 0 and s != slot:
            cols.append(D.matrix[:, s])
    B = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(B, psi, rcond=None)
    return coef[0] / gain


def focusing_detect(
    x: XampleSet,
    shape: PulseShape,
    L: int,
    M: Optional[int] = None,
    window=None,
    refine: bool = True,
    doppler_search: str = "grid",
    exclude_cells: Optional[int] = None,
    order: Optional[int] = None,
    dictionary: Optional[Dictionary] = None,
) -> List[Detection]:
    """Greedy Doppler-focusing detector.

    Each of the ``L`` iterations focuses the residual on an M-point Doppler
    grid, solves an ``order``-sparse delay problem in every bin, reports the
    strongest (bin, delay) cell and subtracts that target from the residual.

    ``doppler_search="golden"`` refines the Doppler estimate off the grid by
    a bounded scalar search within one grid step. ``exclude_cells`` masks
    Doppler rows with ``|m| <= exclude_cells`` (e.g. a clutter ridge at DC).
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    params = x.params
    P = params.pulse_count
    M = 2 * P if M is None else int(M)
    if M < 1:
        raise ValueError("M must be >= 1")
    if doppler_search not in ("grid", "golden"):
        raise ValueError(f"unknown doppler_search {doppler_search!r}")
    win: Window = parse_window(window, P)
    gain = float(np.sum(win.weights))
    D = dictionary if dictionary is not None else build_dictionary(params, shape, x.kappa)
    order = L if order is None else int(order)
    col_norm = np.linalg.norm(D.matrix, axis=0)
    m_idx = grid_indices(M)
    nu_step = 2.0 * math.pi / (params.pri * M)
    blocked = _excluded_rows(m_idx, exclude_cells)
    reported = np.zeros((M, D.n_tau), dtype=bool)
    resid = x.with_coeffs(x.coeffs.copy())
    out: List[Detection] = []
    for it in range(L):
        grid = focus_grid(resid, M, win)
        sup, coefs, n_sel, _, _ = _kernels.omp_batch(D.matrix, grid.psi_grid, order)
        score = np.zeros((M, D.n_tau))
        rows = np.repeat(np.arange(M)[:, None], order, axis=1)
        ok = sup >= 0
        score[rows[ok], sup[ok]] = np.abs(coefs[ok])
        score[blocked] = -1.0
        score[reported] = -1.0
        flat = int(np.argmax(score))  # row-major: lowest m, then lowest n
        mi, n = divmod(flat, D.n_tau)
        peak = score[mi, n]
        if peak <= 0.0:
            out.append(_make_detection(n * D.delta_tau, grid.nu[mi], 0.0, it, 0.0, params.pri, True))
            reported[mi, n] = True
            continue
        slot = int(np.nonzero(sup[mi] == n)[0][0])
        alpha = coefs[mi, slot] / gain
        tau_hat = n * D.delta_tau
        nu_hat = float(grid.nu[mi])
        if refine or doppler_search == "golden":
            psi = grid.psi_grid[mi]
            a_n = D.matrix[:, n] / col_norm[n]
            if refine:
                nb = [(n - 1) % D.n_tau, n, (n + 1) % D.n_tau]
                c = np.abs(D.matrix[:, nb].conj().T @ psi) / col_norm[nb]
                off, good = refine_parabolic(c)
                if good:
                    tau_hat += off * D.delta_tau
            if doppler_search == "golden":
                a_t = D.atoms(tau_hat)[:, 0]

                def neg(nu):
                    return -abs(np.vdot(a_t, focus_at(resid, nu, win).psi))

                r = minimize_scalar(neg, bounds=(nu_hat - nu_step, nu_hat + nu_step), method="bounded",
                                    options={"xatol": 1e-6 * nu_step})
                if -r.fun >= abs(np.vdot(a_t, psi)):
                    nu_hat = float(r.x)
            elif refine and M > 2:
                rows3 = [(mi - 1) % M, mi, (mi + 1) % M]
                c = np.abs(grid.psi_grid[rows3] @ a_n.conj())
                off, good = refine_parabolic(c)
                if good:
                    nu_hat += off * nu_step
            if tau_hat != n * D.delta_tau or nu_hat != grid.nu[mi]:
                psi_r = focus_at(resid, nu_hat, win).psi
                alpha = _fit_on_support(D, psi_r, sup[mi], tau_hat, n, gain)
        det = _make_detection(tau_hat, nu_hat, alpha, it, peak, params.pri)
        out.append(det)
        reported[mi, n] = True
        resid = resid.with_coeffs(resid.coeffs - scatterer_coeffs(params, shape, [det.as_target()], x.kappa))
    return out


# ---------------------------------------------------------------------------
# classic matched filter + Doppler DFT
# ---------------------------------------------------------------------------

def _pulse_samples(shape: PulseShape, rate: float, n: int) -> np.ndarray:
    return shape.time_response(np.arange(n) / rate)


def _doppler_dft(seq: np.ndarray, M: int) -> np.ndarray:
    """``sum_p seq[p] exp(+j 2 pi m p / M)`` for m in [-M/2, M/2) along axis 0."""
    P = seq.shape[0]
    buf = np.zeros((M,) + seq.shape[1:], dtype=complex)
    if P <= M:
        buf[:P] = seq
    else:
        np.add.at(buf, np.arange(P) % M, seq)
    spec = np.fft.ifft(buf, axis=0) * M
    return spec[grid_indices(M) % M]


def classic_map(
    signal: NyquistSignal,
    shape: PulseShape,
    params: RadarParams,
    M: Optional[int] = None,
    window=None,
    cells_per_bin: int = 2,
) -> DelayDopplerMap:
    """Matched-filter each frame, interpolate onto the half-bin delay grid and
    take an M-point Doppler DFT across pulses."""
    P = signal.pulse_count
    if P != params.pulse_count:
        raise ValueError(f"signal has {P} pulses, configuration has {params.pulse_count}")
    M = 2 * P if M is None else int(M)
    n = signal.frame_len
    h = _pulse_samples(shape, signal.rate, n)
    # circular correlation y[n] = sum_m x[m] conj(h[m - n])
    y = np.fft.ifft(np.fft.fft(signal.frames, axis=1) * np.conj(np.fft.fft(h))[None, :], axis=1)
    n_out = cells_per_bin * params.nyquist_count
    if n_out != n:
        y = resample(y, n_out, axis=1)  # periodic band-limited interpolation
    win = parse_window(window, P)
    z = _doppler_dft(y * win.weights[:, None], M)
    e_h = float(np.sum(np.abs(h) ** 2))
    delays = np.arange(n_out) * params.pri / n_out
    dopplers = 2.0 * math.pi * grid_indices(M) / (params.pri * M)
    return DelayDopplerMap(np.abs(z), delays, dopplers, z / (float(np.sum(win.weights)) * e_h))


def classic_detect(
    signal: NyquistSignal,
    shape: PulseShape,
    params: RadarParams,
    L: int,
    M: Optional[int] = None,
    guard: int = 3,
    window=None,
    refine: bool = True,
) -> List[Detection]:
    """Pick the ``L`` strongest map cells, blanking ``+-guard`` Nyquist bins
    (circularly, both axes) around each accepted peak."""
    dd = classic_map(signal, shape, params, M, window)
    Z = dd.Z.copy()
    Mz, Nz = Z.shape
    d_step = params.pri / Nz
    f_step = 2.0 * math.pi / (params.pri * Mz)
    g_d = int(round(guard * Nz / params.nyquist_count))
    g_f = int(round(guard * Mz / params.pulse_count))
    out = []
    for it in range(L):
        flat = int(np.argmax(Z))
        mi, n = divmod(flat, Nz)
        peak = Z[mi, n]
        tau_hat = n * d_step
        nu_hat = float(dd.dopplers[mi])
        if refine and peak > 0:
            off, ok = refine_parabolic(dd.Z[mi, [(n - 1) % Nz, n, (n + 1) % Nz]])
            if ok:
                tau_hat += off * d_step
            off, ok = refine_parabolic(dd.Z[[(mi - 1) % Mz, mi, (mi + 1) % Mz], n])
            if ok:
                nu_hat += off * f_step
        out.append(_make_detection(tau_hat, nu_hat, dd.complex_map[mi, n], it, peak, params.pri, peak <= 0))
        rr = np.arange(mi - g_f, mi + g_f + 1) % Mz
        cc = np.arange(n - g_d, n + g_d + 1) % Nz
        Z[np.ix_(rr, cc)] = -1.0
    return out


# ---------------------------------------------------------------------------
# two-stage: joint delay support, then per-delay Doppler
# ---------------------------------------------------------------------------

def twostage_detect(
    x: XampleSet,
    shape: PulseShape,
    L: int,
    M: Optional[int] = None,
    tol: float = 1e-8,
    dictionary: Optional[Dictionary] = None,
) -> List[Detection]:
    """Simultaneous OMP over all pulses picks ``L`` delays from the row norms of
    ``A^H R``; each de-mixed delay row is then Fourier analysed across pulses.

    Support growth stops early once the residual falls below ``tol`` of the
    data energy.
    """
    params = x.params
    P = params.pulse_count
    M = 2 * P if M is None else int(M)
    D = dictionary if dictionary is not None else build_dictionary(params, shape, x.kappa)
    A = D.matrix
    col_norm = np.linalg.norm(A, axis=0)
    Ct = x.coeffs.T  # K x P
    e0 = float(np.sum(np.abs(Ct) ** 2))
    R = Ct.copy()
    support: List[int] = []
    X = np.zeros((0, P), dtype=complex)
    while len(support) < L and e0 > 0:
        score = np.linalg.norm(A.conj().T @ R, axis=1) / col_norm
        score[support] = -1.0
        support.append(int(np.argmax(score)))
        As = A[:, support]
        X, *_ = np.linalg.lstsq(As, Ct, rcond=None)
        R = Ct - As @ X
        if float(np.sum(np.abs(R) ** 2)) <= tol * tol * e0:
            break
    out = []
    p = np.arange(P)
    for i, n in enumerate(support):
        row = X[i]
        spec = np.abs(_doppler_dft(row, M))
        mi = int(np.argmax(spec))
        nu_hat = 2.0 * math.pi * grid_indices(M)[mi] / (params.pri * M)
        off, ok = refine_parabolic(spec[[(mi - 1) % M, mi, (mi + 1) % M]])
        if ok:
            nu_hat += off * 2.0 * math.pi / (params.pri * M)
        alpha = np.vdot(np.exp(-1j * nu_hat * p * params.pri), row) / P
        out.append(_make_detection(n * D.delta_tau, nu_hat, alpha, i, spec[mi], params.pri))
    return out


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

DETECTION_HEADER = ["tau_s", "nu_rad_s", "re_alpha", "im_alpha", "iteration", "peak"]


def write_detections(path, detections) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(DETECTION_HEADER)
        for d in detections:
            w.writerow([repr(d.tau_hat), repr(d.nu_hat), repr(d.alpha_hat.real), repr(d.alpha_hat.imag),
                        d.iteration, repr(d.peak_value)])


def read_detections(path) -> List[Detection]:
    with open(path, newline="") as f:
        r = csv.DictReader(f)
        if r.fieldnames != DETECTION_HEADER:
            raise ValueError(f"{path}: unexpected detection header {r.fieldnames}")
        return [
            Detection(float(row["tau_s"]), float(row["nu_rad_s"]),
                      complex(float(row["re_alpha"]), float(row["im_alpha"])),
                      int(row["iteration"]), float(row["peak"]))
            for row in r
        ]
