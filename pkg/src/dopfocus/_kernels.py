"""Hot inner loops, compiled with numba when available.

Set ``DOPFOCUS_NUMBA=0`` in the environment before import to force the
pure-numpy implementations. Both paths share signatures and are tested
against each other.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

# residual energy below this fraction of ||y||^2 is round-off: the fit is exact
EXACT_FLOOR = 1e-26

USE_NUMBA = numba is not None and os.environ.get("DOPFOCUS_NUMBA", "1").lower() not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# scatterer sum: S[p, k] = sum_l a_l exp(-1j*nu_l*p*tau) exp(-2j*pi*k*tau_l/tau)
# ---------------------------------------------------------------------------

def _scatter_sum_numpy(delays, dopplers, amps, kappa, n_pulses, pri):
    if delays.size == 0:
        return np.zeros((n_pulses, kappa.size), dtype=np.complex128)
    p = np.arange(n_pulses)
    doppler_phase = np.exp(-1j * np.outer(p * pri, dopplers))  # P x L
    delay_phase = np.exp(-2j * np.pi * np.outer(delays / pri, kappa))  # L x K
    return doppler_phase @ (amps[:, None] * delay_phase)


def _scatter_sum_loops(delays, dopplers, amps, kappa, n_pulses, pri):
    n_k = kappa.shape[0]
    out = np.zeros((n_pulses, n_k), dtype=np.complex128)
    row = np.empty(n_k, dtype=np.complex128)
    for l in range(delays.shape[0]):
        step = -2.0 * np.pi * delays[l] / pri
        for j in range(n_k):
            row[j] = amps[l] * np.exp(1j * step * kappa[j])
        dstep = np.exp(-1j * dopplers[l] * pri)
        ph = 1.0 + 0.0j
        for p in range(n_pulses):
            for j in range(n_k):
                out[p, j] += ph * row[j]
            ph *= dstep
    return out


# ---------------------------------------------------------------------------
# batched OMP with incremental Gram-Schmidt
# ---------------------------------------------------------------------------

def _omp_batch_numpy(A, Y, order, tol):
    n_rows, n_atoms = A.shape
    batch = Y.shape[0]
    col_norm = np.sqrt(np.sum(np.abs(A) ** 2, axis=0))
    An = A / col_norm
    support = np.full((batch, order), -1, dtype=np.int64)
    Q = np.zeros((batch, n_rows, order), dtype=np.complex128)
    R = np.zeros((batch, order, order), dtype=np.complex128)
    proj = np.zeros((batch, order), dtype=np.complex128)
    resid = Y.astype(np.complex128).copy()
    energy = np.zeros((batch, order + 1))
    energy[:, 0] = np.sum(np.abs(resid) ** 2, axis=1)
    n_sel = np.zeros(batch, dtype=np.int64)
    active = energy[:, 0] > 0.0
    rows = np.arange(batch)
    for it in range(order):
        if not active.any():
            energy[:, it + 1] = energy[:, it]
            continue
        corr = np.abs(resid @ An.conj())  # batch x atoms
        if it:
            # exclude chosen atoms so near-zero residual cannot reselect them
            prev = support[:, :it]
            corr[rows[:, None], prev] = -1.0
        best = np.argmax(corr, axis=1)
        atom = A[:, best].T  # batch x rows
        v = atom.copy()
        for _ in range(2):
            coef = np.einsum("bri,br->bi", Q[:, :, :it].conj(), v)
            v = v - np.einsum("bri,bi->br", Q[:, :, :it], coef)
        r_col = np.einsum("bri,br->bi", Q[:, :, :it].conj(), atom)
        vnorm = np.sqrt(np.sum(np.abs(v) ** 2, axis=1))
        anorm = col_norm[best]
        ok = active & (vnorm > 1e-10 * anorm)
        # rank-deficient rows stop here
        active = ok
        safe = np.where(ok, vnorm, 1.0)
        q = v / safe[:, None]
        Q[ok, :, it] = q[ok]
        R[ok, :it, it] = r_col[ok]
        R[ok, it, it] = vnorm[ok]
        support[ok, it] = best[ok]
        n_sel[ok] += 1
        pr = np.einsum("br,br->b", q.conj(), resid)
        proj[ok, it] = pr[ok]
        resid[ok] -= pr[ok, None] * q[ok]
        energy[:, it + 1] = np.sum(np.abs(resid) ** 2, axis=1)
        active &= energy[:, it + 1] > max(tol * tol, EXACT_FLOOR) * energy[:, 0]
    coefs = np.zeros((batch, order), dtype=np.complex128)
    for b in range(batch):
        s = n_sel[b]
        if s:
            coefs[b, :s] = _back_substitute(R[b, :s, :s], proj[b, :s])
    return support, coefs, n_sel, energy, resid


def _back_substitute(R, b):
    n = b.shape[0]
    x = np.zeros(n, dtype=np.complex128)
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for j in range(i + 1, n):
            acc -= R[i, j] * x[j]
        x[i] = acc / R[i, i]
    return x


def _omp_batch_loops(A, Y, order, tol):
    n_rows, n_atoms = A.shape
    batch = Y.shape[0]
    col_norm = np.empty(n_atoms)
    for q in range(n_atoms):
        s = 0.0
        for r in range(n_rows):
            s += A[r, q].real ** 2 + A[r, q].imag ** 2
        col_norm[q] = np.sqrt(s)
    # conjugated, normalized atoms stored row-wise for contiguous inner loops
    Ah = np.empty((n_atoms, n_rows), dtype=np.complex128)
    for q in range(n_atoms):
        for r in range(n_rows):
            Ah[q, r] = np.conj(A[r, q]) / col_norm[q]
    support = np.full((batch, order), -1, dtype=np.int64)
    coefs = np.zeros((batch, order), dtype=np.complex128)
    n_sel = np.zeros(batch, dtype=np.int64)
    energy = np.zeros((batch, order + 1))
    resid_all = np.empty((batch, n_rows), dtype=np.complex128)
    Q = np.zeros((n_rows, order), dtype=np.complex128)
    R = np.zeros((order, order), dtype=np.complex128)
    proj = np.zeros(order, dtype=np.complex128)
    resid = np.empty(n_rows, dtype=np.complex128)
    v = np.empty(n_rows, dtype=np.complex128)
    for b in range(batch):
        e0 = 0.0
        for r in range(n_rows):
            resid[r] = Y[b, r]
            e0 += resid[r].real ** 2 + resid[r].imag ** 2
        energy[b, 0] = e0
        e = e0
        active = e0 > 0.0
        for it in range(order):
            if not active:
                energy[b, it + 1] = e
                continue
            corr = np.dot(Ah, resid)
            best = -1
            best_val = -1.0
            for q in range(n_atoms):
                taken = False
                for i in range(it):
                    if support[b, i] == q:
                        taken = True
                if taken:
                    continue
                val = corr[q].real * corr[q].real + corr[q].imag * corr[q].imag
                if val > best_val:
                    best_val = val
                    best = q
            for r in range(n_rows):
                v[r] = A[r, best]
            for i in range(it):
                acc = 0.0 + 0.0j
                for r in range(n_rows):
                    acc += np.conj(Q[r, i]) * A[r, best]
                R[i, it] = acc
            for _ in range(2):
                for i in range(it):
                    acc = 0.0 + 0.0j
                    for r in range(n_rows):
                        acc += np.conj(Q[r, i]) * v[r]
                    for r in range(n_rows):
                        v[r] -= acc * Q[r, i]
            vn = 0.0
            for r in range(n_rows):
                vn += v[r].real ** 2 + v[r].imag ** 2
            vn = np.sqrt(vn)
            if vn <= 1e-10 * col_norm[best]:
                active = False
                energy[b, it + 1] = e
                continue
            for r in range(n_rows):
                Q[r, it] = v[r] / vn
            R[it, it] = vn
            support[b, it] = best
            n_sel[b] += 1
            acc = 0.0 + 0.0j
            for r in range(n_rows):
                acc += np.conj(Q[r, it]) * resid[r]
            proj[it] = acc
            e = 0.0
            for r in range(n_rows):
                resid[r] -= acc * Q[r, it]
                e += resid[r].real ** 2 + resid[r].imag ** 2
            energy[b, it + 1] = e
            if e <= max(tol * tol, EXACT_FLOOR) * e0:
                active = False
        s = n_sel[b]
        for i in range(s - 1, -1, -1):
            acc = proj[i]
            for j in range(i + 1, s):
                acc -= R[i, j] * coefs[b, j]
            coefs[b, i] = acc / R[i, i]
        for r in range(n_rows):
            resid_all[b, r] = resid[r]
    return support, coefs, n_sel, energy, resid_all


if USE_NUMBA:
    _scatter_sum_jit = numba.njit(cache=True)(_scatter_sum_loops)
    _omp_batch_jit = numba.njit(cache=True, fastmath=True)(_omp_batch_loops)


def scatter_sum(delays, dopplers, amps, kappa, n_pulses, pri):
    """Unscaled multi-pulse Fourier coefficients of a point-scatterer set.

    Returns the P x K matrix ``sum_l a_l exp(-j nu_l p tau) exp(-j 2 pi k tau_l / tau)``.
    """
    delays = np.ascontiguousarray(delays, dtype=np.float64)
    dopplers = np.ascontiguousarray(dopplers, dtype=np.float64)
    amps = np.ascontiguousarray(amps, dtype=np.complex128)
    kappa = np.ascontiguousarray(kappa, dtype=np.float64)
    if USE_NUMBA:
        return _scatter_sum_jit(delays, dopplers, amps, kappa, int(n_pulses), float(pri))
    return _scatter_sum_numpy(delays, dopplers, amps, kappa, int(n_pulses), float(pri))


def omp_batch(A, Y, order, tol=0.0):
    """Run OMP independently on every row of ``Y`` against dictionary ``A``.

    Parameters
    ----------
    A : ndarray, shape (K, N)
        Dictionary; columns need not be normalized.
    Y : ndarray, shape (B, K)
        One measurement vector per row.
    order : int
        Maximum number of atoms per row.
    tol : float
        Stop a row once its residual norm drops below ``tol * ||y||``.

    Returns
    -------
    support : (B, order) int array, -1 where fewer atoms were selected
    coefs : (B, order) least-squares amplitudes on the support
    n_selected : (B,) int array
    energy : (B, order + 1) residual energy after each iteration
    residual : (B, K) final residual
    """
    A = np.ascontiguousarray(A, dtype=np.complex128)
    Y = np.ascontiguousarray(np.atleast_2d(Y), dtype=np.complex128)
    order = int(order)
    if USE_NUMBA:
        return _omp_batch_jit(A, Y, order, float(tol))
    return _omp_batch_numpy(A, Y, order, float(tol))
