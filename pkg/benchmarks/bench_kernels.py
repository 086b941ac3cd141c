"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 20]

Per-kernel numbers call both implementations in one process. The
end-to-end line runs a focusing detection in two subprocesses, one with
``DOPFOCUS_NUMBA=0``.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dopfocus import _kernels as k

E2E = """
import time
from dopfocus.scene import RadarParams, random_scene
from dopfocus.waveform import make_pulse
from dopfocus.xampler import select_kappa, xample_analytic
from dopfocus.detectors import focusing_detect
p = RadarParams(100, 10e-6, 20e6)
sh = make_pulse(p)
tg = random_scene(p, 5, 0)
x = xample_analytic(p, sh, tg, select_kappa(p, 20), noise_sigma2=1e-8, rng_seed=1)
focusing_detect(x, sh, 5)  # warm-up / compile
t = time.perf_counter()
for _ in range(5):
    focusing_detect(x, sh, 5)
print((time.perf_counter() - t) / 5)
"""


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not k.USE_NUMBA:
        sys.exit("numba disabled (DOPFOCUS_NUMBA=0 or not installed); nothing to compare")

    rng = np.random.default_rng(0)
    L, P, K = 50, 100, 20
    d = rng.uniform(0, 10e-6, L)
    nu = rng.uniform(-3e5, 3e5, L)
    a = rng.standard_normal(L) + 1j * rng.standard_normal(L)
    kap = np.arange(-K // 2, K // 2).astype(float)
    scat = (d, nu, a, kap, P, 10e-6)

    N, B = 400, 200
    A = np.exp(-2j * np.pi * np.outer(kap, np.arange(N)) / N)
    Y = rng.standard_normal((B, K)) + 1j * rng.standard_normal((B, K))
    omp = (A, Y, 5, 0.0)

    k._scatter_sum_jit(*scat)
    k._omp_batch_jit(*omp)
    rows = [
        (f"scatter_sum  L={L} P={P} K={K}", best(lambda: k._scatter_sum_numpy(*scat), args.repeat),
         best(lambda: k._scatter_sum_jit(*scat), args.repeat)),
        (f"omp_batch    B={B} K={K} N={N} order=5", best(lambda: k._omp_batch_numpy(*omp), args.repeat),
         best(lambda: k._omp_batch_jit(*omp), args.repeat)),
    ]
    e2e = []
    for flag in ("0", "1"):
        env = dict(os.environ, DOPFOCUS_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        e2e.append(float(out.stdout.strip()))
    rows.append(("focusing_detect P=100 K=20 L=5 (end to end)", e2e[0], e2e[1]))

    print(f"{'kernel':48s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, t_np, t_nb in rows:
        print(f"{name:48s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
