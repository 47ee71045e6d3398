"""Time the numba kernels against their numpy fallbacks.

Both variants are imported directly, so the env flag does not matter here.
Compilation is triggered once before timing. Each row reports the best of
``--repeat`` runs and checks that both variants agree.

    python benchmarks/bench_kernels.py [--repeat 5] [--quick]
"""

import argparse
import time

import numpy as np

from phasesynth import kernels
from phasesynth._accel import HAVE_NUMBA


def best_time(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _flat(out):
    if isinstance(out, tuple):
        return np.concatenate([np.ravel(np.asarray(o, dtype=np.float64)) for o in out])
    return np.ravel(np.asarray(out, dtype=np.float64))


def cases(quick):
    rng = np.random.default_rng(0)
    n = 16000 * (2 if quick else 10)
    x = rng.standard_normal(n)
    s = rng.standard_normal(n)
    h = rng.standard_normal(1024) * np.exp(-np.arange(1024) / 200.0)
    hist = np.zeros(h.shape[0] - 1)
    blk = x[:256].copy()
    n_flms = 16000 * (5 if quick else 20)
    xf = rng.standard_normal(n_flms)
    xf = np.convolve(xf, [1.0, 0.6, 0.2])[:n_flms]
    flms_args = (0.4, 0.99, 0.3, 4, 16.0, 1e-10, n_flms // 32)
    return [
        ("fir_block 1024 taps x 256", kernels.fir_block_numpy, kernels.fir_block_numba, (h, hist, blk)),
        ("lagged_xcorr 160 lags", kernels.lagged_xcorr_numpy, kernels.lagged_xcorr_numba, (x, s, 2000, 4000, 80)),
        ("correlation_lags 32 taps", kernels.correlation_lags_numpy, kernels.correlation_lags_numba, (x, s, 32)),
        ("frame_rms 256", kernels.frame_rms_numpy, kernels.frame_rms_numba, (x, 256)),
        ("flms_run N=16", kernels.flms_run_numpy, kernels.flms_run_numba, (xf[:-1], xf[1:], 16) + flms_args),
        ("flms_run N=32", kernels.flms_run_numpy, kernels.flms_run_numba, (xf[:-2], xf[2:], 32) + flms_args),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="shorter inputs")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 1

    print(f"{'kernel':28s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, slow, fast, fargs in cases(args.quick):
        fast(*fargs)  # compile
        t_np, ref = best_time(slow, fargs, args.repeat)
        t_nb, got = best_time(fast, fargs, args.repeat)
        diff = float(np.max(np.abs(_flat(ref) - _flat(got))))
        print(f"{name:28s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:7.1f}x {diff:10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
