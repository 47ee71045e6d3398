"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names (``fir_block``, ``lagged_xcorr``, ``correlation_lags``,
``frame_rms``, ``flms_run``) dispatch to the numba version unless numba is missing or
``PHASESYNTH_DISABLE_NUMBA`` is set. Both versions are always importable under
``*_numba`` / ``*_numpy`` so tests and the benchmark can compare them.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "fir_block",
    "lagged_xcorr",
    "correlation_lags",
    "frame_rms",
    "flms_run",
]


# ---------------------------------------------------------------------------
# streaming FIR: y = h * x with explicit input history
# ---------------------------------------------------------------------------


def fir_block_numpy(h, history, x):
    """Filter one block. ``history`` holds the last ``len(h) - 1`` inputs."""
    buf = np.concatenate((history, x))
    y = np.convolve(buf, h, mode="valid")
    return y, buf[len(buf) - len(history):].copy()


@njit(cache=True, nogil=True, fastmath=True)
def fir_block_numba(h, history, x):
    taps = h.shape[0]
    hl = history.shape[0]
    n = x.shape[0]
    buf = np.empty(hl + n)
    buf[:hl] = history
    buf[hl:] = x
    # reversed taps give a unit-stride inner loop the compiler can vectorize
    hr = h[::-1].copy()
    y = np.empty(n)
    for i in range(n):
        acc = 0.0
        for k in range(taps):
            acc += hr[k] * buf[i + k]
        y[i] = acc
    return y, buf[n:].copy()


# ---------------------------------------------------------------------------
# short-time cross-correlation over a lag range
# ---------------------------------------------------------------------------


def lagged_xcorr_numpy(ref, sig, start, length, max_lag):
    """c[j] = sum_i ref[start+i] * sig[start+i+lag], lag = j - max_lag."""
    seg = ref[start:start + length]
    wide = sig[start - max_lag:start + length + max_lag]
    return np.correlate(wide, seg, mode="valid")


@njit(cache=True, nogil=True)
def lagged_xcorr_numba(ref, sig, start, length, max_lag):
    out = np.zeros(2 * max_lag + 1)
    seg = np.ascontiguousarray(ref[start:start + length])
    for j in range(2 * max_lag + 1):
        off = start + j - max_lag
        out[j] = np.dot(seg, sig[off:off + length])
    return out


# ---------------------------------------------------------------------------
# biased correlation estimates for the normal equations
# ---------------------------------------------------------------------------


def correlation_lags_numpy(x, s, n_taps):
    """Biased estimates r_xx[j] = <x(k) x(k-j)>, r_xs[j] = <s(k) x(k-j)>, j < n_taps."""
    k = x.shape[0]
    nfft = 1 << int(np.ceil(np.log2(2 * k)))
    X = np.fft.rfft(x, nfft)
    S = np.fft.rfft(s, nfft)
    rxx = np.fft.irfft(X * np.conj(X), nfft)[:n_taps] / k
    rxs = np.fft.irfft(S * np.conj(X), nfft)[:n_taps] / k
    return rxx, rxs


@njit(cache=True, nogil=True)
def correlation_lags_numba(x, s, n_taps):
    k = x.shape[0]
    rxx = np.zeros(n_taps)
    rxs = np.zeros(n_taps)
    for j in range(n_taps):
        a = 0.0
        b = 0.0
        for i in range(j, k):
            a += x[i] * x[i - j]
            b += s[i] * x[i - j]
        rxx[j] = a / k
        rxs[j] = b / k
    return rxx, rxs


# ---------------------------------------------------------------------------
# framewise RMS
# ---------------------------------------------------------------------------


def frame_rms_numpy(x, frame):
    n = x.shape[0] // frame
    if n == 0:
        return np.zeros(0)
    blocks = x[: n * frame].reshape(n, frame)
    return np.sqrt(np.mean(blocks * blocks, axis=1))


@njit(cache=True, nogil=True)
def frame_rms_numba(x, frame):
    n = x.shape[0] // frame
    out = np.zeros(n)
    for b in range(n):
        acc = 0.0
        for i in range(b * frame, (b + 1) * frame):
            acc += x[i] * x[i]
        out[b] = np.sqrt(acc / frame)
    return out


# ---------------------------------------------------------------------------
# whole-signal FLMS recursion (one partition, overlap-save)
# ---------------------------------------------------------------------------
#
# Same arithmetic as ``adaptive.Flms.block`` with the weights kept as N
# time-domain taps. The constrained gradient is the causal block
# cross-correlation c[j] = sum_i e[i] x[N + i - j]; it is normalized per bin
# in the 2N-point DFT domain and truncated back to N taps.


def _envelope_numpy(p, half):
    if half == 0:
        return p
    from scipy.ndimage import maximum_filter1d

    return maximum_filter1d(p, 2 * half + 1, mode="nearest")


def flms_run_numpy(x, d, n, alpha, lam, floor_ratio, env_bins, onset_ratio, reg, avg_from):
    """Run the FLMS over whole blocks of ``x``/``d``; returns ``(e, taps, mean_taps)``.

    ``mean_taps`` averages the taps after every block with index ``>= avg_from``.
    """
    n_blocks = x.shape[0] // n
    w = np.zeros(n)
    power = np.zeros(n + 1)
    ltp = 0.0
    xbuf = np.zeros(2 * n)
    e_all = np.zeros(n_blocks * n)
    acc = np.zeros(n)
    cnt = 0
    tiny = np.finfo(np.float64).tiny
    for b in range(n_blocks):
        xbuf[:n] = xbuf[n:]
        xbuf[n:] = x[b * n:(b + 1) * n]
        W = np.fft.rfft(w, 2 * n)
        X = np.fft.rfft(xbuf)
        y = np.fft.irfft(W * X, 2 * n)[n:]
        e = d[b * n:(b + 1) * n] - y
        e_all[b * n:(b + 1) * n] = e
        px = (X * X.conj()).real
        ltp += (px.mean() - ltp) / (b + 1)
        if alpha > 0:
            if b > 0:
                p = power / (1.0 - lam ** b)
                p = np.where(px > onset_ratio * p, px, p)
            else:
                p = px
            p = _envelope_numpy(p, env_bins)
            den = p + floor_ratio * p.mean() + reg * ltp + tiny
            E = np.fft.rfft(np.concatenate((np.zeros(n), e)))
            c = np.fft.irfft(X.conj() * E, 2 * n)[:n]
            w = w + alpha * np.fft.irfft(np.fft.rfft(c, 2 * n) / den, 2 * n)[:n]
        power = lam * power + (1.0 - lam) * px
        if b >= avg_from:
            acc += w
            cnt += 1
    return e_all, w, acc / max(cnt, 1)


@njit(cache=True, nogil=True)
def _flms_run_dft(x, d, n, alpha, lam, floor_ratio, env_bins, onset_ratio, reg, avg_from, cos_t, sin_t):
    n_blocks = x.shape[0] // n
    nb = n + 1
    w = np.zeros(n)
    power = np.zeros(nb)
    p = np.zeros(nb)
    pe = np.zeros(nb)
    px = np.zeros(nb)
    ltp = 0.0
    xbuf = np.zeros(2 * n)
    e_all = np.zeros(n_blocks * n)
    e = np.zeros(n)
    c = np.zeros(n)
    ur = np.zeros(nb)
    ui = np.zeros(nb)
    acc = np.zeros(n)
    cnt = 0
    tiny = np.finfo(np.float64).tiny
    for b in range(n_blocks):
        for i in range(n):
            xbuf[i] = xbuf[n + i]
            xbuf[n + i] = x[b * n + i]
        # output and error: direct convolution with the last 2N inputs
        for i in range(n):
            acc_y = 0.0
            for j in range(n):
                acc_y += w[j] * xbuf[n + i - j]
            e[i] = d[b * n + i] - acc_y
            e_all[b * n + i] = e[i]
        pmean = 0.0
        for k in range(nb):
            re = 0.0
            im = 0.0
            for t in range(2 * n):
                re += xbuf[t] * cos_t[k, t]
                im -= xbuf[t] * sin_t[k, t]
            px[k] = re * re + im * im
            pmean += px[k]
        pmean /= nb
        ltp += (pmean - ltp) / (b + 1)
        if alpha > 0:
            if b > 0:
                corr = 1.0 - lam ** b
                for k in range(nb):
                    p[k] = power[k] / corr
                    if px[k] > onset_ratio * p[k]:
                        p[k] = px[k]
            else:
                for k in range(nb):
                    p[k] = px[k]
            if env_bins > 0:
                for k in range(nb):
                    lo = max(k - env_bins, 0)
                    hi = min(k + env_bins, nb - 1)
                    m = p[lo]
                    for q in range(lo + 1, hi + 1):
                        if p[q] > m:
                            m = p[q]
                    pe[k] = m
            else:
                for k in range(nb):
                    pe[k] = p[k]
            emean = 0.0
            for k in range(nb):
                emean += pe[k]
            emean /= nb
            off = floor_ratio * emean + reg * ltp + tiny
            for j in range(n):
                s = 0.0
                for i in range(n):
                    s += e[i] * xbuf[n + i - j]
                c[j] = s
            for k in range(nb):
                re = 0.0
                im = 0.0
                for t in range(n):
                    re += c[t] * cos_t[k, t]
                    im -= c[t] * sin_t[k, t]
                den = pe[k] + off
                ur[k] = re / den
                ui[k] = im / den
            # half-spectrum inverse DFT, first N samples only
            for t in range(n):
                s = ur[0] + ur[n] * cos_t[n, t]
                for k in range(1, n):
                    s += 2.0 * (ur[k] * cos_t[k, t] - ui[k] * sin_t[k, t])
                w[t] += alpha * s / (2 * n)
        for k in range(nb):
            power[k] = lam * power[k] + (1.0 - lam) * px[k]
        if b >= avg_from:
            for j in range(n):
                acc[j] += w[j]
            cnt += 1
    return e_all, w, acc / max(cnt, 1)


def flms_run_numba(x, d, n, alpha, lam, floor_ratio, env_bins, onset_ratio, reg, avg_from):
    ang = np.pi * np.outer(np.arange(n + 1), np.arange(2 * n)) / n
    return _flms_run_dft(
        np.ascontiguousarray(x, dtype=np.float64), np.ascontiguousarray(d, dtype=np.float64),
        int(n), float(alpha), float(lam), float(floor_ratio), int(env_bins), float(onset_ratio),
        float(reg), int(avg_from), np.cos(ang), np.sin(ang),
    )


# direct DFTs cost O(N^2) per block; beyond this FFTs win even with Python overhead
FLMS_DFT_MAX_TAPS = 64


def _flms_run_dispatch(x, d, n, *args):
    if n <= FLMS_DFT_MAX_TAPS:
        return flms_run_numba(x, d, n, *args)
    return flms_run_numpy(x, d, n, *args)


if USE_NUMBA:
    fir_block = fir_block_numba
    lagged_xcorr = lagged_xcorr_numba
    correlation_lags = correlation_lags_numba
    frame_rms = frame_rms_numba
    flms_run = _flms_run_dispatch
else:
    fir_block = fir_block_numpy
    lagged_xcorr = lagged_xcorr_numpy
    correlation_lags = correlation_lags_numpy
    frame_rms = frame_rms_numpy
    flms_run = flms_run_numpy
