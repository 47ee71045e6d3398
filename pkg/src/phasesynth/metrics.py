"""Evaluation measures: prediction gain, Wiener bias oracle, system distance."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, signal as sps

from . import kernels
from .errors import NumericError

__all__ = [
    "PredictionReport",
    "DistanceTrace",
    "FrequencyEstimate",
    "EARLY_WINDOW_S",
    "LATE_WINDOW_S",
    "prediction_gain",
    "wiener_bias_oracle",
    "system_distance",
    "aggregate_trace",
    "dominant_frequency",
    "track_delay",
]

EARLY_WINDOW_S = (4.0, 6.0)
LATE_WINDOW_S = (20.0, 41.0)


@dataclass
class PredictionReport:
    gain_db: float
    var_s: float
    var_e: float
    delay: int = None
    taps: int = None


def prediction_gain(s, e, skip=0, delay=None, taps=None):
    """``10 log10(var(s) / var(e))`` over samples after ``skip``.

    Perfect prediction (zero error variance) gives ``+inf``.
    """
    s = np.asarray(s, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if s.shape != e.shape:
        raise ValueError(f"length mismatch: {s.shape} vs {e.shape}")
    if not 0 <= skip < s.shape[0]:
        raise ValueError(f"skip={skip} outside signal of length {s.shape[0]}")
    var_s = float(np.var(s[skip:]))
    var_e = float(np.var(e[skip:]))
    if var_e == 0.0:
        gain = float("inf")
    elif var_s == 0.0:
        gain = float("-inf")
    else:
        gain = 10.0 * np.log10(var_s / var_e)
    return PredictionReport(gain, var_s, var_e, delay, taps)


def wiener_bias_oracle(x, s, n_taps, loading=1e-8):
    """Least-squares FIR ``h`` minimizing ``<(s - h * x)^2>`` via the normal equations.

    Builds the biased Toeplitz autocorrelation ``R_xx`` and the
    cross-correlation ``r_xs`` from time averages and solves
    ``(R_xx + loading * tr(R_xx)/N * I) h = r_xs``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    if x.shape != s.shape:
        raise ValueError("x and s must have equal length")
    if n_taps > 64:
        raise ValueError("wiener_bias_oracle is a dense desk-scale solver; use n_taps <= 64")
    if x.shape[0] < 100 * n_taps:
        raise ValueError(f"need at least {100 * n_taps} samples for {n_taps} taps")
    rxx, rxs = kernels.correlation_lags(x, s, n_taps)
    R = linalg.toeplitz(rxx)
    R[np.diag_indices(n_taps)] += loading * np.trace(R) / n_taps
    cond = np.linalg.cond(R)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericError(f"autocorrelation matrix ill-conditioned (cond={cond:.3g})")
    return linalg.solve(R, rxs, assume_a="pos")


def system_distance(h0, h_hat, db=False):
    """``||h0 - h_hat|| / ||h0||``; the shorter vector is zero-padded."""
    h0 = np.asarray(h0, dtype=np.float64)
    h_hat = np.asarray(h_hat, dtype=np.float64)
    n = max(h0.shape[0], h_hat.shape[0])
    a = np.zeros(n)
    b = np.zeros(n)
    a[: h0.shape[0]] = h0
    b[: h_hat.shape[0]] = h_hat
    ref = np.linalg.norm(a)
    if ref == 0.0:
        raise ValueError("reference response is all zeros")
    sd = float(np.linalg.norm(a - b) / ref)
    if db:
        return 20.0 * np.log10(sd) if sd > 0 else float("-inf")
    return sd


@dataclass
class DistanceTrace:
    """System distance sampled once per adaptive block."""

    times: np.ndarray
    values: np.ndarray

    @classmethod
    def from_blocks(cls, values, block_size, sample_rate, offset=1):
        """Block ``l`` is stamped at the end of its data, ``(l + offset) * B / f_a``."""
        values = np.asarray(values, dtype=np.float64)
        times = (np.arange(values.shape[0]) + offset) * block_size / sample_rate
        return cls(times, values)

    @property
    def db(self):
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(self.values)

    def window_mean(self, t0, t1):
        """Mean over ``t0 <= t <= t1``; ``None`` if the trace does not reach ``t1``."""
        if self.times.shape[0] == 0 or self.times[-1] < t1 or self.times[0] > t0:
            return None
        sel = (self.times >= t0) & (self.times <= t1)
        if not np.any(sel):
            return None
        # fsum keeps constant segments exact
        return math.fsum(self.values[sel]) / int(np.count_nonzero(sel))


def aggregate_trace(trace, early=EARLY_WINDOW_S, late=LATE_WINDOW_S):
    """(early, late) window means; an uncovered window yields ``None``."""
    return trace.window_mean(*early), trace.window_mean(*late)


@dataclass
class FrequencyEstimate:
    hz: float
    confident: bool

    def __float__(self):
        return float(self.hz)


def dominant_frequency(x, sample_rate, window=1.0, start=None):
    """Instantaneous-frequency estimate from the analytic-signal phase slope.

    The unwrapped phase over ``window`` seconds (from ``start``, default: the
    last ``window`` seconds) is fitted with a straight line. ``confident`` is
    False when the spectrum is not concentrated around a single non-DC peak.
    """
    x = np.asarray(x, dtype=np.float64)
    n = int(round(window * sample_rate))
    if window < 0.5:
        raise ValueError("window must be at least 0.5 s")
    if n > x.shape[0]:
        raise ValueError("signal shorter than the analysis window")
    i0 = x.shape[0] - n if start is None else int(round(start * sample_rate))
    seg = x[i0:i0 + n]
    # guard region against analytic-signal edge effects
    guard = n // 20
    z = sps.hilbert(seg)
    phase = np.unwrap(np.angle(z[guard:n - guard]))
    t = np.arange(phase.shape[0]) / sample_rate
    slope = np.polyfit(t, phase, 1)[0]
    hz = slope / (2.0 * np.pi)

    spec = np.abs(np.fft.rfft(seg * np.hanning(n))) ** 2
    total = spec.sum()
    peak = int(np.argmax(spec))
    lo, hi = max(peak - 4, 0), min(peak + 5, spec.shape[0])
    concentrated = total > 0 and spec[lo:hi].sum() / total > 0.9
    return FrequencyEstimate(float(hz), bool(concentrated and peak > 2))


def track_delay(reference, delayed, sample_rate, window=0.032, hop=0.016, max_lag=48, offset=0):
    """Short-time lag of ``delayed`` against ``reference``.

    For each window center ``t`` the lag maximizing the cross-correlation of
    ``reference[t]`` with ``delayed[t + offset + lag]`` is refined by
    parabolic interpolation. Returns ``(times, lags)``.
    """
    ref = np.ascontiguousarray(reference, dtype=np.float64)
    sig = np.ascontiguousarray(delayed, dtype=np.float64)
    if offset:
        sig = np.concatenate((sig[offset:], np.zeros(offset)))
    length = int(round(window * sample_rate))
    step = int(round(hop * sample_rate))
    times, lags = [], []
    start = max_lag
    while start + length + max_lag <= min(ref.shape[0], sig.shape[0]):
        c = kernels.lagged_xcorr(ref, sig, start, length, max_lag)
        j = int(np.argmax(c))
        frac = 0.0
        if 0 < j < c.shape[0] - 1:
            den = c[j - 1] - 2.0 * c[j] + c[j + 1]
            if den != 0:
                frac = 0.5 * (c[j - 1] - c[j + 1]) / den
        lags.append(j - max_lag + frac)
        times.append((start + length / 2.0) / sample_rate)
        start += step
    return np.asarray(times), np.asarray(lags)
