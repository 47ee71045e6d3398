"""Frequency-domain adaptive filters.

``Flms`` is a single-partition overlap-save FLMS with per-bin power
normalization (floored and spectrally smoothed, see ``FlmsConfig``). ``KalmanMdf`` is a partitioned (multi-delay) frequency-domain
Kalman filter with a diagonal state-space model ``W <- A W + noise``.

Both use FFT size ``2B`` for block size ``B`` and keep half spectra.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d

from . import kernels
from .errors import ConfigurationError, NumericError

__all__ = [
    "FlmsConfig",
    "KalmanConfig",
    "Flms",
    "KalmanMdf",
    "BiasSolution",
    "flms_predictor",
]


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite samples in adaptive filter input")


def _constrain(update, block):
    """Gradient constraint: keep the first ``block`` taps of the time-domain update."""
    t = np.fft.irfft(update, 2 * block, axis=-1)
    t[..., block:] = 0.0
    return np.fft.rfft(t, axis=-1)


@dataclass(frozen=True)
class FlmsConfig:
    """FLMS settings.

    The per-bin power used for normalization is the running maximum over
    ``±envelope_bins`` neighbours plus ``floor_ratio`` times its mean across
    bins. Both keep the preconditioner's dynamic range bounded on line-like
    spectra (sines, voiced speech), where raw per-bin powers diverge.
    """

    filter_length: int
    step_size: float = 0.4
    regularization: float = 1e-10
    smoothing: float = 0.99
    floor_ratio: float = 0.3
    envelope_bins: int = 4
    onset_ratio: float = 16.0

    def __post_init__(self):
        if self.filter_length < 1:
            raise ConfigurationError("filter_length must be positive")
        if not 0.0 <= self.step_size <= 1.0:
            raise ConfigurationError("step_size must lie in [0, 1]")
        if not self.regularization > 0:
            raise ConfigurationError("regularization must be positive")
        if self.floor_ratio < 0 or self.envelope_bins < 0:
            raise ConfigurationError("floor_ratio and envelope_bins must be non-negative")


class Flms:
    """Overlap-save FLMS, one partition of length ``N`` (FFT size ``2N``)."""

    def __init__(self, config):
        self.config = config
        n = config.filter_length
        self.weights = np.zeros(n + 1, dtype=complex)
        self.power = np.zeros(n + 1)
        self.long_term_power = 0.0
        self.blocks = 0
        self._xbuf = np.zeros(2 * n)

    @property
    def block_size(self):
        return self.config.filter_length

    def block(self, x_block, d_block):
        """Filter one block, update the weights, return ``(y, e)``."""
        n = self.config.filter_length
        x_block = np.asarray(x_block, dtype=np.float64)
        d_block = np.asarray(d_block, dtype=np.float64)
        if x_block.shape != (n,) or d_block.shape != (n,):
            raise ValueError(f"blocks must have {n} samples")
        _check_finite(x_block, d_block)

        self._xbuf[:n] = self._xbuf[n:]
        self._xbuf[n:] = x_block
        X = np.fft.rfft(self._xbuf)
        y = np.fft.irfft(self.weights * X, 2 * n)[n:]
        e = d_block - y

        px = (X * X.conj()).real
        cfg = self.config
        lam = cfg.smoothing
        self.blocks += 1
        self.long_term_power += (px.mean() - self.long_term_power) / self.blocks

        alpha = cfg.step_size
        if alpha > 0:
            # normalize with the power of past blocks only: a normalizer that
            # sees the current block correlates with the gradient and biases
            # the fixed point. Bins with a sudden onset (silence to speech,
            # vowel to fricative) fall back to the current block so the step
            # cannot explode.
            if self.blocks > 1:
                p = self.power / (1.0 - lam ** (self.blocks - 1))
                p = np.where(px > cfg.onset_ratio * p, px, p)
            else:
                p = px
            if cfg.envelope_bins:
                p = maximum_filter1d(p, 2 * cfg.envelope_bins + 1, mode="nearest")
            delta = cfg.regularization * self.long_term_power + np.finfo(float).tiny
            den = p + cfg.floor_ratio * p.mean() + delta
            E = np.fft.rfft(np.concatenate((np.zeros(n), e)))
            # constrain before and after normalizing: a single projection of a
            # per-bin normalized gradient has a biased fixed point whenever the
            # error correlates with wrapped (non-causal) lags, as in prediction
            grad = _constrain(X.conj() * E, n)
            self.weights += alpha * _constrain(grad / den, n)
        self.power = lam * self.power + (1.0 - lam) * px
        return y, e

    def impulse_response(self):
        n = self.config.filter_length
        return np.fft.irfft(self.weights, 2 * n)[:n]


@dataclass
class BiasSolution:
    """Converged predictor ``h_bias`` with the error signal it produced.

    ``taps`` are the final weights, ``mean_taps`` the weights averaged over the
    second half of the run (Polyak averaging removes the gradient noise).
    """

    taps: np.ndarray
    error: np.ndarray
    mean_taps: np.ndarray
    delay: int
    step_size: float


def flms_predictor(s, delay, n_taps, step_size=0.4, average_from=0.5, config=None):
    """Predict ``s(k)`` from ``x(k) = s(k - delay)`` with an FLMS of ``n_taps`` taps.

    Returns the predictor and the a-priori error ``e = s - h_bias * x``. The
    recursion is the one of :class:`Flms`, run by a compiled kernel when
    available.
    """
    s = np.asarray(s, dtype=np.float64)
    if delay < 0:
        raise ValueError("delay must be non-negative")
    if s.shape[0] < 10 * n_taps:
        raise ValueError(f"signal too short: need >= {10 * n_taps} samples")
    cfg = config or FlmsConfig(n_taps, step_size)
    if cfg.filter_length != n_taps:
        raise ConfigurationError("config filter_length differs from n_taps")
    x = np.zeros_like(s)
    x[delay:] = s[: s.shape[0] - delay] if delay else s
    n_blocks = -(-s.shape[0] // n_taps)
    pad = n_blocks * n_taps - s.shape[0]
    xp = np.concatenate((x, np.zeros(pad)))
    sp = np.concatenate((s, np.zeros(pad)))
    _check_finite(xp, sp)
    e, taps, mean_taps = kernels.flms_run(
        xp, sp, n_taps, cfg.step_size, cfg.smoothing, cfg.floor_ratio, cfg.envelope_bins,
        cfg.onset_ratio, cfg.regularization, int(n_blocks * average_from),
    )
    return BiasSolution(taps, e[: s.shape[0]], mean_taps, delay, cfg.step_size)


@dataclass(frozen=True)
class KalmanConfig:
    """Partitioned-block Kalman filter geometry.

    ``fft_size`` is the per-partition DFT length; each partition covers
    ``fft_size // 2`` taps and the filter consumes blocks of that size.
    ``transition`` is the per-block state factor ``A``. ``initial_variance``
    is the per-bin state-error variance in orthonormal-DFT units.
    """

    partitions: int = 4
    fft_size: int = 512
    transition: float = 0.99999
    initial_variance: float = 1e-2
    noise_smoothing: float = 0.9
    regularization: float = 1e-10

    def __post_init__(self):
        n = self.fft_size
        if n < 4 or n & (n - 1):
            raise ConfigurationError("fft_size must be a power of two")
        if self.partitions < 1:
            raise ConfigurationError("need at least one partition")
        if not 0.0 < self.transition <= 1.0:
            raise ConfigurationError("transition A must lie in (0, 1]")

    @property
    def block_size(self):
        return self.fft_size // 2

    @property
    def length(self):
        return self.partitions * self.block_size


class KalmanMdf:
    """Multi-delay frequency-domain Kalman filter.

    Per block: echo = sum_m W_m X_m (overlap-save), e = mic - echo. With
    ``R = sum_m |X_m|^2 P_m + (K/B) Psi_e`` the per-bin gain is
    ``mu_m = P_m / R``; ``W_m <- A (W_m + constrain(mu_m X_m^* E))`` and
    ``P_m <- A^2 (1 - (B/K) mu_m |X_m|^2) P_m + (1 - A^2) <|W_m|^2>``.
    ``Psi_e`` and ``<|W_m|^2>`` are recursively smoothed powers.
    """

    def __init__(self, config=None):
        self.config = config or KalmanConfig()
        m, b = self.config.partitions, self.config.block_size
        self.weights = np.zeros((m, b + 1), dtype=complex)
        # initial_variance is given for an orthonormal DFT; numpy's unnormalized
        # transform of a 2B frame scales per-bin powers by 2B
        self.variance = np.full((m, b + 1), self.config.initial_variance * 2 * b)
        self.weight_power = np.zeros((m, b + 1))
        self.noise_power = np.zeros(b + 1)
        self.spectra = np.zeros((m, b + 1), dtype=complex)
        self.long_term_power = 0.0
        self.gain = np.zeros((m, b + 1))
        self.blocks = 0
        self._xbuf = np.zeros(2 * b)

    @property
    def block_size(self):
        return self.config.block_size

    def block(self, x_block, mic_block):
        """Process one block; returns ``(echo_estimate, error)``."""
        cfg = self.config
        b = cfg.block_size
        x_block = np.asarray(x_block, dtype=np.float64)
        mic_block = np.asarray(mic_block, dtype=np.float64)
        if x_block.shape != (b,) or mic_block.shape != (b,):
            raise ValueError(f"blocks must have {b} samples")
        _check_finite(x_block, mic_block)

        self._xbuf[:b] = self._xbuf[b:]
        self._xbuf[b:] = x_block
        X = self.spectra
        X[1:] = X[:-1]
        X[0] = np.fft.rfft(self._xbuf)

        echo = np.fft.irfft(np.sum(self.weights * X, axis=0), 2 * b)[b:]
        e = mic_block - echo
        E = np.fft.rfft(np.concatenate((np.zeros(b), e)))

        lam = cfg.noise_smoothing
        self.noise_power = lam * self.noise_power + (1.0 - lam) * (E * E.conj()).real
        px = (X * X.conj()).real
        self.blocks += 1
        self.long_term_power += (px[0].mean() - self.long_term_power) / self.blocks
        delta = cfg.regularization * self.long_term_power + np.finfo(float).tiny

        # K/B = 2 maps the zero-padded error spectrum onto per-bin noise power
        R = np.sum(px * self.variance, axis=0) + 2.0 * self.noise_power + delta
        # bins without any input energy carry no information: zero gain
        excited = np.sum(px, axis=0) > 0
        mu = np.divide(self.variance, R, out=np.zeros_like(self.variance), where=excited)
        self.gain = mu * px
        update = _constrain(mu * X.conj() * E, b)

        a = cfg.transition
        w_new = self.weights + update
        self.weight_power = lam * self.weight_power + (1.0 - lam) * (w_new * w_new.conj()).real
        self.variance = a * a * (1.0 - 0.5 * self.gain) * self.variance + (1.0 - a * a) * self.weight_power
        self.weights = a * w_new
        return echo, e

    def impulse_response(self):
        b = self.config.block_size
        return np.fft.irfft(self.weights, 2 * b, axis=-1)[:, :b].reshape(-1)
