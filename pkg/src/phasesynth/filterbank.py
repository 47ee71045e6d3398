"""Windowed DFT analysis/synthesis filter bank with overlap-add.

Frames are real-input half spectra of length ``N/2 + 1``. The same normalized
Hanning window is applied before the DFT and after the IDFT, scaled so the
squared window overlap-adds to one. With no spectral modification the
analysis/synthesis chain is a pure delay of ``N - L`` samples.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "FilterBankConfig",
    "SpectralFrame",
    "OverlapAddState",
    "FilterBank",
    "hann_periodic",
    "make_window",
    "analyze",
    "synthesize",
    "process_stream",
]


@dataclass(frozen=True)
class FilterBankConfig:
    dft_size: int = 256
    frame_shift: int = 128
    sample_rate: float = 16000.0

    def __post_init__(self):
        n, hop = self.dft_size, self.frame_shift
        if n < 4 or n & (n - 1):
            raise ConfigurationError(f"dft_size must be a power of two >= 4, got {n}")
        if hop not in (n // 2, n // 4):
            raise ConfigurationError(
                f"frame_shift must be N/2 or N/4 (N={n}), got {hop}"
            )
        if not self.sample_rate > 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def n_bins(self):
        return self.dft_size // 2 + 1

    @property
    def latency(self):
        """Analysis/synthesis delay in samples."""
        return self.dft_size - self.frame_shift

    @property
    def bin_spacing(self):
        return self.sample_rate / self.dft_size

    def frame_time(self, index):
        """Time in seconds of frame ``index`` (t = L*l/f_a)."""
        return self.frame_shift * index / self.sample_rate

    def bin_frequencies(self):
        return np.arange(self.n_bins) * self.bin_spacing


@dataclass
class SpectralFrame:
    bins: np.ndarray
    index: int
    config: FilterBankConfig = None

    @property
    def magnitude(self):
        return np.abs(self.bins)

    @property
    def phase(self):
        return np.angle(self.bins)

    @property
    def time(self):
        return self.config.frame_time(self.index)

    def with_bins(self, bins):
        return SpectralFrame(bins, self.index, self.config)


def hann_periodic(n):
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / n))


def make_window(config):
    """Normalized analysis/synthesis window for the configured overlap.

    ``L = N/2`` uses ``sqrt(2L/N) * sqrt(hann)``; ``L = N/4`` uses
    ``2 * sqrt(L / (1.5 N)) * hann``. Both satisfy sum of squared shifted
    copies == 1.
    """
    n, hop = config.dft_size, config.frame_shift
    hann = hann_periodic(n)
    if hop == n // 2:
        return np.sqrt(2.0 * hop / n) * np.sqrt(hann)
    if hop == n // 4:
        return 2.0 * np.sqrt(hop / (1.5 * n)) * hann
    raise ConfigurationError(f"unsupported frame shift {hop} for N={n}")


def analyze(samples, index, window, config=None):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape != window.shape:
        raise ValueError(
            f"frame length {samples.shape} does not match window length {window.shape}"
        )
    return SpectralFrame(np.fft.rfft(samples * window), index, config)


class OverlapAddState:
    """Synthesis accumulator; keeps the ``N - L`` samples of pending overlap."""

    def __init__(self, dft_size, frame_shift):
        self.dft_size = dft_size
        self.frame_shift = frame_shift
        self.acc = np.zeros(dft_size)

    def reset(self):
        self.acc[:] = 0.0


def synthesize(frame, window, ola_state):
    """IDFT, window, overlap-add; returns the next ``L`` finished samples."""
    n = ola_state.dft_size
    hop = ola_state.frame_shift
    if frame.bins.shape[0] != n // 2 + 1:
        raise ValueError(f"frame has {frame.bins.shape[0]} bins, expected {n // 2 + 1}")
    acc = ola_state.acc
    acc += np.fft.irfft(frame.bins, n) * window
    out = acc[:hop].copy()
    acc[:-hop] = acc[hop:]
    acc[-hop:] = 0.0
    return out


class FilterBank:
    """Streaming analysis -> transform -> synthesis, one hop at a time.

    ``process_block`` takes exactly ``L`` input samples and returns ``L``
    output samples delayed by ``N - L``.
    """

    def __init__(self, config=None):
        self.config = config or FilterBankConfig()
        self.window = make_window(self.config)
        self._inbuf = np.zeros(self.config.dft_size)
        self._ola = OverlapAddState(self.config.dft_size, self.config.frame_shift)
        self.frame_index = 0

    def reset(self):
        self._inbuf[:] = 0.0
        self._ola.reset()
        self.frame_index = 0

    def process_block(self, block, transform=None):
        hop = self.config.frame_shift
        if len(block) != hop:
            raise ValueError(f"expected {hop} samples, got {len(block)}")
        buf = self._inbuf
        buf[:-hop] = buf[hop:]
        buf[-hop:] = block
        frame = analyze(buf, self.frame_index, self.window, self.config)
        if transform is not None:
            frame = transform(frame)
        self.frame_index += 1
        return synthesize(frame, self.window, self._ola)


def process_stream(signal, transform=None, config=None):
    """Run a whole signal through the filter bank.

    Output has the input's length and lags it by ``N - L`` samples; the first
    ``N`` output samples are warm-up transient.
    """
    config = config or FilterBankConfig()
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.shape[0] < config.dft_size:
        raise ValueError(
            f"signal must be 1-D with at least N={config.dft_size} samples"
        )
    hop = config.frame_shift
    n_hops = -(-signal.shape[0] // hop)
    padded = np.zeros(n_hops * hop)
    padded[: signal.shape[0]] = signal
    bank = FilterBank(config)
    out = np.empty_like(padded)
    for j in range(n_hops):
        out[j * hop:(j + 1) * hop] = bank.process_block(padded[j * hop:(j + 1) * hop], transform)
    return out[: signal.shape[0]]
