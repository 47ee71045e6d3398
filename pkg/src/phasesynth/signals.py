"""Audio buffers, WAV I/O and synthetic test signals."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

from .errors import ConfigurationError

__all__ = [
    "SAMPLE_RATE",
    "AudioBuffer",
    "load_wav",
    "write_wav",
    "load_impulse_response",
    "generate_signal",
    "vowel_sequence",
    "speech_like",
    "synthetic_room_ir",
]

SAMPLE_RATE = 16000

# (F1, F2, F3) in Hz for a male speaker
VOWEL_FORMANTS = {
    "a": (730.0, 1250.0, 2500.0),
    "e": (420.0, 2050.0, 2650.0),
    "i": (290.0, 2250.0, 3000.0),
    "o": (430.0, 820.0, 2400.0),
    "u": (310.0, 720.0, 2300.0),
}


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return self.samples.shape[0] / self.sample_rate


def load_wav(path, expected_rate=SAMPLE_RATE):
    """Read a PCM16 / PCM32 / float WAV as mono float64.

    Multi-channel files are averaged. A sample rate other than
    ``expected_rate`` is rejected rather than resampled.
    """
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise ConfigurationError(f"cannot read WAV {path}: {exc}") from exc
    if expected_rate is not None and rate != expected_rate:
        raise ConfigurationError(
            f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz (resample externally)"
        )
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        x = data.astype(np.float64)
    else:
        raise ConfigurationError(f"{path}: unsupported sample format {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioBuffer(x, rate)


def write_wav(path, samples, sample_rate=SAMPLE_RATE, fmt="pcm16"):
    """Write mono audio. ``fmt`` is ``"pcm16"`` (clipped) or ``"float32"``."""
    x = np.asarray(getattr(samples, "samples", samples), dtype=np.float64)
    if fmt == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    elif fmt == "float32":
        data = x.astype(np.float32)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    wavfile.write(path, int(sample_rate), data)


def load_impulse_response(path, highpass_hz=None, sample_rate=SAMPLE_RATE):
    """Impulse response from a WAV (or whitespace/CSV text) file.

    ``highpass_hz`` applies a first-order high-pass as a simple
    low-frequency equalization.
    """
    path = str(path)
    if path.lower().endswith(".wav"):
        h = load_wav(path, sample_rate).samples
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # empty file: reported below
            h = np.loadtxt(path, delimiter="," if path.lower().endswith(".csv") else None).reshape(-1)
    if h.size == 0 or not np.all(np.isfinite(h)):
        raise ConfigurationError(f"{path}: empty or non-finite impulse response")
    if highpass_hz:
        b, a = sps.butter(1, highpass_hz / (sample_rate / 2.0), btype="highpass")
        h = sps.lfilter(b, a, h)
    return h


# ---------------------------------------------------------------------------
# synthetic material
# ---------------------------------------------------------------------------


def _normalize(x, peak_db=-3.0):
    peak = np.max(np.abs(x))
    if peak == 0:
        return x
    return x * (10.0 ** (peak_db / 20.0) / peak)


def _recording_highpass(x, sample_rate, cutoff=70.0):
    """Second-order high-pass as found in any microphone/recording chain."""
    b, a = sps.butter(2, cutoff / (sample_rate / 2.0), btype="highpass")
    return sps.lfilter(b, a, x)


def _glottal_train(f0_track, rng, sample_rate, jitter=0.01):
    """Pulse train following ``f0_track`` with cycle-to-cycle period jitter."""
    n = f0_track.shape[0]
    out = np.zeros(n)
    t = 0.0
    while True:
        k = int(t)
        if k >= n:
            break
        frac = t - k
        # linear-interpolated impulse keeps sub-sample pulse positions
        out[k] += 1.0 - frac
        if k + 1 < n:
            out[k + 1] += frac
        period = sample_rate / f0_track[k]
        t += period * (1.0 + jitter * rng.standard_normal())
    # glottal pulse shape: two real poles, about -12 dB/oct above 100 Hz
    pole = np.exp(-2.0 * np.pi * 100.0 / sample_rate)
    return sps.lfilter([1.0], np.convolve([1.0, -pole], [1.0, -pole]), out)


def _formant_filter(x, formants, sample_rate, bandwidth=90.0):
    y = x
    for f in formants:
        r = np.exp(-np.pi * bandwidth / sample_rate)
        theta = 2.0 * np.pi * f / sample_rate
        a = [1.0, -2.0 * r * np.cos(theta), r * r]
        y = sps.lfilter([sum(a)], a, y)
    return y


def _voiced(vowel, n, f0_start, f0_end, rng, sample_rate, hnr_db=18.0, jitter=0.01):
    f0 = np.linspace(f0_start, f0_end, n)
    src = _glottal_train(f0, rng, sample_rate, jitter)
    src = src / (np.std(src) + 1e-12)
    src = src + 10.0 ** (-hnr_db / 20.0) * rng.standard_normal(n)
    return _formant_filter(src, VOWEL_FORMANTS[vowel], sample_rate)


def vowel_sequence(duration=5.0, seed=0, sample_rate=SAMPLE_RATE, f0=120.0):
    """The five vowels a-e-i-o-u, each ``duration / 5`` seconds, concatenated.

    Each vowel is a jittered glottal pulse train around ``f0`` shaped by its
    formant resonators, with breath noise at 18 dB below the voiced part.
    Joints are cross-faded over 20 ms; a 70 Hz high-pass follows.
    """
    rng = np.random.default_rng(seed)
    n_total = int(round(duration * sample_rate))
    seg = n_total // 5
    fade = min(int(0.02 * sample_rate), seg // 4)
    out = np.zeros(n_total)
    ramp = np.linspace(0.0, 1.0, fade) if fade else np.zeros(0)
    for i, v in enumerate("aeiou"):
        start = i * seg
        n = seg + fade if i < 4 else n_total - start
        drift = f0 * (1.0 + 0.03 * rng.uniform(-1, 1))
        y = _voiced(v, n, drift, drift * (1.0 - 0.04), rng, sample_rate)
        y /= np.sqrt(np.mean(y * y)) + 1e-12
        if fade:
            if i > 0:
                y[:fade] *= ramp
            if i < 4:
                y[-fade:] *= ramp[::-1]
        out[start:start + n] += y[: n_total - start]
    return _normalize(_recording_highpass(out, sample_rate))


def speech_like(duration=42.0, seed=0, sample_rate=SAMPLE_RATE, f0=115.0):
    """Sentence-like babble: syllables of a fricative onset plus a voiced
    vowel with a falling pitch contour, separated by occasional pauses.

    Fricatives are noise high-passed at 2.5 kHz; the whole signal passes a
    70 Hz high-pass like a recorded microphone signal.
    """
    rng = np.random.default_rng(seed)
    n_total = int(round(duration * sample_rate))
    out = np.zeros(n_total)
    pos = int(0.1 * sample_rate)
    b_fric, a_fric = sps.butter(2, 2500.0 / (sample_rate / 2), btype="highpass")
    syll = 0
    while pos < n_total:
        if rng.random() < 0.6:
            nc = int(rng.uniform(0.03, 0.09) * sample_rate)
            burst = sps.lfilter(b_fric, a_fric, rng.standard_normal(nc))
            burst *= np.hanning(nc) * 0.5 / (np.std(burst) + 1e-12)
            end = min(pos + nc, n_total)
            out[pos:end] += burst[: end - pos]
            pos = end
        nv = int(rng.uniform(0.12, 0.3) * sample_rate)
        if pos + nv > n_total:
            nv = n_total - pos
        if nv > 64:
            base = f0 * 2.0 ** (rng.uniform(-0.25, 0.35))
            y = _voiced(rng.choice(list(VOWEL_FORMANTS)), nv, base, base * rng.uniform(0.85, 1.05), rng, sample_rate)
            y /= np.sqrt(np.mean(y * y)) + 1e-12
            env = np.ones(nv)
            ra = min(int(0.02 * sample_rate), nv // 3)
            env[:ra] = np.linspace(0, 1, ra)
            env[-ra:] = np.linspace(1, 0, ra)
            out[pos:pos + nv] += y * env * rng.uniform(0.6, 1.0)
        pos += nv
        syll += 1
        if syll % int(rng.integers(3, 7)) == 0:
            pos += int(rng.uniform(0.1, 0.4) * sample_rate)
    return _normalize(_recording_highpass(out, sample_rate))


def synthetic_room_ir(length=1024, seed=0, sample_rate=SAMPLE_RATE, rt60=0.08, predelay=24):
    """Exponentially decaying noise impulse response with a direct path."""
    rng = np.random.default_rng(seed)
    n = np.arange(length)
    decay = np.exp(-6.9 * n / (rt60 * sample_rate))
    h = rng.standard_normal(length) * decay
    h[:predelay] = 0.0
    h[predelay] += 3.0 * np.max(np.abs(h))
    b, a = sps.butter(1, 80.0 / (sample_rate / 2.0), btype="highpass")
    h = sps.lfilter(b, a, h)
    return h / np.linalg.norm(h)


def generate_signal(kind, duration, seed=0, sample_rate=SAMPLE_RATE, freq=1000.0):
    """Deterministic synthetic signal peak-normalized to -3 dBFS.

    ``kind``: ``white_noise``, ``sine`` (at ``freq``), ``sweep`` (50 Hz to
    ``f_a/2 - 500``), ``vowel_sequence`` or ``speech_like``.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    rng = np.random.default_rng(seed)
    if kind == "white_noise":
        x = rng.standard_normal(n)
    elif kind == "sine":
        x = np.sin(2.0 * np.pi * freq * t)
    elif kind == "sweep":
        x = sps.chirp(t, 50.0, duration, sample_rate / 2.0 - 500.0, method="logarithmic")
    elif kind == "vowel_sequence":
        x = vowel_sequence(duration, seed, sample_rate)
    elif kind == "speech_like":
        x = speech_like(duration, seed, sample_rate)
    else:
        raise ConfigurationError(f"unknown signal kind {kind!r}")
    return AudioBuffer(_normalize(x), sample_rate)
