"""Per-bin phase modification: frequency shift, phase modulation, vibrato.

Every component adds a phase increment ``phi_add(n, l)`` to bin ``n`` of frame
``l``; magnitudes are never touched. Contributions of all enabled components
are summed and wrapped once into ``[-pi, pi)``.

Profiles (per-bin amplitudes) are built from values anchored at the center
frequencies of 312.5 Hz wide subbands and linearly interpolated in between,
matching the subband layout of the classic parameter sets 1-11.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import ConfigurationError
from .filterbank import FilterBankConfig, SpectralFrame

__all__ = [
    "SUBBAND_WIDTH_HZ",
    "ShiftSpec",
    "ModulationSpec",
    "VibratoSpec",
    "PhaseSynthConfig",
    "PhaseSynthesizer",
    "wrap_phase",
    "shift_phase_increment",
    "modulation_phase_increment",
    "vibrato_phase_increment",
    "build_profile",
    "vibrato_profile",
    "phase_increment",
    "apply",
    "parameter_set",
    "config_from_mapping",
]

SUBBAND_WIDTH_HZ = 312.5
TWO_PI = 2.0 * np.pi

# Vibrato sets 5)..11): (peak in units of pi at f_a/2, modulation Hz)
_VIBRATO_SETS = {
    5: (8.0, 1.0),
    6: (16.0, 1.0),
    7: (16.0, 2.0),
    8: (16.0, 3.0),
    9: (32.0, 1.0),
    10: (32.0, 2.0),
    11: (32.0, 3.0),
}
# Set 3): phase-modulation amplitudes in units of pi for subbands 0-3, 4, 5, 6, >=7
_SET3_AMPLITUDES = [(0, 0.11), (1, 0.11), (2, 0.11), (3, 0.11), (4, 0.22), (5, 0.39), (6, 0.5), (7, 1.0)]
_SET2_SHIFTS = [(0, 0.0), (1, 0.0), (2, 0.0), (3, 0.0), (4, 10.0)]


def wrap_phase(phi):
    """Map phase(s) into ``[-pi, pi)``."""
    w = np.mod(np.asarray(phi, dtype=np.float64) + np.pi, TWO_PI) - np.pi
    # mod can round up to exactly 2*pi for tiny negative inputs
    w = np.where(w >= np.pi, w - TWO_PI, w)
    return w if w.ndim else float(w)


def _cycles(freq_hz, index, cfg):
    """Fractional cycle count ``f * L * l / f_a`` reduced mod 1 (keeps precision for large l)."""
    return np.mod(np.asarray(freq_hz, dtype=np.float64) * cfg.frame_shift * index / cfg.sample_rate, 1.0)


# ---------------------------------------------------------------------------
# component specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShiftSpec:
    """Frequency shift in Hz, scalar or one value per bin."""

    shift_hz: object = 0.0

    def profile(self, cfg):
        return np.broadcast_to(np.asarray(self.shift_hz, dtype=np.float64), (cfg.n_bins,))


@dataclass(frozen=True)
class ModulationSpec:
    """Periodic phase modulation ``a(n) * w(2 pi f_p L l / f_a)``.

    ``waveform`` is ``"sine"``, ``"table"`` (one period of a user waveform in
    ``table``) or ``"noise"`` (low-pass filtered noise with cutoff ``mod_freq``,
    drawn from ``seed``).
    """

    amplitude: object
    mod_freq: float
    waveform: str = "sine"
    table: tuple = None
    seed: int = 0

    def __post_init__(self):
        if self.waveform not in ("sine", "table", "noise"):
            raise ConfigurationError(f"unknown waveform {self.waveform!r}")
        if not self.mod_freq > 0:
            raise ConfigurationError("mod_freq must be positive")
        if self.waveform == "table" and (self.table is None or len(self.table) < 2):
            raise ConfigurationError("table waveform needs at least two samples")
        if np.any(np.asarray(self.amplitude) < 0):
            raise ConfigurationError("modulation amplitude must be non-negative")

    def profile(self, cfg):
        return np.broadcast_to(np.asarray(self.amplitude, dtype=np.float64), (cfg.n_bins,))

    def periodic_value(self, index, cfg):
        frac = _cycles(self.mod_freq, index, cfg)
        if self.waveform == "sine":
            return float(np.sin(TWO_PI * frac))
        table = np.asarray(self.table, dtype=np.float64)
        pos = frac * len(table)
        i0 = int(pos) % len(table)
        t = pos - int(pos)
        return float((1.0 - t) * table[i0] + t * table[(i0 + 1) % len(table)])


@dataclass(frozen=True)
class VibratoSpec:
    """Variable delay line of peak ``max_delay`` samples at rate ``mod_freq``.

    ``profile`` is the per-bin peak phase; ``None`` means the full-band linear
    ramp ``(2n/N) * k_s * pi``.
    """

    max_delay: float
    mod_freq: float
    profile_rad: tuple = None

    def __post_init__(self):
        if not np.isfinite(self.max_delay):
            raise ConfigurationError("max_delay must be finite")
        if not self.mod_freq > 0:
            raise ConfigurationError("mod_freq must be positive")

    def profile(self, cfg):
        if self.profile_rad is None:
            return vibrato_profile(self.max_delay, cfg)
        return np.asarray(self.profile_rad, dtype=np.float64)


@dataclass(frozen=True)
class PhaseSynthConfig:
    shift: ShiftSpec = None
    modulation: ModulationSpec = None
    vibrato: VibratoSpec = None
    fb_config: FilterBankConfig = field(default_factory=FilterBankConfig)
    set_id: int = None

    @property
    def bypass(self):
        return self.shift is None and self.modulation is None and self.vibrato is None

    def describe(self):
        parts = []
        if self.shift is not None:
            parts.append("shift")
        if self.modulation is not None:
            parts.append(f"modulation {self.modulation.mod_freq:g} Hz")
        if self.vibrato is not None:
            parts.append(f"vibrato k_s={self.vibrato.max_delay:g} at {self.vibrato.mod_freq:g} Hz")
        return ", ".join(parts) or "bypass"


# ---------------------------------------------------------------------------
# single-component increments
# ---------------------------------------------------------------------------


def shift_phase_increment(shift_hz, index, cfg):
    """``2 pi (f_s / f_a) L l`` wrapped to ``[-pi, pi)``; ``shift_hz`` may be per-bin."""
    return wrap_phase(TWO_PI * _cycles(shift_hz, index, cfg))


def modulation_phase_increment(spec, n, index, cfg, waveform_value=None):
    if n > cfg.dft_size // 2:
        raise ValueError(f"bin {n} beyond N/2")
    if waveform_value is None:
        waveform_value = spec.periodic_value(index, cfg)
    return wrap_phase(spec.profile(cfg)[n] * waveform_value)


def vibrato_phase_increment(spec, n, index, cfg):
    """Unwrapped ``-(peak phase at n) * sin(2 pi f_p L l / f_a)``."""
    if n > cfg.dft_size // 2:
        raise ValueError(f"bin {n} beyond N/2")
    return float(-spec.profile(cfg)[n] * np.sin(TWO_PI * _cycles(spec.mod_freq, index, cfg)))


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


def build_profile(anchors, cfg, nyquist_value=None):
    """Per-bin profile from ``(subband, value)`` anchors.

    Subband ``s`` is centered at ``s * 312.5`` Hz. Values are linearly
    interpolated between anchor centers and held constant outside them,
    unless ``nyquist_value`` pins the value at ``f_a / 2``.
    """
    nyq = cfg.sample_rate / 2.0
    anchors = sorted(anchors)
    if not anchors and nyquist_value is None:
        return np.zeros(cfg.n_bins)
    freqs = [s * SUBBAND_WIDTH_HZ for s, _ in anchors]
    values = [float(v) for _, v in anchors]
    if any(f > nyq for f in freqs):
        raise ConfigurationError(f"anchor beyond f_a/2 = {nyq} Hz")
    if any(f < 0 for f in freqs):
        raise ConfigurationError("negative subband index")
    if nyquist_value is not None:
        if freqs and freqs[-1] == nyq:
            values[-1] = float(nyquist_value)
        else:
            freqs.append(nyq)
            values.append(float(nyquist_value))
    return np.interp(cfg.bin_frequencies(), freqs, values)


def vibrato_profile(max_delay, cfg, onset_hz=0.0):
    """Peak phase per bin for a delay of ``max_delay`` samples.

    With ``onset_hz == 0`` this is ``(2n/N) k_s pi``; otherwise the ramp
    starts at zero at ``onset_hz`` and reaches ``k_s pi`` at ``f_a / 2``.
    """
    peak = max_delay * np.pi
    if onset_hz <= 0:
        return 2.0 * np.arange(cfg.n_bins) / cfg.dft_size * peak
    nyq = cfg.sample_rate / 2.0
    return np.interp(cfg.bin_frequencies(), [onset_hz, nyq], [0.0, peak])


# ---------------------------------------------------------------------------
# combination
# ---------------------------------------------------------------------------


def phase_increment(config, index, modulation_value=None):
    """Total wrapped per-bin increment for frame ``index``."""
    cfg = config.fb_config
    total = np.zeros(cfg.n_bins)
    if config.shift is not None:
        total += TWO_PI * _cycles(config.shift.profile(cfg), index, cfg)
    if config.modulation is not None:
        if modulation_value is None:
            if config.modulation.waveform == "noise":
                raise ValueError("noise modulation needs a PhaseSynthesizer stream")
            modulation_value = config.modulation.periodic_value(index, cfg)
        total += config.modulation.profile(cfg) * modulation_value
    if config.vibrato is not None:
        total -= config.vibrato.profile(cfg) * np.sin(TWO_PI * _cycles(config.vibrato.mod_freq, index, cfg))
    return wrap_phase(total)


def apply(frame, config, index=None, modulation_value=None):
    """Rotate every bin of ``frame`` by the configured phase increment."""
    cfg = config.fb_config
    if frame.bins.shape[0] != cfg.n_bins:
        raise ValueError(
            f"frame has {frame.bins.shape[0]} bins, config expects {cfg.n_bins}"
        )
    if config.bypass:
        return frame.with_bins(frame.bins.copy())
    index = frame.index if index is None else index
    phi = phase_increment(config, index, modulation_value)
    return frame.with_bins(frame.bins * np.exp(1j * phi))


class _NoiseWaveform:
    """Low-pass filtered white noise, generated lazily per frame.

    The frame rate is ``f_a / L``; a first-order Butterworth at ``mod_freq``
    shapes unit-variance noise. Scaled so the first chunk peaks at 1 and
    clipped to ``[-1, 1]`` afterwards.
    """

    chunk = 4096

    def __init__(self, mod_freq, cfg, seed):
        frame_rate = cfg.sample_rate / cfg.frame_shift
        cutoff = min(mod_freq / (frame_rate / 2.0), 0.99)
        self._b, self._a = sps.butter(1, cutoff)
        self._zi = np.zeros(1)
        self._rng = np.random.default_rng(seed)
        self._values = np.zeros(0)
        self._scale = None

    def __call__(self, index):
        while index >= self._values.shape[0]:
            raw, self._zi = sps.lfilter(self._b, self._a, self._rng.standard_normal(self.chunk), zi=self._zi)
            if self._scale is None:
                self._scale = 1.0 / np.max(np.abs(raw))
            self._values = np.concatenate((self._values, np.clip(raw * self._scale, -1.0, 1.0)))
        return float(self._values[index])


class PhaseSynthesizer:
    """Streaming phase synthesizer: a filter-bank transform with its own state.

    Only the noise waveform carries state; everything else is a pure function of
    the frame index.
    """

    def __init__(self, config):
        self.config = config
        mod = config.modulation
        self._noise = None
        if mod is not None and mod.waveform == "noise":
            self._noise = _NoiseWaveform(mod.mod_freq, config.fb_config, mod.seed)

    def __call__(self, frame):
        value = self._noise(frame.index) if self._noise is not None else None
        return apply(frame, self.config, frame.index, value)

    def process(self, signal):
        from .filterbank import process_stream

        return process_stream(signal, self, self.config.fb_config)


# ---------------------------------------------------------------------------
# parameter sets 1..11
# ---------------------------------------------------------------------------


def _zero_low_subbands():
    return [(0, 0.0), (1, 0.0), (2, 0.0), (3, 0.0)]


def parameter_set(set_id, cfg=None):
    """Classic parameter sets: 1 bypass, 2 shift, 3 phase modulation, 4 both, 5-11 vibrato."""
    cfg = cfg or FilterBankConfig()
    if set_id == 1:
        return PhaseSynthConfig(fb_config=cfg, set_id=1)
    if set_id in (2, 3, 4):
        shift = mod = None
        if set_id in (2, 4):
            shift = ShiftSpec(build_profile(_SET2_SHIFTS, cfg))
        if set_id in (3, 4):
            amps = [(s, v * np.pi) for s, v in _SET3_AMPLITUDES]
            mod = ModulationSpec(build_profile(amps, cfg), mod_freq=10.0)
        return PhaseSynthConfig(shift=shift, modulation=mod, fb_config=cfg, set_id=set_id)
    if set_id in _VIBRATO_SETS:
        peak_pi, fp = _VIBRATO_SETS[set_id]
        prof = build_profile(_zero_low_subbands(), cfg, nyquist_value=peak_pi * np.pi)
        vib = VibratoSpec(max_delay=peak_pi, mod_freq=fp, profile_rad=tuple(prof))
        return PhaseSynthConfig(vibrato=vib, fb_config=cfg, set_id=set_id)
    raise ConfigurationError(f"unknown parameter set {set_id!r}; valid ids are 1..11")


def _parse_anchors(text):
    """``"0:0, 4:10"`` -> [(0, 0.0), (4, 10.0)]."""
    out = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        s, v = item.split(":")
        out.append((float(s), float(v)))
    return out


def config_from_mapping(mapping, cfg=None):
    """Build a config from flat string keys (as found in an experiment file).

    Recognized keys: ``set``; ``shift_hz`` or ``shift_anchors``;
    ``mod_anchors`` (units of pi), ``mod_freq``, ``mod_waveform``,
    ``mod_table``, ``mod_seed``; ``vibrato_delay``, ``vibrato_freq``,
    ``vibrato_onset_hz``.
    """
    cfg = cfg or FilterBankConfig()
    m = {k: v for k, v in mapping.items() if v not in (None, "")}
    if "set" in m:
        return parameter_set(int(m["set"]), cfg)
    shift = mod = vib = None
    if "shift_anchors" in m:
        shift = ShiftSpec(build_profile(_parse_anchors(m["shift_anchors"]), cfg))
    elif "shift_hz" in m:
        shift = ShiftSpec(float(m["shift_hz"]))
    if "mod_anchors" in m:
        amps = [(s, v * np.pi) for s, v in _parse_anchors(m["mod_anchors"])]
        table = None
        if "mod_table" in m:
            table = tuple(float(t) for t in str(m["mod_table"]).split(","))
        mod = ModulationSpec(
            build_profile(amps, cfg),
            mod_freq=float(m.get("mod_freq", 10.0)),
            waveform=m.get("mod_waveform", "sine"),
            table=table,
            seed=int(m.get("mod_seed", 0)),
        )
    if "vibrato_delay" in m:
        k_s = float(m["vibrato_delay"])
        onset = float(m.get("vibrato_onset_hz", 0.0))
        vib = VibratoSpec(k_s, float(m.get("vibrato_freq", 1.0)), tuple(vibrato_profile(k_s, cfg, onset)))
    return PhaseSynthConfig(shift=shift, modulation=mod, vibrato=vib, fb_config=cfg)
