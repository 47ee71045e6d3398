"""Closed-loop acoustic feedback cancellation with a phase synthesizer.

Signal flow per block of ``B`` samples (``B`` = Kalman block size)::

    mic = s + h * x
    e   = mic - h_hat * x              (KalmanMdf)
    y   = phase_synth(e)               (own filter bank, N=256, L=128)
    x  <- delay_fifo(gain(t) * y)      (processing delay, >= B samples)

The loudspeaker block needed at the start of each iteration is already in
the FIFO, so the loop can advance a whole adaptive block at a time while the
synthesizer runs its two hops inside it.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .adaptive import Flms, FlmsConfig, KalmanConfig, KalmanMdf
from .errors import ConfigurationError, NumericError
from .filterbank import FilterBank, FilterBankConfig
from .metrics import DistanceTrace, aggregate_trace, system_distance
from .phase_synth import PhaseSynthConfig, PhaseSynthesizer, parameter_set
from .signals import SAMPLE_RATE

__all__ = [
    "FeedbackPath",
    "GainSchedule",
    "LoopConfig",
    "SimulationResult",
    "Verdict",
    "normalize_coupling",
    "evaluate_gain",
    "detect_instability",
    "make_filter",
    "run_afc",
]


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x)))) if len(x) else 0.0


@dataclass
class FeedbackPath:
    h: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64).reshape(-1)
        if self.h.shape[0] < 1 or not np.all(np.isfinite(self.h)):
            raise ConfigurationError("feedback path must be a finite, non-empty response")


def normalize_coupling(path, s, target_db=-10.0):
    """Scale ``path`` so that ``rms(h * s) / rms(s)`` equals ``target_db``."""
    h = path.h if isinstance(path, FeedbackPath) else np.asarray(path, dtype=np.float64)
    label = path.label if isinstance(path, FeedbackPath) else ""
    s = np.asarray(s, dtype=np.float64)
    rs = _rms(s)
    if rs == 0.0:
        raise ValueError("reference signal is silent")
    r = np.convolve(s, h)[: s.shape[0]]
    rr = _rms(r)
    if rr == 0.0:
        raise ValueError("feedback path produces no output for this signal")
    scale = 10.0 ** (target_db / 20.0) * rs / rr
    return FeedbackPath(h * scale, label)


@dataclass
class GainSchedule:
    """Loop gain in dB, piecewise linear between ``(time_s, gain_db)`` breakpoints.

    Held constant before the first and after the last breakpoint. ``-inf``
    means the loop is open.
    """

    breakpoints: list

    def __post_init__(self):
        if not self.breakpoints:
            raise ConfigurationError("gain schedule needs at least one breakpoint")
        times = [t for t, _ in self.breakpoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("breakpoint times must be strictly increasing")

    DEFAULT_RATE_DB_S = 2.0
    DEFAULT_START_BELOW_DB = 20.0
    DEFAULT_START_CAP_DB = -10.0

    @classmethod
    def ramp(cls, final_db, ramp_s=None, start_below_db=DEFAULT_START_BELOW_DB,
             start_cap_db=DEFAULT_START_CAP_DB, rate_db_s=DEFAULT_RATE_DB_S):
        """Linear-in-dB ramp up to ``final_db``, starting at t=0.

        The start level is ``final_db - start_below_db`` but never above
        ``start_cap_db``: a loop that starts with an unconverged canceller
        above about -10 dB howls at the peaks of the path response before
        adaptation can begin. The ramp lasts ``ramp_s`` seconds, or by
        default rises at ``rate_db_s``.
        """
        if not np.isfinite(final_db):
            return cls([(0.0, final_db)])
        start = min(final_db - start_below_db, start_cap_db)
        if ramp_s is None:
            ramp_s = (final_db - start) / rate_db_s
        if ramp_s <= 0 or start >= final_db:
            return cls([(0.0, final_db)])
        return cls([(0.0, start), (float(ramp_s), final_db)])

    @classmethod
    def constant(cls, gain_db):
        return cls([(0.0, gain_db)])

    @property
    def final_db(self):
        return self.breakpoints[-1][1]

    def loop_gain_db(self, t):
        times = np.array([p[0] for p in self.breakpoints], dtype=np.float64)
        gains = np.array([p[1] for p in self.breakpoints], dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        if np.all(np.isfinite(gains)):
            return np.interp(t, times, gains)
        # open-loop segments: interpolate only between finite neighbours
        out = np.interp(t, times, np.where(np.isfinite(gains), gains, 0.0))
        idx = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 1)
        nxt = np.clip(idx + 1, 0, len(times) - 1)
        dead = ~np.isfinite(gains[idx]) | ((t > times[idx]) & ~np.isfinite(gains[nxt]))
        return np.where(dead, -np.inf, out)


def evaluate_gain(schedule, t, coupling_db=-10.0):
    """Linear forward gain at time ``t``: loop gain minus coupling, in dB."""
    loop_db = schedule.loop_gain_db(t)
    with np.errstate(over="ignore"):
        g = np.where(np.isfinite(loop_db), 10.0 ** ((loop_db - coupling_db) / 20.0), 0.0)
    return g if g.ndim else float(g)


@dataclass
class Verdict:
    stable: bool
    failure_time: float = None

    def __str__(self):
        return "stable" if self.stable else f"unstable({self.failure_time:.2f}s)"


def detect_instability(x_window, reference_rms, margin_db=40.0):
    """Unstable if the window RMS exceeds ``reference_rms`` by ``margin_db`` or holds non-finite values."""
    if not reference_rms > 0:
        raise ValueError("reference_rms must be positive")
    x_window = np.asarray(x_window, dtype=np.float64)
    if not np.all(np.isfinite(x_window)):
        return Verdict(False)
    with np.errstate(over="ignore"):
        rms = _rms(x_window)
    if not np.isfinite(rms):
        return Verdict(False)
    return Verdict(rms <= reference_rms * 10.0 ** (margin_db / 20.0))


def make_filter(config):
    """Adaptive filter instance for a ``KalmanConfig`` or ``FlmsConfig``."""
    if isinstance(config, KalmanConfig):
        return KalmanMdf(config)
    if isinstance(config, FlmsConfig):
        return Flms(config)
    raise ConfigurationError(f"unsupported adaptive filter config {type(config).__name__}")


def _block_size(config):
    return config.block_size if isinstance(config, KalmanConfig) else config.filter_length


@dataclass
class LoopConfig:
    path: FeedbackPath
    coupling_db: float = -10.0
    phase_synth: PhaseSynthConfig = field(default_factory=lambda: parameter_set(1))
    adaptive: object = field(default_factory=KalmanConfig)
    schedule: GainSchedule = field(default_factory=lambda: GainSchedule.ramp(0.0))
    duration: float = 42.0
    processing_delay: int = None
    sample_rate: int = SAMPLE_RATE
    instability_margin_db: float = 40.0
    instability_window_s: float = 0.1
    normalize: bool = True

    def __post_init__(self):
        if not self.coupling_db < 0:
            raise ConfigurationError("coupling target must be below 0 dB")
        if not self.duration > 0:
            raise ConfigurationError("duration must be positive")
        block = _block_size(self.adaptive)
        if self.processing_delay is None:
            self.processing_delay = block
        if self.processing_delay < block:
            raise ConfigurationError(
                f"processing delay {self.processing_delay} shorter than the adaptive block {block}"
            )
        hop = self.phase_synth.fb_config.frame_shift
        if block % hop:
            raise ConfigurationError("adaptive block size must be a multiple of the synthesizer hop")


@dataclass
class SimulationResult:
    trace: DistanceTrace
    verdict: Verdict
    microphone: np.ndarray
    error: np.ndarray
    loudspeaker: np.ndarray
    output: np.ndarray
    path: np.ndarray
    estimate: np.ndarray
    sample_rate: int = SAMPLE_RATE

    @property
    def stable(self):
        return self.verdict.stable

    def early_late(self):
        return aggregate_trace(self.trace)

    def converged_segment(self, start_s=20.0):
        """Synthesizer output from ``start_s`` on, for external quality scoring."""
        i0 = int(start_s * self.sample_rate)
        return self.output[i0:] if i0 < self.output.shape[0] else self.output[:0]


def run_afc(config, s):
    """Run the closed loop on near-end signal ``s``; returns a :class:`SimulationResult`.

    An unstable run is not an error: it stops at the detection point and the
    verdict records the failure time.
    """
    fs = config.sample_rate
    s = np.asarray(s, dtype=np.float64)
    n_total = int(round(config.duration * fs))
    if s.shape[0] < n_total:
        raise ValueError(f"near-end signal has {s.shape[0]} samples, need {n_total}")
    s = s[:n_total]

    path = normalize_coupling(config.path, s, config.coupling_db) if config.normalize else config.path
    h0 = np.ascontiguousarray(path.h)

    kal = make_filter(config.adaptive)
    b = kal.block_size
    bank = FilterBank(config.phase_synth.fb_config)
    synth = PhaseSynthesizer(config.phase_synth)
    hop = bank.config.frame_shift

    n_blocks = n_total // b
    times = np.arange(n_blocks * b) / fs
    gains = evaluate_gain(config.schedule, times, config.coupling_db)
    g_max = float(np.max(gains)) if gains.size else 0.0
    ref_rms = _rms(s) * max(g_max, 1.0)
    win = int(round(config.instability_window_s * fs))

    fir_state = np.zeros(h0.shape[0] - 1)
    fifo = np.zeros(config.processing_delay)
    mic = np.zeros(n_blocks * b)
    err = np.zeros(n_blocks * b)
    spk = np.zeros(n_blocks * b)
    out = np.zeros(n_blocks * b)
    sd = np.zeros(n_blocks)
    verdict = Verdict(True)
    done = n_blocks

    for j in range(n_blocks):
        sl = slice(j * b, (j + 1) * b)
        x_b = fifo[:b]
        spk[sl] = x_b
        echo, fir_state = kernels.fir_block(h0, fir_state, x_b)
        mic[sl] = s[sl] + echo
        try:
            _, e_b = kal.block(x_b, mic[sl])
        except NumericError:
            verdict = Verdict(False, j * b / fs)
            done = j
            break
        err[sl] = e_b
        y = np.concatenate([bank.process_block(e_b[k:k + hop], synth) for k in range(0, b, hop)])
        out[sl] = y
        fifo = np.concatenate((fifo[b:], gains[sl] * y))
        sd[j] = system_distance(h0, kal.impulse_response())

        lo = max(0, (j + 1) * b - win)
        check = detect_instability(spk[lo:(j + 1) * b], ref_rms, config.instability_margin_db)
        if not check.stable or not np.isfinite(sd[j]):
            verdict = Verdict(False, (j + 1) * b / fs)
            done = j + 1
            break

    n_done = done * b
    trace = DistanceTrace.from_blocks(sd[:done], b, fs)
    return SimulationResult(
        trace=trace,
        verdict=verdict,
        microphone=mic[:n_done],
        error=err[:n_done],
        loudspeaker=spk[:n_done],
        output=out[:n_done],
        path=h0,
        estimate=kal.impulse_response(),
        sample_rate=fs,
    )
