"""Experiment files: INI sections read with :mod:`configparser`.

Schema (every key optional unless noted)::

    [experiment]
    name = demo
    duration = 42            ; seconds
    seed = 0
    coupling_db = -10
    gains_db = 0, 6, 12, 30  ; final loop gains
    sets = 1, 6, 9           ; parameter sets 1..11
    filter = kalman          ; kalman | flms
    out_dir = out
    workers = 1

    [signals]                ; id = WAV path or gen:<kind>[:seed]   (required)
    m1 = speech/m1.wav
    f1 = gen:speech_like:3

    [groups]                 ; signal id = cluster label (default: signal id)
    m1 = male

    [impulse_responses]      ; id = WAV/text path or gen:room[:seed]  (required)
    room = gen:room:0

    [ir_options]
    highpass_hz =            ; optional first-order high-pass on loaded IRs

    [schedule]
    ramp_s =                 ; empty: rise at 2 dB/s
    start_below_db = 20      ; start never above -10 dB loop gain

    [kalman]                 ; KalmanConfig fields
    [flms]                   ; FlmsConfig fields besides filter_length (default 1024)
    [phase_synth]            ; explicit program, replaces `sets` (see config_from_mapping)

Relative paths are resolved against the directory of the file.
"""

import configparser
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adaptive import FlmsConfig, KalmanConfig
from .errors import ConfigurationError
from .phase_synth import config_from_mapping, parameter_set
from .signals import SAMPLE_RATE, generate_signal, load_impulse_response, load_wav, synthetic_room_ir

__all__ = ["ExperimentConfig", "RunSpec", "load_config", "parse_config", "load_source", "load_ir"]

_GEN_KINDS = ("white_noise", "sine", "sweep", "vowel_sequence", "speech_like")


def _floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


@dataclass(frozen=True)
class RunSpec:
    """One closed-loop run of a batch: a single (signal, IR, gain, set) cell."""

    signal_id: str
    signal_source: str
    group: str
    ir_id: str
    ir_source: str
    gain_db: float
    set_id: object  # int, or "custom" for an explicit [phase_synth] program
    duration: float = 42.0
    coupling_db: float = -10.0
    seed: int = 0
    filter: str = "kalman"
    filter_options: tuple = ()
    phase_options: tuple = ()
    ramp_s: float = None
    start_below_db: float = 20.0
    highpass_hz: float = None

    @property
    def run_id(self):
        g = "off" if not np.isfinite(self.gain_db) else f"{self.gain_db:g}dB"
        return f"{self.signal_id}__{self.ir_id}__set{self.set_id}__{g}"

    def phase_config(self):
        if self.set_id == "custom":
            return config_from_mapping(dict(self.phase_options))
        return parameter_set(int(self.set_id))

    def filter_config(self):
        opts = dict(self.filter_options)
        if self.filter == "kalman":
            return KalmanConfig(**opts)
        if self.filter == "flms":
            return FlmsConfig(**{"filter_length": 1024, **opts})
        raise ConfigurationError(f"unknown adaptive filter {self.filter!r}")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    signals: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)
    impulse_responses: dict = field(default_factory=dict)
    gains_db: list = field(default_factory=lambda: [0.0])
    sets: list = field(default_factory=lambda: [1])
    duration: float = 42.0
    coupling_db: float = -10.0
    seed: int = 0
    filter: str = "kalman"
    filter_options: dict = field(default_factory=dict)
    phase_options: dict = field(default_factory=dict)
    ramp_s: float = None
    start_below_db: float = 20.0
    highpass_hz: float = None
    out_dir: str = "out"
    workers: int = 1

    def validate(self):
        if not self.signals:
            raise ConfigurationError("no signals configured")
        if not self.impulse_responses:
            raise ConfigurationError("no impulse responses configured")
        for sid in self.sets:
            if sid != "custom" and not 1 <= int(sid) <= 11:
                raise ConfigurationError(f"parameter set {sid} outside 1..11")
        if not self.duration > 0:
            raise ConfigurationError("duration must be positive")
        if not self.coupling_db < 0:
            raise ConfigurationError("coupling_db must be negative")
        if self.filter not in ("kalman", "flms"):
            raise ConfigurationError(f"unknown adaptive filter {self.filter!r}")
        for src in list(self.signals.values()) + list(self.impulse_responses.values()):
            if not src.startswith("gen:") and not Path(src).is_file():
                raise ConfigurationError(f"referenced file does not exist: {src}")
        # build once so bad keys fail before any run starts
        if self.phase_options:
            config_from_mapping(self.phase_options)
        RunSpec("", "", "", "", "", 0.0, 1, filter=self.filter,
                filter_options=tuple(self.filter_options.items())).filter_config()
        return self

    def runs(self):
        """Cartesian product signals x IRs x gains x sets, in a stable order."""
        sets = ["custom"] if self.phase_options else list(self.sets)
        out = []
        for (sig, src), (ir, irsrc), g, s in itertools.product(
            self.signals.items(), self.impulse_responses.items(), self.gains_db, sets
        ):
            out.append(RunSpec(
                signal_id=sig, signal_source=src, group=self.groups.get(sig, sig),
                ir_id=ir, ir_source=irsrc, gain_db=float(g), set_id=s,
                duration=self.duration, coupling_db=self.coupling_db, seed=self.seed,
                filter=self.filter, filter_options=tuple(sorted(self.filter_options.items())),
                phase_options=tuple(sorted(self.phase_options.items())),
                ramp_s=self.ramp_s, start_below_db=self.start_below_db, highpass_hz=self.highpass_hz,
            ))
        return out


def _num(v):
    try:
        return int(v)
    except ValueError:
        return float(v)


def parse_config(text, base_dir="."):
    """Parse experiment-file text; paths are resolved against ``base_dir``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep signal ids case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc
    base = Path(base_dir)

    def resolve(v):
        v = v.strip()
        return v if v.startswith("gen:") else str((base / v).resolve())

    cfg = ExperimentConfig()
    if cp.has_section("experiment"):
        ex = cp["experiment"]
        try:
            cfg.name = ex.get("name", cfg.name)
            cfg.duration = ex.getfloat("duration", cfg.duration)
            cfg.seed = ex.getint("seed", cfg.seed)
            cfg.coupling_db = ex.getfloat("coupling_db", cfg.coupling_db)
            if "gains_db" in ex:
                cfg.gains_db = _floats(ex["gains_db"])
            if "sets" in ex:
                cfg.sets = _ints(ex["sets"])
            cfg.filter = ex.get("filter", cfg.filter).strip().lower()
            cfg.out_dir = str((base / ex.get("out_dir", cfg.out_dir)).resolve())
            cfg.workers = ex.getint("workers", cfg.workers)
        except ValueError as exc:
            raise ConfigurationError(f"[experiment]: {exc}") from exc
    for section, target in (("signals", cfg.signals), ("impulse_responses", cfg.impulse_responses)):
        if cp.has_section(section):
            target.update({k: resolve(v) for k, v in cp[section].items()})
    if cp.has_section("groups"):
        cfg.groups.update(dict(cp["groups"]))
    if cp.has_section("ir_options") and cp["ir_options"].get("highpass_hz", "").strip():
        cfg.highpass_hz = cp["ir_options"].getfloat("highpass_hz")
    if cp.has_section("schedule"):
        sc = cp["schedule"]
        try:
            if sc.get("ramp_s", "").strip():
                cfg.ramp_s = sc.getfloat("ramp_s")
            cfg.start_below_db = sc.getfloat("start_below_db", cfg.start_below_db)
        except ValueError as exc:
            raise ConfigurationError(f"[schedule]: {exc}") from exc
    if cp.has_section(cfg.filter):
        try:
            cfg.filter_options = {k: _num(v) for k, v in cp[cfg.filter].items()}
        except ValueError as exc:
            raise ConfigurationError(f"[{cfg.filter}]: {exc}") from exc
    if cp.has_section("phase_synth"):
        cfg.phase_options = dict(cp["phase_synth"])
    try:
        return cfg.validate()
    except TypeError as exc:
        raise ConfigurationError(f"bad filter option: {exc}") from exc


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config(path.read_text(), path.parent)


def load_source(source, duration, seed=0):
    """Near-end signal from a WAV path or a ``gen:<kind>[:seed]`` spec."""
    if source.startswith("gen:"):
        parts = source.split(":")
        kind = parts[1]
        if kind not in _GEN_KINDS:
            raise ConfigurationError(f"unknown generator {kind!r}")
        sd = int(parts[2]) if len(parts) > 2 else seed
        return generate_signal(kind, duration, sd).samples
    return load_wav(source, SAMPLE_RATE).samples


def load_ir(source, highpass_hz=None, seed=0):
    """Feedback path from a file or ``gen:room[:seed]``."""
    if source.startswith("gen:"):
        parts = source.split(":")
        if parts[1] != "room":
            raise ConfigurationError(f"unknown IR generator {parts[1]!r}")
        return synthetic_room_ir(1024, int(parts[2]) if len(parts) > 2 else seed)
    return load_impulse_response(source, highpass_hz)
