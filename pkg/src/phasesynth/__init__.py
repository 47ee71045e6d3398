"""Phase-synthesizer decorrelation for acoustic feedback cancellation.

Filter bank, per-bin phase effects, adaptive filters (FLMS and a
frequency-domain Kalman MDF), a closed-loop simulator and evaluation
measures. Hot loops are compiled with numba when available; set
``PHASESYNTH_DISABLE_NUMBA=1`` to force the pure numpy code paths.
"""

from ._accel import backend_name
from .adaptive import BiasSolution, Flms, FlmsConfig, KalmanConfig, KalmanMdf, flms_predictor
from .errors import ConfigurationError, NumericError
from .filterbank import FilterBank, FilterBankConfig, SpectralFrame, analyze, process_stream, synthesize
from .loop_sim import FeedbackPath, GainSchedule, LoopConfig, SimulationResult, run_afc
from .metrics import (
    DistanceTrace,
    PredictionReport,
    aggregate_trace,
    prediction_gain,
    system_distance,
    wiener_bias_oracle,
)
from .phase_synth import PhaseSynthConfig, PhaseSynthesizer, parameter_set
from .signals import SAMPLE_RATE, AudioBuffer, generate_signal, load_wav, write_wav

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend_name",
    "BiasSolution",
    "Flms",
    "FlmsConfig",
    "KalmanConfig",
    "KalmanMdf",
    "flms_predictor",
    "ConfigurationError",
    "NumericError",
    "FilterBank",
    "FilterBankConfig",
    "SpectralFrame",
    "analyze",
    "synthesize",
    "process_stream",
    "FeedbackPath",
    "GainSchedule",
    "LoopConfig",
    "SimulationResult",
    "run_afc",
    "DistanceTrace",
    "PredictionReport",
    "aggregate_trace",
    "prediction_gain",
    "system_distance",
    "wiener_bias_oracle",
    "PhaseSynthConfig",
    "PhaseSynthesizer",
    "parameter_set",
    "SAMPLE_RATE",
    "AudioBuffer",
    "generate_signal",
    "load_wav",
    "write_wav",
]
