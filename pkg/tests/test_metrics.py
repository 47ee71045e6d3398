"""Prediction gain, Wiener oracle, system distance, trace aggregation, estimators."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasesynth.errors import NumericError
from phasesynth.metrics import (
    DistanceTrace,
    aggregate_trace,
    dominant_frequency,
    prediction_gain,
    system_distance,
    track_delay,
    wiener_bias_oracle,
)

from .conftest import delayed


class TestPredictionGain:
    def test_no_prediction(self, rng):
        s = rng.standard_normal(1000)
        assert prediction_gain(s, s).gain_db == pytest.approx(0.0)

    def test_ten_db(self, rng):
        s = rng.standard_normal(1000)
        assert prediction_gain(s, s * 10 ** -0.5).gain_db == pytest.approx(10.0)

    def test_perfect(self, rng):
        assert prediction_gain(rng.standard_normal(100), np.zeros(100)).gain_db == float("inf")

    def test_skip(self):
        s = np.ones(100)
        s[50:] = [1, -1] * 25
        e = s.copy()
        e[:50] = 0.0
        rep = prediction_gain(s, e, skip=50, delay=3, taps=8)
        assert rep.gain_db == pytest.approx(0.0)
        assert (rep.delay, rep.taps) == (3, 8)

    def test_errors(self):
        with pytest.raises(ValueError):
            prediction_gain(np.ones(10), np.ones(9))
        with pytest.raises(ValueError):
            prediction_gain(np.ones(10), np.ones(10), skip=10)


class TestWienerOracle:
    def test_matched_delay(self, rng):
        x = rng.standard_normal(50000)
        np.testing.assert_allclose(wiener_bias_oracle(x, delayed(x, 2), 4), [0, 0, 1, 0], atol=1e-2)

    def test_independent(self, rng):
        h = wiener_bias_oracle(rng.standard_normal(50000), rng.standard_normal(50000), 8)
        assert np.max(np.abs(h)) < 1e-2

    def test_known_system(self, rng):
        x = rng.standard_normal(50000)
        s = np.convolve(x, [0.5, -0.25])[:50000]
        np.testing.assert_allclose(wiener_bias_oracle(x, s, 4), [0.5, -0.25, 0, 0], atol=1e-2)

    def test_ill_conditioned(self, rng):
        with pytest.raises(NumericError, match="cond"):
            wiener_bias_oracle(np.zeros(20000), rng.standard_normal(20000), 8)

    def test_limits(self, rng):
        with pytest.raises(ValueError):
            wiener_bias_oracle(rng.standard_normal(100), rng.standard_normal(100), 4)
        with pytest.raises(ValueError):
            wiener_bias_oracle(np.ones(10000), np.ones(10000), 65)


class TestSystemDistance:
    def test_values(self, rng):
        h = rng.standard_normal(64)
        assert system_distance(h, h) == 0.0
        assert system_distance(h, np.zeros(64)) == pytest.approx(1.0)
        assert system_distance(h, 2 * h) == pytest.approx(1.0)

    def test_padding_and_db(self):
        assert system_distance([1.0, 0.0], [1.0, 0.0, 0.1], db=True) == pytest.approx(-20.0)

    def test_zero_reference(self):
        with pytest.raises(ValueError):
            system_distance(np.zeros(4), np.ones(4))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=20), st.floats(0.01, 100))
    def test_scale_invariant(self, h, c):
        h = np.asarray(h)
        if np.linalg.norm(h) < 1e-3:
            return
        g = h + 0.1
        assert system_distance(c * h, c * g) == pytest.approx(system_distance(h, g), rel=1e-9)


class TestAggregation:
    def _trace(self, fn, seconds=42.0):
        values = np.array([fn(t) for t in np.arange(1, int(seconds * 62.5) + 1) * 256 / 16000])
        return DistanceTrace.from_blocks(values, 256, 16000)

    def test_constant(self):
        assert aggregate_trace(self._trace(lambda t: 0.5)) == (0.5, 0.5)

    def test_piecewise(self):
        assert aggregate_trace(self._trace(lambda t: 1.0 if t < 10 else 0.1)) == (1.0, 0.1)

    def test_short_run(self):
        early, late = aggregate_trace(self._trace(lambda t: 0.3, 15.0))
        assert early == 0.3 and late is None

    def test_time_base(self):
        tr = DistanceTrace.from_blocks(np.ones(3), 256, 16000)
        np.testing.assert_allclose(tr.times, [0.016, 0.032, 0.048])
        assert np.all(tr.db == 0)


class TestEstimators:
    def test_sine_frequency(self):
        t = np.arange(16000) / 16000
        est = dominant_frequency(np.sin(2 * np.pi * 2000 * t), 16000)
        assert est.confident and est.hz == pytest.approx(2000.0, abs=0.1)

    def test_dc_not_confident(self):
        assert not dominant_frequency(np.ones(16000), 16000).confident

    def test_broadband_not_confident(self, rng):
        assert not dominant_frequency(rng.standard_normal(16000), 16000).confident

    def test_short_window(self):
        with pytest.raises(ValueError):
            dominant_frequency(np.ones(16000), 16000, window=0.2)

    def test_constant_delay(self, rng):
        x = rng.standard_normal(8000)
        times, lags = track_delay(x, delayed(x, 7), 16000)
        assert len(times) > 10
        # parabolic refinement of an integer peak leaves a small bias
        np.testing.assert_allclose(lags, 7.0, atol=0.01)
