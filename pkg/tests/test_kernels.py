"""Compiled kernels agree with their numpy fallbacks; the env flag selects the backend."""

import os
import subprocess
import sys

import numpy as np
import pytest

from phasesynth import kernels
from phasesynth._accel import HAVE_NUMBA

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


class TestAgreement:
    def test_fir_block_streaming(self, rng):
        h = rng.standard_normal(300)
        x = rng.standard_normal(256 * 6)
        ref = np.convolve(x, h)[: x.shape[0]]
        for impl in (kernels.fir_block_numpy, kernels.fir_block_numba):
            state = np.zeros(299)
            out = []
            for j in range(6):
                y, state = impl(h, state, x[j * 256:(j + 1) * 256])
                out.append(y)
            assert np.max(np.abs(np.concatenate(out) - ref)) < 1e-11

    def test_lagged_xcorr(self, rng):
        a, b = rng.standard_normal(4000), rng.standard_normal(4000)
        np.testing.assert_allclose(kernels.lagged_xcorr_numba(a, b, 100, 512, 40),
                                   kernels.lagged_xcorr_numpy(a, b, 100, 512, 40), atol=1e-10)

    def test_correlation_lags(self, rng):
        x, s = rng.standard_normal(5000), rng.standard_normal(5000)
        for u, v in zip(kernels.correlation_lags_numba(x, s, 12), kernels.correlation_lags_numpy(x, s, 12)):
            np.testing.assert_allclose(u, v, atol=1e-12)

    def test_frame_rms(self, rng):
        x = rng.standard_normal(1000)
        np.testing.assert_allclose(kernels.frame_rms_numba(x, 64), kernels.frame_rms_numpy(x, 64), atol=1e-14)

    @pytest.mark.parametrize("n", [8, 32])
    def test_flms_run(self, rng, n):
        s = np.convolve(rng.standard_normal(n * 400), [1.0, -0.5, 0.25])[: n * 400]
        x = np.concatenate(([0.0], s[:-1]))
        args = (x, s, n, 0.4, 0.99, 0.3, 4, 16.0, 1e-10, 200)
        for u, v in zip(kernels.flms_run_numba(*args), kernels.flms_run_numpy(*args)):
            np.testing.assert_allclose(u, v, atol=1e-9)


class TestBackendSwitch:
    def _backend(self, flag):
        env = dict(os.environ)
        env.pop("PHASESYNTH_DISABLE_NUMBA", None)
        if flag is not None:
            env["PHASESYNTH_DISABLE_NUMBA"] = flag
        code = "import phasesynth.kernels as k; print(k.fir_block.__name__)"
        return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                              check=True).stdout.strip()

    def test_default_uses_numba(self):
        assert self._backend(None) == "fir_block_numba"

    @pytest.mark.parametrize("flag", ["1", "true", "yes"])
    def test_flag_forces_numpy(self, flag):
        assert self._backend(flag) == "fir_block_numpy"

    def test_flag_off(self):
        assert self._backend("0") == "fir_block_numba"
