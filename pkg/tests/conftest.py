import numpy as np
import pytest

from phasesynth.filterbank import FilterBankConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fb():
    return FilterBankConfig(256, 128, 16000.0)


def delayed(x, lag):
    """``x`` delayed by ``lag`` samples, same length."""
    out = np.zeros_like(x)
    out[lag:] = x[: x.shape[0] - lag]
    return out
