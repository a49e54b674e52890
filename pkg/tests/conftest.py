import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tone():
    """One second of a 1 kHz sine at 16 kHz."""
    from fftp.audio import Waveform

    t = np.arange(16000) / 16000
    return Waveform(0.5 * np.sin(2 * np.pi * 1000 * t), 16000)
