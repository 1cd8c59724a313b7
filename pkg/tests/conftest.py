import numpy as np
import pytest

from notebank.audio import FrameGeometry, Recording
from notebank.filterbank import FilterbankSpec


@pytest.fixture
def small_geom() -> FrameGeometry:
    """Tiny frame layout for gradient checks: 4 regions of 128 samples."""
    return FrameGeometry(frame_len=512, receptive_field=128, stride=128)


@pytest.fixture
def small_fb(small_geom) -> FilterbankSpec:
    return FilterbankSpec(
        n_filters=16, f_min=100.0, f_max=5000.0,
        receptive_field=small_geom.receptive_field,
    )


@pytest.fixture
def default_geom() -> FrameGeometry:
    return FrameGeometry()


def make_recording(samples, rec_id="rec") -> Recording:
    return Recording(id=rec_id, sample_rate=44100, samples=np.asarray(samples, dtype=np.float64))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
