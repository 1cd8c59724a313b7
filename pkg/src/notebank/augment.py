"""Label-preserving pitch-shift augmentation.

A frame is resampled around its center by the rate 2^(s/12), which raises
the pitch by s semitones for positive s. The integral part of the shift
moves the label vector by the same number of MIDI notes; the small
continuous part models tuning variation and leaves labels alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioFrame, FrameGeometry, Recording

INTEGRAL_RANGE = 5
CONTINUOUS_RANGE = 0.1


@dataclass(frozen=True)
class ShiftSpec:
    integral: int = 0
    continuous: float = 0.0

    def __post_init__(self):
        if not -INTEGRAL_RANGE <= self.integral <= INTEGRAL_RANGE:
            raise ValueError(f"integral shift {self.integral} outside [-5, 5]")
        if not -CONTINUOUS_RANGE <= self.continuous <= CONTINUOUS_RANGE:
            raise ValueError(f"continuous shift {self.continuous} outside [-0.1, 0.1]")

    @property
    def rate(self) -> float:
        """Source read rate 2^(s/12); > 1 reads faster and raises pitch."""
        return float(2.0 ** ((self.integral + self.continuous) / 12.0))


def random_shift(rng: np.random.Generator) -> ShiftSpec:
    """Integral uniform on {-5..5}, continuous uniform on [-0.1, 0.1]."""
    integral = int(rng.integers(-INTEGRAL_RANGE, INTEGRAL_RANGE + 1))
    continuous = float(rng.uniform(-CONTINUOUS_RANGE, CONTINUOUS_RANGE))
    return ShiftSpec(integral, continuous)


def pitch_shift(
    rec: Recording, center: int, geom: FrameGeometry, shift: ShiftSpec
) -> AudioFrame:
    """Extract a frame resampled at the shift rate, anchored on its midpoint.

    Output sample n reads the source at center + (n - frame_len/2) * rate by
    linear interpolation, so the frame midpoint stays on the label time.
    Positions outside the recording read as zero; a zero rate shift
    reproduces the plain extracted frame exactly. The frame is then
    volume-normalized as usual (all-zero frames flagged, not normalized).
    """
    r = shift.rate
    half = geom.frame_len // 2
    n = np.arange(geom.frame_len, dtype=np.float64)
    pos = center + (n - half) * r
    idx = np.floor(pos).astype(np.int64)
    frac = pos - idx

    length = rec.length
    lo_ok = (idx >= 0) & (idx < length)
    hi_ok = (idx + 1 >= 0) & (idx + 1 < length)
    a = np.where(lo_ok, rec.samples[np.clip(idx, 0, length - 1)], 0.0)
    b = np.where(hi_ok, rec.samples[np.clip(idx + 1, 0, length - 1)], 0.0)
    out = (1.0 - frac) * a + frac * b

    norm = float(np.linalg.norm(out))
    if norm > 0.0:
        out /= norm
    return AudioFrame(out, rec.id, center, norm)


def shift_labels(y: np.ndarray, integral: int) -> np.ndarray:
    """Move label bits up by `integral` notes; bits shifted off [0,127] drop."""
    out = np.zeros_like(y)
    if integral >= 0:
        out[integral:] = y[: y.size - integral]
    else:
        out[:integral] = y[-integral:]
    return out
