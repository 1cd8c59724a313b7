"""Mono PCM audio ingestion and frame extraction.

Recordings are 16-bit mono 44.1 kHz WAV files. Frames are fixed-length
windows cut around a center sample and volume-normalized to unit L2 norm.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import AudioFormatError, AudioParseError

SAMPLE_RATE = 44100


@dataclass(frozen=True)
class FrameGeometry:
    """Frame layout: total length, analysis receptive field, region stride."""

    frame_len: int = 16384
    receptive_field: int = 4096
    stride: int = 512

    def __post_init__(self):
        if self.frame_len < self.receptive_field:
            raise ValueError("frame_len must be >= receptive_field")
        if (self.frame_len - self.receptive_field) % self.stride != 0:
            raise ValueError("stride must divide (frame_len - receptive_field)")

    @property
    def regions(self) -> int:
        # Offsets 0, stride, ..., frame_len - receptive_field inclusive; the
        # endpoint-inclusive count is quotient + 1 (25 for the defaults).
        return (self.frame_len - self.receptive_field) // self.stride + 1


@dataclass(frozen=True)
class Recording:
    """A mono 44.1 kHz recording with amplitudes in [-1, 1]."""

    id: str
    sample_rate: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(
                f"sample_rate: expected {SAMPLE_RATE}, got {self.sample_rate}"
            )
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise AudioFormatError(f"channels: expected mono, got shape {samples.shape}")
        if samples.size and (np.min(samples) < -1.0 or np.max(samples) > 1.0):
            raise AudioFormatError("amplitude: samples outside [-1, 1]")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def length(self) -> int:
        return int(self.samples.size)


@dataclass
class AudioFrame:
    """A frame_len-sample window with unit L2 norm (unless silent).

    norm_applied is the L2 norm divided out of the raw window; 0.0 marks an
    all-zero window that was returned unnormalized.
    """

    samples: np.ndarray
    source_id: str
    center_sample: int
    norm_applied: float

    @property
    def is_silent(self) -> bool:
        return self.norm_applied == 0.0


def region_offsets(geom: FrameGeometry) -> np.ndarray:
    """Start offsets of the analysis regions within a frame."""
    return np.arange(geom.regions) * geom.stride


def extract_frame(rec: Recording, center: int, geom: FrameGeometry) -> AudioFrame:
    """Cut the frame covering [center - frame_len/2, center + frame_len/2).

    Positions outside the recording read as zero. The result is divided by
    its L2 norm; an all-zero window comes back unnormalized with
    norm_applied = 0.0 so callers can skip it.
    """
    if center < 0 or center > rec.length:
        raise ValueError(f"center {center} outside recording of length {rec.length}")
    half = geom.frame_len // 2
    start = center - half
    out = np.zeros(geom.frame_len, dtype=np.float64)
    lo = max(start, 0)
    hi = min(start + geom.frame_len, rec.length)
    if hi > lo:
        out[lo - start : hi - start] = rec.samples[lo:hi]
    norm = float(np.linalg.norm(out))
    if norm > 0.0:
        out /= norm
    return AudioFrame(out, rec.id, center, norm)


# -- WAV container ------------------------------------------------------------

_PCM_SCALE = 32768.0


def load_wav(path, rec_id: str | None = None) -> Recording:
    """Read a RIFF/WAVE file; only PCM 16-bit mono 44.1 kHz is accepted."""
    with open(path, "rb") as fh:
        data = fh.read()

    def need(offset: int, n: int) -> bytes:
        if offset + n > len(data):
            raise AudioParseError("truncated WAV file", len(data))
        return data[offset : offset + n]

    if need(0, 4) != b"RIFF":
        raise AudioFormatError("container: not a RIFF file")
    if need(8, 4) != b"WAVE":
        raise AudioFormatError("container: RIFF file is not WAVE")

    fmt = None
    payload = None
    pos = 12
    while pos < len(data):
        chunk_id = need(pos, 4)
        (chunk_size,) = struct.unpack("<I", need(pos + 4, 4))
        body = need(pos + 8, chunk_size)
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise AudioParseError("fmt chunk too short", pos + 8)
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            payload = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None:
        raise AudioParseError("missing fmt chunk", len(data))
    if payload is None:
        raise AudioParseError("missing data chunk", len(data))

    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise AudioFormatError(f"encoding: expected PCM (1), got format tag {audio_format}")
    if channels != 1:
        raise AudioFormatError(f"channels: expected mono, got {channels}")
    if rate != SAMPLE_RATE:
        raise AudioFormatError(f"sample_rate: expected {SAMPLE_RATE}, got {rate}")
    if bits != 16:
        raise AudioFormatError(f"bit_depth: expected 16, got {bits}")

    ints = np.frombuffer(payload[: len(payload) - (len(payload) % 2)], dtype="<i2")
    samples = ints.astype(np.float64) / _PCM_SCALE
    if rec_id is None:
        rec_id = _stem(path)
    return Recording(id=rec_id, sample_rate=rate, samples=samples)


def write_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write floats in [-1, 1] as a PCM 16-bit mono WAV file."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    ints = np.round(x * 32767.0).astype("<i2")
    payload = ints.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16
    )
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload)


def _stem(path) -> str:
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0]
