"""Synthetic labeled corpus: random chord sequences of harmonic notes.

Each note is a sum of harmonic partials at f = 440 * 2^((n-69)/12) Hz with
geometrically decaying partial amplitudes, so every event comes with an
exact label. Stands in for real annotated recordings in tests and
desk-scale experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import SAMPLE_RATE, Recording
from .dataset import DatasetSplit, NoteEvent


def midi_to_hz(note: float) -> float:
    """Fundamental frequency of a MIDI note number (A4 = 69 = 440 Hz)."""
    return 440.0 * 2.0 ** ((note - 69.0) / 12.0)


@dataclass(frozen=True)
class SynthSpec:
    n_recordings: int = 36
    n_test: int = 6
    duration_range: tuple[float, float] = (6.0, 10.0)
    chord_size_range: tuple[int, int] = (1, 3)
    midi_range: tuple[int, int] = (40, 90)
    chord_duration_range: tuple[float, float] = (0.4, 1.2)
    n_partials: int = 5
    partial_decay: float = 0.5
    amp_jitter: float = 0.5
    gap_probability: float = 0.1


def render_note(
    note: int,
    n_samples: int,
    rng: np.random.Generator,
    spec: SynthSpec,
    gain: float = 1.0,
) -> np.ndarray:
    """One note as a ramped sum of harmonic partials with random phases."""
    t = np.arange(n_samples, dtype=np.float64) / SAMPLE_RATE
    f0 = midi_to_hz(note)
    wave = np.zeros(n_samples, dtype=np.float64)
    for p in range(1, spec.n_partials + 1):
        freq = p * f0
        if freq >= SAMPLE_RATE / 2:
            break
        amp = gain * spec.partial_decay ** (p - 1)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave += amp * np.sin(2.0 * np.pi * freq * t + phase)
    ramp = min(256, n_samples // 4)
    if ramp > 0:
        env = np.ones(n_samples)
        env[:ramp] = np.linspace(0.0, 1.0, ramp, endpoint=False)
        env[-ramp:] = np.linspace(1.0, 0.0, ramp)
        wave *= env
    return wave


def render_recording(
    rec_id: str, spec: SynthSpec, rng: np.random.Generator
) -> tuple[Recording, list[NoteEvent]]:
    """One recording: sequential chords with occasional silent gaps."""
    seconds = rng.uniform(*spec.duration_range)
    length = int(round(seconds * SAMPLE_RATE))
    buf = np.zeros(length, dtype=np.float64)
    events: list[NoteEvent] = []

    lo_d, hi_d = spec.chord_duration_range
    pos = 0
    while pos < length:
        dur = int(round(rng.uniform(lo_d, hi_d) * SAMPLE_RATE))
        dur = min(dur, length - pos)
        if dur < SAMPLE_RATE // 20:
            break
        if rng.random() >= spec.gap_probability:
            k = int(rng.integers(spec.chord_size_range[0], spec.chord_size_range[1] + 1))
            lo_n, hi_n = spec.midi_range
            notes = rng.choice(np.arange(lo_n, hi_n + 1), size=k, replace=False)
            for note in sorted(int(n) for n in notes):
                gain = rng.uniform(1.0 - spec.amp_jitter, 1.0)
                buf[pos : pos + dur] += render_note(note, dur, rng, spec, gain)
                events.append(NoteEvent(pos, pos + dur, note, instrument=1))
        pos += dur

    peak = float(np.max(np.abs(buf))) if length else 0.0
    if peak > 0.0:
        buf *= 0.9 / peak
    return Recording(id=rec_id, sample_rate=SAMPLE_RATE, samples=buf), events


def synth_corpus(
    spec: SynthSpec, rng: np.random.Generator
) -> tuple[list[Recording], dict[str, list[NoteEvent]]]:
    """Generate the full corpus; recording ids are synth000, synth001, ..."""
    recordings = []
    events_by_id = {}
    for i in range(spec.n_recordings):
        rec, events = render_recording(f"synth{i:03d}", spec, rng)
        recordings.append(rec)
        events_by_id[rec.id] = events
    return recordings, events_by_id


def corpus_split(spec: SynthSpec, sampling_stride: int = 512) -> DatasetSplit:
    """Deterministic split: the last n_test recordings are held out."""
    ids = [f"synth{i:03d}" for i in range(spec.n_recordings)]
    n_train = spec.n_recordings - spec.n_test
    return DatasetSplit(tuple(ids[:n_train]), tuple(ids[n_train:]), sampling_stride)
