"""Note labels, train/test splits, and frame sampling.

Labels follow the MusicNet CSV convention: one row per note event, start and
end given as sample indices at 44.1 kHz, note as a MIDI number. A frame's
label vector marks the notes sounding at the frame's center sample.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .audio import AudioFrame, FrameGeometry, Recording, extract_frame
from .errors import LabelRowError, LabelSchemaError

N_NOTES = 128


@dataclass(frozen=True)
class NoteEvent:
    """One note: half-open sample interval [start_sample, end_sample)."""

    start_sample: int
    end_sample: int
    note: int
    instrument: int = 0

    def __post_init__(self):
        if self.start_sample >= self.end_sample:
            raise ValueError(f"empty note interval [{self.start_sample}, {self.end_sample})")
        if not 0 <= self.note < N_NOTES:
            raise ValueError(f"note {self.note} outside [0, {N_NOTES - 1}]")


class EventTable:
    """Column layout of a list of events, for fast repeated label queries."""

    def __init__(self, events: Iterable[NoteEvent]):
        events = list(events)
        self.events = events
        self.starts = np.array([e.start_sample for e in events], dtype=np.int64)
        self.ends = np.array([e.end_sample for e in events], dtype=np.int64)
        self.notes = np.array([e.note for e in events], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/test recording ids plus the evaluation frame stride."""

    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    sampling_stride: int = 512

    def __post_init__(self):
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise ValueError(f"recording ids in both train and test: {sorted(overlap)}")


# -- label ingestion ----------------------------------------------------------

REQUIRED_COLUMNS = ("start_time", "end_time", "note")


def load_labels(path) -> tuple[list[NoteEvent], list[LabelRowError]]:
    """Parse a MusicNet-style label CSV.

    Returns the parsed events plus one LabelRowError per rejected row
    (malformed numerics, out-of-range note, inverted interval). A missing
    required column raises LabelSchemaError instead.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise LabelSchemaError(f"label CSV missing columns: {missing}")
        events: list[NoteEvent] = []
        errors: list[LabelRowError] = []
        for row in reader:
            line = reader.line_num
            try:
                start = int(row["start_time"])
                end = int(row["end_time"])
                note = int(row["note"])
                instrument = int(row.get("instrument") or 0)
                events.append(NoteEvent(start, end, note, instrument))
            except (TypeError, ValueError) as exc:
                errors.append(LabelRowError(str(exc), line))
    return events, errors


def labels_at(events, t: int) -> np.ndarray:
    """Binary vector over MIDI notes sounding at sample t.

    bits[n] = 1 iff some event with note n satisfies start <= t < end.
    """
    table = events if isinstance(events, EventTable) else EventTable(events)
    bits = np.zeros(N_NOTES, dtype=np.float64)
    if len(table):
        active = (table.starts <= t) & (t < table.ends)
        bits[table.notes[active]] = 1.0
    return bits


# -- frame sampling -----------------------------------------------------------


def eval_centers(length: int, sampling_stride: int) -> np.ndarray:
    """Evaluation grid: sampling_stride, 2*stride, ..., up to the length."""
    count = length // sampling_stride
    return (np.arange(1, count + 1) * sampling_stride).astype(np.int64)


def sample_eval_frames(
    rec: Recording, events, split: DatasetSplit, geom: FrameGeometry
) -> Iterator[tuple[AudioFrame, np.ndarray]]:
    """Stream (frame, label vector) pairs on the regular evaluation grid."""
    if rec.id not in split.test_ids:
        raise ValueError(f"recording {rec.id} is not in the test split")
    table = events if isinstance(events, EventTable) else EventTable(events)
    for center in eval_centers(rec.length, split.sampling_stride):
        yield extract_frame(rec, int(center), geom), labels_at(table, int(center))


def draw_train_position(
    recordings: list[Recording], rng: np.random.Generator
) -> tuple[Recording, int]:
    """Uniform position over the concatenated train audio.

    Equivalent to picking a recording with probability proportional to its
    length, then a uniform center within it.
    """
    lengths = np.array([r.length for r in recordings], dtype=np.int64)
    total = int(lengths.sum())
    u = int(rng.integers(0, total))
    idx = int(np.searchsorted(np.cumsum(lengths), u, side="right"))
    center = u - int(np.concatenate([[0], np.cumsum(lengths)])[idx])
    return recordings[idx], center


def sample_train_frame(
    recordings: list[Recording],
    events_by_id: dict[str, EventTable],
    split: DatasetSplit,
    geom: FrameGeometry,
    rng: np.random.Generator,
    max_redraws: int = 1000,
) -> tuple[AudioFrame, np.ndarray]:
    """Draw one random training frame; all-zero frames are redrawn."""
    train = [r for r in recordings if r.id in split.train_ids]
    if not train:
        raise ValueError("empty train set")
    for _ in range(max_redraws):
        rec, center = draw_train_position(train, rng)
        frame = extract_frame(rec, center, geom)
        if not frame.is_silent:
            return frame, labels_at(events_by_id[rec.id], center)
    raise ValueError(f"no non-silent frame found after {max_redraws} draws")


# -- split files --------------------------------------------------------------


def parse_split_text(text: str, sampling_stride: int = 512) -> DatasetSplit:
    """Parse a plain-text split: one `train <id>` or `test <id>` per line."""
    train: list[str] = []
    test: list[str] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ("train", "test"):
            raise ValueError(f"split line {line_no}: expected 'train <id>' or 'test <id>'")
        (train if parts[0] == "train" else test).append(parts[1])
    return DatasetSplit(tuple(train), tuple(test), sampling_stride)


def load_split(path, sampling_stride: int = 512) -> DatasetSplit:
    with open(path) as fh:
        return parse_split_text(fh.read(), sampling_stride)


def write_split(path, split: DatasetSplit) -> None:
    with open(path, "w") as fh:
        for rid in split.train_ids:
            fh.write(f"train {rid}\n")
        for rid in split.test_ids:
            fh.write(f"test {rid}\n")


# -- corpus on disk -----------------------------------------------------------


def write_labels_csv(path, events: Iterable[NoteEvent]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start_time", "end_time", "instrument", "note"])
        for e in events:
            writer.writerow([e.start_sample, e.end_sample, e.instrument, e.note])


def load_corpus(
    data_dir, labels_dir, ids: Iterable[str]
) -> tuple[list[Recording], dict[str, EventTable]]:
    """Load <id>.wav / <id>.csv pairs for the given recording ids."""
    from . import audio
    import os

    recordings = []
    events_by_id: dict[str, EventTable] = {}
    for rid in ids:
        rec = audio.load_wav(os.path.join(str(data_dir), f"{rid}.wav"), rec_id=rid)
        events, _ = load_labels(os.path.join(str(labels_dir), f"{rid}.csv"))
        recordings.append(rec)
        events_by_id[rid] = EventTable(events)
    return recordings, events_by_id


def available_ids(data_dir) -> list[str]:
    """Sorted recording ids of the WAV files in a directory."""
    import os

    return sorted(
        name[:-4] for name in os.listdir(str(data_dir)) if name.endswith(".wav")
    )
