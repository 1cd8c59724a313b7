"""Frame-level multi-pitch evaluation metrics.

Scores and binary truths are pooled over every (frame, note) pair, giving
one number per model:

* average precision: area under the step-wise precision-recall curve over
  all score thresholds (ties grouped into a single step);
* accuracy and total error: the frame-level counting metrics built from
  per-frame reference/system/correct note counts at a global threshold;
* precision and recall at the same threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataset import DatasetSplit, EventTable, eval_centers, labels_at
from .audio import FrameGeometry, Recording, extract_frame

DEFAULT_THRESHOLD = 0.4


@dataclass
class ScoredFrame:
    """Model scores and ground truth for one evaluation frame."""

    scores: np.ndarray  # (128,) real
    truth: np.ndarray  # (128,) binary
    frame_id: tuple[str, int] = ("", 0)


def _pool(frames: Iterable[ScoredFrame]) -> tuple[np.ndarray, np.ndarray]:
    scores = []
    truths = []
    for f in frames:
        scores.append(np.asarray(f.scores, dtype=np.float64))
        truths.append(np.asarray(f.truth, dtype=np.float64))
    if not scores:
        raise ValueError("no frames to evaluate")
    return np.concatenate(scores), np.concatenate(truths)


def average_precision_pooled(scores: np.ndarray, truths: np.ndarray) -> float:
    """Step-wise (non-interpolated) average precision over pooled pairs.

    Parameters
    ----------
    scores : (N,) array
        Ranking scores; any strictly monotone transform leaves the result
        unchanged.
    truths : (N,) array
        Binary relevance per score.

    Returns
    -------
    float
        sum over distinct-score groups of (R_n - R_{n-1}) * P_n, where P_n
        and R_n are precision and recall after admitting every pair whose
        score reaches the n-th distinct value. Equal scores enter in one
        group, so the result is independent of input order.

    Raises
    ------
    ValueError
        If there are no positive labels (the curve is undefined).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truths = np.asarray(truths, dtype=np.float64).ravel()
    if scores.shape != truths.shape:
        raise ValueError(f"scores {scores.shape} vs truths {truths.shape}")
    n_pos = float(truths.sum())
    if n_pos == 0:
        raise ValueError("average precision undefined: no positive labels")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    t = truths[order]
    # indices closing each group of equal scores
    last = np.flatnonzero(np.diff(s))
    ends = np.concatenate([last, [s.size - 1]])
    tp = np.cumsum(t)[ends]
    count = ends + 1.0
    precision = tp / count
    recall = tp / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def average_precision(frames: Sequence[ScoredFrame]) -> float:
    """Pooled average precision over a collection of scored frames."""
    scores, truths = _pool(frames)
    return average_precision_pooled(scores, truths)


def frame_counts(frame: ScoredFrame, threshold: float) -> tuple[int, int, int]:
    """Reference, system, and correct note counts for one frame.

    Nref counts set truth bits, Nsys counts scores at or above the
    threshold, Ncorr counts notes where both hold.
    """
    truth = np.asarray(frame.truth) > 0.5
    pred = np.asarray(frame.scores) >= threshold
    n_ref = int(np.count_nonzero(truth))
    n_sys = int(np.count_nonzero(pred))
    n_corr = int(np.count_nonzero(truth & pred))
    return n_ref, n_sys, n_corr


@dataclass
class ErrorScores:
    accuracy: float
    e_tot: float
    e_sub: float
    e_miss: float
    e_fa: float
    precision: float
    recall: float
    zero_sys: bool = False  # set when no note was predicted at the threshold


def accuracy_error(frames: Sequence[ScoredFrame], threshold: float) -> ErrorScores:
    """Accuracy and substitution/miss/false-alarm error rates.

    All per-frame counts are summed before any ratio is taken:

        Acc    = sum Ncorr / sum (Nref + Nsys - Ncorr)
        Esub   = sum (min(Nref, Nsys) - Ncorr) / sum Nref
        Emiss  = sum max(0, Nref - Nsys) / sum Nref
        Efa    = sum max(0, Nsys - Nref) / sum Nref
        Etot   = Esub + Emiss + Efa

    Raises ValueError when the pool has no reference notes. A pool with no
    system notes reports precision 0 with the zero_sys flag set.
    """
    counts = np.array([frame_counts(f, threshold) for f in frames], dtype=np.int64)
    if counts.size == 0:
        raise ValueError("no frames to evaluate")
    n_ref, n_sys, n_corr = counts[:, 0], counts[:, 1], counts[:, 2]
    ref_sum = int(n_ref.sum())
    sys_sum = int(n_sys.sum())
    corr_sum = int(n_corr.sum())
    if ref_sum == 0:
        raise ValueError("error metrics undefined: no reference notes")

    e_sub = float((np.minimum(n_ref, n_sys) - n_corr).sum()) / ref_sum
    e_miss = float(np.maximum(n_ref - n_sys, 0).sum()) / ref_sum
    e_fa = float(np.maximum(n_sys - n_ref, 0).sum()) / ref_sum
    denom = float((n_ref + n_sys - n_corr).sum())
    accuracy = corr_sum / denom if denom > 0 else 0.0
    zero_sys = sys_sum == 0
    precision = corr_sum / sys_sum if sys_sum > 0 else 0.0
    recall = corr_sum / ref_sum
    return ErrorScores(
        accuracy=accuracy, e_tot=e_sub + e_miss + e_fa,
        e_sub=e_sub, e_miss=e_miss, e_fa=e_fa,
        precision=precision, recall=recall, zero_sys=zero_sys,
    )


@dataclass
class EvalReport:
    average_precision: float
    accuracy: float
    error: float
    precision: float
    recall: float
    threshold: float
    n_frames: int
    n_ref: int
    n_sys: int
    n_corr: int
    e_sub: float
    e_miss: float
    e_fa: float
    per_recording: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def tp(self) -> int:
        return self.n_corr

    @property
    def fp(self) -> int:
        return self.n_sys - self.n_corr

    @property
    def fn(self) -> int:
        return self.n_ref - self.n_corr


def report_from_frames(
    frames: Sequence[ScoredFrame], threshold: float = DEFAULT_THRESHOLD,
    recording_of=None,
) -> EvalReport:
    """Pool scored frames into an EvalReport with a per-recording breakdown."""
    frames = list(frames)
    ap = average_precision(frames)
    err = accuracy_error(frames, threshold)
    counts = np.array([frame_counts(f, threshold) for f in frames], dtype=np.int64)

    per_rec: dict[str, dict[str, float]] = {}
    by_rec: dict[str, list[int]] = {}
    for i, f in enumerate(frames):
        rid = f.frame_id[0] if recording_of is None else recording_of(f)
        by_rec.setdefault(rid, []).append(i)
    for rid in sorted(by_rec):
        idx = by_rec[rid]
        sub = counts[idx]
        entry: dict[str, float] = {
            "frames": float(len(idx)),
            "n_ref": float(sub[:, 0].sum()),
            "n_sys": float(sub[:, 1].sum()),
            "n_corr": float(sub[:, 2].sum()),
        }
        scores = np.concatenate([np.asarray(frames[i].scores) for i in idx])
        truths = np.concatenate([np.asarray(frames[i].truth) for i in idx])
        if truths.sum() > 0:
            entry["average_precision"] = average_precision_pooled(scores, truths)
        per_rec[rid] = entry

    return EvalReport(
        average_precision=ap,
        accuracy=err.accuracy,
        error=err.e_tot,
        precision=err.precision,
        recall=err.recall,
        threshold=threshold,
        n_frames=len(frames),
        n_ref=int(counts[:, 0].sum()),
        n_sys=int(counts[:, 1].sum()),
        n_corr=int(counts[:, 2].sum()),
        e_sub=err.e_sub,
        e_miss=err.e_miss,
        e_fa=err.e_fa,
        per_recording=per_rec,
    )


def score_frames(
    graph, recordings: Sequence[Recording], events_by_id: dict,
    split: DatasetSplit, geom: FrameGeometry,
    batch_size: int = 64, score_transform=None,
) -> list[ScoredFrame]:
    """Score every test-split frame on the evaluation grid."""
    out: list[ScoredFrame] = []
    for rec in recordings:
        if rec.id not in split.test_ids:
            continue
        events = events_by_id[rec.id]
        table = events if isinstance(events, EventTable) else EventTable(events)
        centers = eval_centers(rec.length, split.sampling_stride)
        for start in range(0, len(centers), batch_size):
            chunk = centers[start : start + batch_size]
            batch = np.stack(
                [extract_frame(rec, int(c), geom).samples for c in chunk]
            )
            preds, _ = graph.forward_batch(batch)
            if score_transform is not None:
                preds = score_transform(preds)
            for c, scores in zip(chunk, preds):
                out.append(ScoredFrame(scores, labels_at(table, int(c)), (rec.id, int(c))))
    return out


def evaluate(
    graph, recordings: Sequence[Recording], events_by_id: dict,
    split: DatasetSplit, geom: FrameGeometry,
    threshold: float = DEFAULT_THRESHOLD, score_transform=None,
) -> EvalReport:
    """Run the model over the test split and pool the metrics."""
    if not split.test_ids:
        raise ValueError("empty test split")
    frames = score_frames(
        graph, recordings, events_by_id, split, geom, score_transform=score_transform
    )
    return report_from_frames(frames, threshold)


# -- report serialization -----------------------------------------------------

_POOLED_KEYS = (
    "average_precision", "accuracy", "error", "precision", "recall",
    "threshold", "n_frames", "n_ref", "n_sys", "n_corr",
    "e_sub", "e_miss", "e_fa",
)
_REC_KEYS = ("frames", "n_ref", "n_sys", "n_corr", "average_precision")


def format_report(report: EvalReport) -> str:
    """Canonical key/value text: fixed key order, six decimal places."""
    lines = ["[pooled]"]
    for key in _POOLED_KEYS:
        lines.append(f"{key} = {float(getattr(report, key)):.6f}")
    for rid, entry in report.per_recording.items():
        lines.append(f"[recording {rid}]")
        for key in _REC_KEYS:
            if key in entry:
                lines.append(f"{key} = {float(entry[key]):.6f}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    """Inverse of format_report: {'pooled': {...}, 'recordings': {id: {...}}}."""
    pooled: dict[str, float] = {}
    recordings: dict[str, dict[str, float]] = {}
    current = pooled
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("["):
            section = line.strip("[]")
            if section == "pooled":
                current = pooled
            elif section.startswith("recording "):
                rid = section.split(" ", 1)[1]
                recordings[rid] = {}
                current = recordings[rid]
            else:
                raise ValueError(f"unknown report section {section!r}")
            continue
        key, _, value = line.partition("=")
        current[key.strip()] = float(value)
    return {"pooled": pooled, "recordings": recordings}
