"""Shared test oracles: finite differences, brute-force metrics, tones."""

from __future__ import annotations

import numpy as np

from notebank.audio import SAMPLE_RATE


def tone(freq: float, n_samples: int, amp: float = 0.5, phase: float = 0.0) -> np.ndarray:
    t = np.arange(n_samples, dtype=np.float64) / SAMPLE_RATE
    return amp * np.sin(2.0 * np.pi * freq * t + phase)


def central_difference(fn, values: np.ndarray, index: tuple, h: float = 1e-6) -> float:
    """d fn / d values[index] by central differences, restoring the entry."""
    orig = values[index]
    values[index] = orig + h
    up = fn()
    values[index] = orig - h
    down = fn()
    values[index] = orig
    return (up - down) / (2.0 * h)


def grad_entries(shape: tuple, rng: np.random.Generator, max_entries: int = 24):
    """A deterministic sample of entry indices to probe in a tensor."""
    size = int(np.prod(shape))
    if size <= max_entries:
        flat = np.arange(size)
    else:
        flat = rng.choice(size, size=max_entries, replace=False)
    return [np.unravel_index(int(i), shape) for i in flat]


def check_gradients(
    loss_fn, params, rng: np.random.Generator,
    h: float = 1e-6, rtol: float = 1e-4, floor: float = 1e-8,
    max_entries: int = 24,
) -> float:
    """Compare analytic grads (already accumulated) to finite differences.

    loss_fn recomputes the scalar loss from the parameters' current values.
    Passes when |analytic - numeric| <= floor + rtol * max(|analytic|, |numeric|)
    at every probed entry; returns the worst ratio of |diff| to the bound.
    """
    worst = 0.0
    for p in params:
        for index in grad_entries(p.value.shape, rng, max_entries):
            numeric = central_difference(loss_fn, p.value, index, h)
            analytic = float(p.grad[index])
            bound = floor + rtol * max(abs(analytic), abs(numeric))
            ratio = abs(analytic - numeric) / bound
            assert abs(analytic - numeric) <= bound, (
                f"{p.name}{index}: analytic {analytic:.3e} vs numeric {numeric:.3e}"
            )
            worst = max(worst, ratio)
    return worst


def brute_force_average_precision(scores: np.ndarray, truths: np.ndarray) -> float:
    """AP by sweeping every distinct score as a threshold (O(n * distinct))."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truths = np.asarray(truths, dtype=np.float64).ravel()
    n_pos = truths.sum()
    assert n_pos > 0
    ap = 0.0
    prev_recall = 0.0
    for s in np.unique(scores)[::-1]:
        pred = scores >= s
        tp = float(truths[pred].sum())
        precision = tp / float(pred.sum())
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def set_based_error_scores(frames, threshold: float):
    """Accuracy/Etot from explicit note sets, mirroring the counting rules."""
    ref_sum = sys_sum = corr_sum = 0
    e_sub_n = e_miss_n = e_fa_n = 0
    for f in frames:
        ref = {int(n) for n in np.flatnonzero(np.asarray(f.truth) > 0.5)}
        sys_ = {int(n) for n in np.flatnonzero(np.asarray(f.scores) >= threshold)}
        corr = ref & sys_
        ref_sum += len(ref)
        sys_sum += len(sys_)
        corr_sum += len(corr)
        e_sub_n += min(len(ref), len(sys_)) - len(corr)
        e_miss_n += max(0, len(ref) - len(sys_))
        e_fa_n += max(0, len(sys_) - len(ref))
    acc = corr_sum / (ref_sum + sys_sum - corr_sum) if ref_sum + sys_sum - corr_sum else 0.0
    e_tot = (e_sub_n + e_miss_n + e_fa_n) / ref_sum
    return acc, e_tot, e_sub_n / ref_sum, e_miss_n / ref_sum, e_fa_n / ref_sum
