"""Minibatch SGD with momentum and exponential iterate averaging.

The averaged weights are the evaluation weights; the live weights and the
velocity are kept so training can resume. Batch assembly draws each example
from an rng stream keyed by (seed, step, index-in-batch), so runs are
reproducible for any worker count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .audio import FrameGeometry, Recording, extract_frame
from .augment import pitch_shift, random_shift, shift_labels
from .checkpoint import read_checkpoint, write_checkpoint
from .dataset import DatasetSplit, EventTable, draw_train_position, labels_at
from .errors import GraphShapeError, NonFiniteError
from .nn import ModelGraph, backward as nn_backward


@dataclass
class TrainConfig:
    batch_size: int = 150
    momentum: float = 0.95
    learning_rate: float = 0.01
    lr_decay: float = 1.0
    epoch_steps: int = 1000
    avg_decay: float = 2e-4
    steps: int = 1000
    seed: int = 1
    augment_pitch_shift: bool = False
    loss: str = "mse"
    checkpoint_every: int = 1000
    log_every: int = 100

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if not 0.0 < self.avg_decay <= 1.0:
            raise ValueError("avg_decay must be in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss not in ("mse", "bce"):
            raise ValueError(f"unknown loss {self.loss!r}")


# -- losses --------------------------------------------------------------------


def loss_and_grad(pred: np.ndarray, y: np.ndarray, kind: str = "mse"):
    """Per-example loss values and gradients w.r.t. the raw scores.

    mse: value = sum_n (pred_n - y_n)^2 / 128, grad = 2 (pred - y) / 128.
    bce: binary cross-entropy of sigmoid(pred) against y, averaged over the
    128 notes (available for comparison runs).
    Accepts (128,) or (B, 128); the batch axis is preserved.
    """
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    squeeze = pred.ndim == 1
    p = pred[None, :] if squeeze else pred
    t = y[None, :] if squeeze else y
    n = p.shape[1]
    if kind == "mse":
        diff = p - t
        values = np.sum(diff * diff, axis=1) / n
        grads = 2.0 * diff / n
    elif kind == "bce":
        values = np.sum(np.logaddexp(0.0, p) - p * t, axis=1) / n
        sig = 1.0 / (1.0 + np.exp(-p))
        grads = (sig - t) / n
    else:
        raise ValueError(f"unknown loss {kind!r}")
    if squeeze:
        return float(values[0]), grads[0]
    return values, grads


def loss(pred: np.ndarray, y: np.ndarray, kind: str = "mse"):
    """Single-example form of loss_and_grad."""
    return loss_and_grad(np.asarray(pred).ravel(), np.asarray(y).ravel(), kind)


# -- trainer state --------------------------------------------------------------


@dataclass
class TrainerState:
    graph: ModelGraph
    config: TrainConfig
    velocity: dict[str, np.ndarray]
    averaged: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def fresh(cls, graph: ModelGraph, config: TrainConfig) -> "TrainerState":
        velocity = {}
        averaged = {}
        for p in graph.trainable_parameters():
            velocity[p.name] = np.zeros_like(p.value)
            averaged[p.name] = p.value.copy()  # averaged starts at the iterate
        return cls(graph, config, velocity, averaged)

    def effective_lr(self) -> float:
        epochs = self.step // self.config.epoch_steps
        return self.config.learning_rate * self.config.lr_decay**epochs

    def materialize(self, which: str = "averaged") -> None:
        """Copy the chosen weights (averaged or live) into the graph.

        'averaged' is what evaluation uses; 'live' restores the raw
        iterate, e.g. to resume training after an evaluation pass.
        """
        if which == "averaged":
            for name, avg in self.averaged.items():
                self.graph.params[name].value[...] = avg
        elif which != "live":
            raise ValueError(f"unknown weight set {which!r}")


def sgd_step(
    state: TrainerState, frames: np.ndarray, labels: np.ndarray, batch_ids=None
) -> float:
    """One optimizer step on a stacked batch; returns the mean batch loss."""
    cfg = state.config
    graph = state.graph
    graph.zero_grads()
    preds, tape = graph.forward_batch(frames)
    values, grads = loss_and_grad(preds, labels, cfg.loss)
    mean_loss = float(np.mean(values))
    if not np.isfinite(mean_loss):
        ids = "" if batch_ids is None else f", batch {batch_ids}"
        raise NonFiniteError(f"non-finite loss at step {state.step}{ids}")
    nn_backward(tape, grads / frames.shape[0])

    lr = state.effective_lr()
    gamma = cfg.avg_decay
    for p in graph.trainable_parameters():
        v = state.velocity[p.name]
        v *= cfg.momentum
        v += p.grad
        p.value -= lr * v
        avg = state.averaged[p.name]
        avg *= 1.0 - gamma
        avg += gamma * p.value
    state.step += 1
    return mean_loss


def step(state: TrainerState, batch) -> float:
    """sgd_step on a list of (AudioFrame, label_vector) pairs."""
    if not batch:
        raise ValueError("empty batch")
    frames = np.stack([f.samples for f, _ in batch])
    labels = np.stack([y for _, y in batch])
    ids = [(f.source_id, f.center_sample) for f, _ in batch]
    return sgd_step(state, frames, labels, ids)


# -- batch assembly and the training loop ---------------------------------------


def _example_rng(seed: int, step_no: int, idx: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(step_no, idx)))


def _draw_example(
    train_recs: list[Recording], events_by_id: dict[str, EventTable],
    geom: FrameGeometry, cfg: TrainConfig, rng: np.random.Generator,
    max_redraws: int = 1000,
):
    for _ in range(max_redraws):
        rec, center = draw_train_position(train_recs, rng)
        if cfg.augment_pitch_shift:
            shift = random_shift(rng)
            frame = pitch_shift(rec, center, geom, shift)
            if frame.is_silent:
                continue
            y = shift_labels(labels_at(events_by_id[rec.id], center), shift.integral)
        else:
            frame = extract_frame(rec, center, geom)
            if frame.is_silent:
                continue
            y = labels_at(events_by_id[rec.id], center)
        return frame, y
    raise ValueError(f"no non-silent frame found after {max_redraws} draws")


def assemble_batch(
    train_recs: list[Recording], events_by_id: dict[str, EventTable],
    geom: FrameGeometry, cfg: TrainConfig, step_no: int, workers: int = 1,
):
    """Stacked frames and labels for one step, keyed by (seed, step, index)."""

    def one(idx: int):
        return _draw_example(
            train_recs, events_by_id, geom, cfg, _example_rng(cfg.seed, step_no, idx)
        )

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(one, range(cfg.batch_size)))
    else:
        pairs = [one(i) for i in range(cfg.batch_size)]
    frames = np.stack([f.samples for f, _ in pairs])
    labels = np.stack([y for _, y in pairs])
    ids = [(f.source_id, f.center_sample) for f, _ in pairs]
    return frames, labels, ids


def train(
    graph: ModelGraph, cfg: TrainConfig,
    recordings: list[Recording], events_by_id: dict,
    split: DatasetSplit, geom: FrameGeometry,
    checkpoint_dir=None, config_text: str = "", log=None, workers: int = 1,
) -> TrainerState:
    """Run cfg.steps optimizer steps; writes periodic and final checkpoints."""
    train_recs = [r for r in recordings if r.id in split.train_ids]
    if not train_recs:
        raise ValueError("empty train set")
    tables = {
        rid: ev if isinstance(ev, EventTable) else EventTable(ev)
        for rid, ev in events_by_id.items()
    }
    state = TrainerState.fresh(graph, cfg)
    t0 = time.monotonic()
    window_sum = 0.0
    window_n = 0
    for _ in range(cfg.steps):
        frames, labels, ids = assemble_batch(train_recs, tables, geom, cfg, state.step, workers)
        window_sum += sgd_step(state, frames, labels, ids)
        window_n += 1
        if log is not None and state.step % cfg.log_every == 0:
            log(
                f"step={state.step} loss={window_sum / window_n:.6f} "
                f"elapsed={time.monotonic() - t0:.1f}"
            )
            window_sum = 0.0
            window_n = 0
        if checkpoint_dir is not None and state.step % cfg.checkpoint_every == 0:
            save_state(state, _ckpt_path(checkpoint_dir, f"step_{state.step:06d}"), config_text)
    if checkpoint_dir is not None:
        save_state(state, _ckpt_path(checkpoint_dir, "final"), config_text)
    return state


def _ckpt_path(directory, stem: str):
    import os

    return os.path.join(str(directory), f"{stem}.ckpt")


# -- checkpoint round-trip -------------------------------------------------------


def state_tensors(state: TrainerState) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for name, p in state.graph.params.items():
        tensors[f"param/{name}"] = p.value
    for name in state.velocity:
        tensors[f"velocity/{name}"] = state.velocity[name]
        tensors[f"avg/{name}"] = state.averaged[name]
    tensors["state/step"] = np.array(float(state.step))
    return tensors


def save_state(state: TrainerState, path, config_text: str = "") -> None:
    write_checkpoint(path, state_tensors(state), config_text)


def load_state(graph: ModelGraph, cfg: TrainConfig, path) -> tuple[TrainerState, str]:
    """Restore a TrainerState onto a freshly built graph of the same spec."""
    tensors, config_text = read_checkpoint(path)
    state = TrainerState.fresh(graph, cfg)
    for name, p in graph.params.items():
        key = f"param/{name}"
        _copy_tensor(tensors, key, p.value)
    for name in state.velocity:
        _copy_tensor(tensors, f"velocity/{name}", state.velocity[name])
        _copy_tensor(tensors, f"avg/{name}", state.averaged[name])
    if "state/step" not in tensors:
        raise GraphShapeError("checkpoint missing tensor 'state/step'")
    state.step = int(tensors["state/step"])
    return state, config_text


def load_eval_weights(graph: ModelGraph, path, which: str = "averaged") -> str:
    """Load a checkpoint's weights (averaged by default) into a graph."""
    tensors, config_text = read_checkpoint(path)
    for name, p in graph.params.items():
        key = f"avg/{name}" if which == "averaged" and f"avg/{name}" in tensors else f"param/{name}"
        _copy_tensor(tensors, key, p.value)
    return config_text


def _copy_tensor(tensors: dict[str, np.ndarray], key: str, dest: np.ndarray) -> None:
    if key not in tensors:
        raise GraphShapeError(f"checkpoint missing tensor {key!r}")
    src = tensors[key]
    if src.shape != dest.shape:
        raise GraphShapeError(
            f"tensor {key!r}: checkpoint shape {src.shape} != model shape {dest.shape}"
        )
    dest[...] = src
