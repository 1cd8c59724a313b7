"""Model families assembled from the layer primitives.

Four families share the same filterbank layer one:

  two_layer              linear note scores on the (log) spectrogram
  three_layer            one fully connected hidden layer in between
  translation_invariant  frequency-convolutional layers two and three over a
                         frozen, frequency-ordered bank
  channel_conv           the same graph with layer one learned from random
                         initialization

Outputs are raw linear scores over the 128 MIDI notes; thresholding and
score calibration are evaluation concerns.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .audio import FrameGeometry
from .errors import GraphShapeError
from .filterbank import FilterbankSpec, build
from .nn import (
    Dense,
    FilterbankLayer,
    Flatten,
    FreqConv,
    ModelGraph,
    Relu,
    TimeChannelConv,
    forward,
    init_scaled_uniform,
)

FAMILIES = ("two_layer", "three_layer", "translation_invariant", "channel_conv")


@dataclass(frozen=True)
class ModelSpec:
    family: str = "translation_invariant"
    frontend: FilterbankSpec = field(default_factory=FilterbankSpec)
    learned_frontend: bool = False
    hidden3: int = 256
    l2_filters: int = 128
    l2_height: int = 128
    l2_stride: int = 1
    l3_stride: int = 1
    l3_pool: str = "mean"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        if self.family == "translation_invariant":
            if self.learned_frontend:
                raise GraphShapeError(
                    "translation_invariant requires a fixed frontend; "
                    "use family channel_conv for a learned layer one"
                )
            if self.frontend.kind != "log_spaced" or not self.frontend.windowed or not self.frontend.compress:
                raise GraphShapeError(
                    "translation_invariant requires the log-spaced, windowed, "
                    "compressed frontend"
                )
        if self.family == "channel_conv" and not self.learned_frontend:
            raise GraphShapeError("channel_conv requires learned_frontend = True")
        if self.l3_pool not in ("mean", "none"):
            raise ValueError(f"l3_pool must be 'mean' or 'none', got {self.l3_pool!r}")


def _frontend_layer(spec: ModelSpec, geom: FrameGeometry, rng: np.random.Generator) -> FilterbankLayer:
    if geom.receptive_field != spec.frontend.receptive_field:
        raise GraphShapeError(
            f"frontend receptive field {spec.frontend.receptive_field} "
            f"!= geometry receptive field {geom.receptive_field}"
        )
    bank = build(spec.frontend)
    layer = FilterbankLayer(
        bank, geom,
        compress=spec.frontend.compress, eps=spec.frontend.eps,
        trainable=spec.learned_frontend,
    )
    if spec.learned_frontend:
        # random start: dimensions mirror the generated bank, values do not
        rf, k = geom.receptive_field, bank.n_channels
        init_scaled_uniform(layer.w_sin, rng, rf, k)
        init_scaled_uniform(layer.w_cos, rng, rf, k)
    return layer


def build_model(spec: ModelSpec, geom: FrameGeometry, rng: np.random.Generator) -> ModelGraph:
    """Construct and shape-check the graph for a model spec."""
    fb = _frontend_layer(spec, geom, rng)
    n_ch = fb.n_channels
    regions = geom.regions

    if spec.family == "two_layer":
        layers = [fb, Flatten(), Dense(regions * n_ch, 128, "out", rng)]
    elif spec.family == "three_layer":
        layers = [
            fb,
            Flatten(),
            Dense(regions * n_ch, spec.hidden3, "hidden", rng),
            Relu("relu_hidden"),
            Dense(spec.hidden3, 128, "out", rng),
        ]
    else:  # translation_invariant / channel_conv share one graph
        conv2 = FreqConv(spec.l2_height, spec.l2_filters, 1, spec.l2_stride, "conv_freq", rng)
        f2 = (n_ch - spec.l2_height) // spec.l2_stride + 1
        conv3 = TimeChannelConv(
            spec.hidden3, regions, spec.l2_filters, spec.l3_stride, spec.l3_pool,
            "conv_time", rng,
        )
        if spec.l3_pool == "mean":
            hidden_dim = spec.hidden3
        else:
            hidden_dim = ((f2 - 1) // spec.l3_stride + 1) * spec.hidden3
        layers = [
            fb,
            conv2,
            Relu("relu2"),
            conv3,
            Relu("relu3"),
            Dense(hidden_dim, 128, "out", rng),
        ]
    return ModelGraph(layers, geom, spec=spec)


def predict(graph: ModelGraph, frame) -> np.ndarray:
    """Raw note scores for one frame (no thresholding)."""
    scores, _ = forward(graph, frame)
    return scores


def spectrogram_of(graph: ModelGraph, frame) -> np.ndarray:
    """Layer-one output for a frame, shape (regions, freq, 1)."""
    samples = frame.samples if hasattr(frame, "samples") else np.asarray(frame)
    out, _ = graph.layers[0].forward(samples[None, :])
    return out[0]


def layer_two_map(graph: ModelGraph, frame) -> np.ndarray:
    """Post-convolution layer-two activations, shape (regions, freq', l2_filters)."""
    samples = frame.samples if hasattr(frame, "samples") else np.asarray(frame)
    out = samples[None, :]
    for layer in graph.layers:
        out, _ = layer.forward(out)
        if isinstance(layer, FreqConv):
            return out[0]
    raise GraphShapeError("graph has no frequency-convolution layer")


def shift_equivariance_probe(graph: ModelGraph, frame, s: int) -> float:
    """Max deviation between shift-then-convolve and convolve-then-shift.

    Feeds the layer-one spectrogram and its s-bin frequency-shifted copy
    through layer two and compares the outputs on the region where both are
    determined by the same input values. Requires a translation_invariant
    graph with unit layer-two stride.
    """
    spec = graph.spec
    if spec is None or spec.family != "translation_invariant":
        raise ValueError("probe requires a translation_invariant graph")
    if spec.l2_stride != 1:
        raise ValueError("probe requires l2_stride = 1")
    conv = next(l for l in graph.layers if isinstance(l, FreqConv))

    samples = frame.samples if hasattr(frame, "samples") else np.asarray(frame)
    h, _ = graph.layers[0].forward(samples[None, :])
    n_freq = h.shape[2]
    if abs(s) >= n_freq:
        raise ValueError(f"shift {s} exceeds frequency height {n_freq}")

    shifted = np.zeros_like(h)
    if s >= 0:
        shifted[:, :, s:, :] = h[:, :, : n_freq - s, :]
    else:
        shifted[:, :, :s, :] = h[:, :, -s:, :]

    out, _ = conv.forward(h)
    out_s, _ = conv.forward(shifted)
    p = out.shape[2]
    if abs(s) >= p:
        raise ValueError(f"shift {s} leaves no overlap ({p} output positions)")
    if s >= 0:
        dev = out_s[:, :, s:, :] - out[:, :, : p - s, :]
    else:
        dev = out_s[:, :, :s, :] - out[:, :, -s:, :]
    return float(np.max(np.abs(dev)))


def with_frontend(spec: ModelSpec, **changes) -> ModelSpec:
    """Spec with a modified frontend (convenience for config plumbing)."""
    return replace(spec, frontend=replace(spec.frontend, **changes))
