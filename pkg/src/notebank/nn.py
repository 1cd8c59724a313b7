"""Minimal differentiable layers with hand-written backward rules.

Everything is 64-bit numpy with a fixed summation order, so forward passes
are deterministic and analytic gradients can be held to tight
finite-difference tolerances. Layers operate on batches (leading axis B);
gradients accumulate (+=) into Parameter.grad so minibatch contributions
can be summed across calls.
"""

from __future__ import annotations

import numpy as np

from .audio import FrameGeometry
from .errors import GraphShapeError, NonFiniteError
from .filterbank import Filterbank, frame_regions

N_OUT = 128


class Parameter:
    """A named tensor with an accumulated gradient."""

    def __init__(self, name: str, value: np.ndarray, trainable: bool = True):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape}, trainable={self.trainable})"


def init_scaled_uniform(param: Parameter, rng: np.random.Generator, fan_in: int, fan_out: int) -> Parameter:
    """Fill with uniform [-a, a], a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    param.value[...] = rng.uniform(-a, a, size=param.value.shape)
    return param


class Layer:
    """Forward computes output and cache; backward returns the input gradient.

    needs_input_grad is False when no trainable parameter sits below the
    layer, letting backward skip the input-gradient computation.
    """

    name = "layer"
    needs_input_grad = True

    def forward(self, x: np.ndarray):
        raise NotImplementedError

    def backward(self, g: np.ndarray, cache):
        raise NotImplementedError

    def out_shape(self, in_shape: tuple) -> tuple:
        raise NotImplementedError

    def parameters(self) -> list[Parameter]:
        return []


class Dense(Layer):
    """y = x W^T + b on flattened features."""

    def __init__(self, in_dim: int, out_dim: int, name: str, rng: np.random.Generator):
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = init_scaled_uniform(
            Parameter(f"{name}/W", np.empty((out_dim, in_dim))), rng, in_dim, out_dim
        )
        self.b = Parameter(f"{name}/b", np.zeros(out_dim))

    def forward(self, x):
        return x @ self.W.value.T + self.b.value, x

    def backward(self, g, cache):
        x = cache
        if self.W.trainable:
            self.W.grad += g.T @ x
            self.b.grad += g.sum(axis=0)
        if not self.needs_input_grad:
            return None
        return g @ self.W.value

    def out_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.in_dim:
            raise GraphShapeError(f"{self.name}: expected (B, {self.in_dim}), got {in_shape}")
        return (in_shape[0], self.out_dim)

    def parameters(self):
        return [self.W, self.b]


class Relu(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name

    def forward(self, x):
        mask = x > 0.0
        return np.where(mask, x, 0.0), mask

    def backward(self, g, cache):
        return g * cache

    def out_shape(self, in_shape):
        return in_shape

    def parameters(self):
        return []


class Flatten(Layer):
    def __init__(self, name: str = "flatten"):
        self.name = name

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, g, cache):
        return g.reshape(cache)

    def out_shape(self, in_shape):
        return (in_shape[0], int(np.prod(in_shape[1:])))

    def parameters(self):
        return []


class FreqConv(Layer):
    """Valid convolution along the frequency axis, shared across regions.

    Input (B, regions, freq, channels) -> (B, regions, freq', n_filters)
    with freq' = (freq - filter_height)//stride + 1:

        out[b,r,p,f] = sum_{h,c} filt[f,h,c] * in[b,r,p*stride + h,c]
    """

    def __init__(self, filter_height: int, n_filters: int, in_channels: int,
                 stride: int, name: str, rng: np.random.Generator):
        self.name = name
        self.height = filter_height
        self.n_filters = n_filters
        self.in_channels = in_channels
        self.stride = stride
        self.filt = init_scaled_uniform(
            Parameter(f"{name}/filt", np.empty((n_filters, filter_height, in_channels))),
            rng, filter_height * in_channels, n_filters,
        )

    def _windows(self, x):
        # (B, R, P, C, h): window axis appended last by sliding_window_view
        w = np.lib.stride_tricks.sliding_window_view(x, self.height, axis=2)
        return w[:, :, :: self.stride]

    def forward(self, x):
        B, R = x.shape[:2]
        win = self._windows(x)
        P = win.shape[2]
        flat = np.ascontiguousarray(win).reshape(B * R * P, self.in_channels * self.height)
        # columns indexed (c, h) to match filt.transpose(2, 1, 0)
        fmat = self.filt.value.transpose(2, 1, 0).reshape(-1, self.n_filters)
        out = (flat @ fmat).reshape(B, R, P, self.n_filters)
        return out, (flat, x.shape)

    def backward(self, g, cache):
        flat, in_shape = cache
        B, R, P, _ = g.shape
        gflat = g.reshape(B * R * P, self.n_filters)
        if self.filt.trainable:
            dmat = gflat.T @ flat  # (n, c*h)
            self.filt.grad += dmat.reshape(
                self.n_filters, self.in_channels, self.height
            ).transpose(0, 2, 1)
        if not self.needs_input_grad:
            return None
        dx = np.zeros(in_shape, dtype=np.float64)
        pos = self.stride * np.arange(P)
        for h in range(self.height):
            # positions pos + h are distinct for fixed h, so += has no overlap
            dx[:, :, pos + h, :] += np.einsum(
                "brpn,nc->brpc", g, self.filt.value[:, h, :], optimize=True
            )
        return dx

    def out_shape(self, in_shape):
        if len(in_shape) != 4 or in_shape[3] != self.in_channels:
            raise GraphShapeError(f"{self.name}: expected (B, R, F, {self.in_channels}), got {in_shape}")
        if in_shape[2] < self.height:
            raise GraphShapeError(f"{self.name}: freq {in_shape[2]} < filter height {self.height}")
        P = (in_shape[2] - self.height) // self.stride + 1
        return (in_shape[0], in_shape[1], P, self.n_filters)

    def parameters(self):
        return [self.filt]


class TimeChannelConv(Layer):
    """Height-1 frequency convolution, fully connected over time and channels.

    At each sampled frequency position p the same (regions x channels)
    filter is applied:

        pre[b,p,f] = sum_{r,c} filt[f,r,c] * in[b,r,p*stride,c]

    pool='mean' averages over p, giving one hidden node per filter;
    pool='none' flattens the (p, f) map.
    """

    def __init__(self, n_filters: int, regions: int, in_channels: int,
                 stride: int, pool: str, name: str, rng: np.random.Generator):
        if pool not in ("mean", "none"):
            raise ValueError(f"pool must be 'mean' or 'none', got {pool!r}")
        self.name = name
        self.n_filters = n_filters
        self.regions = regions
        self.in_channels = in_channels
        self.stride = stride
        self.pool = pool
        self.filt = init_scaled_uniform(
            Parameter(f"{name}/filt", np.empty((n_filters, regions, in_channels))),
            rng, regions * in_channels, n_filters,
        )

    def _positions(self, freq: int) -> int:
        return (freq - 1) // self.stride + 1

    def forward(self, x):
        B, R, F, C = x.shape
        sub = x[:, :, :: self.stride, :]  # (B, R, P, C)
        P = sub.shape[2]
        sub_t = np.ascontiguousarray(sub.transpose(0, 2, 1, 3)).reshape(B * P, R * C)
        fmat = self.filt.value.reshape(self.n_filters, R * C)
        pre = (sub_t @ fmat.T).reshape(B, P, self.n_filters)
        if self.pool == "mean":
            out = pre.mean(axis=1)
        else:
            out = pre.reshape(B, P * self.n_filters)
        return out, (sub_t, x.shape, P)

    def backward(self, g, cache):
        sub_t, in_shape, P = cache
        B = in_shape[0]
        if self.pool == "mean":
            gpre = np.repeat(g[:, None, :] / P, P, axis=1)
        else:
            gpre = g.reshape(B, P, self.n_filters)
        gflat = gpre.reshape(B * P, self.n_filters)
        if self.filt.trainable:
            self.filt.grad += (gflat.T @ sub_t).reshape(self.filt.value.shape)
        if not self.needs_input_grad:
            return None
        fmat = self.filt.value.reshape(self.n_filters, -1)
        dsub_t = gflat @ fmat  # (B*P, R*C)
        dsub = dsub_t.reshape(B, P, in_shape[1], in_shape[3]).transpose(0, 2, 1, 3)
        dx = np.zeros(in_shape, dtype=np.float64)
        dx[:, :, :: self.stride, :] = dsub
        return dx

    def out_shape(self, in_shape):
        if len(in_shape) != 4 or in_shape[1] != self.regions or in_shape[3] != self.in_channels:
            raise GraphShapeError(
                f"{self.name}: expected (B, {self.regions}, F, {self.in_channels}), got {in_shape}"
            )
        P = self._positions(in_shape[2])
        return (in_shape[0], self.n_filters) if self.pool == "mean" else (in_shape[0], P * self.n_filters)

    def parameters(self):
        return [self.filt]


class FilterbankLayer(Layer):
    """Layer one: sine/cosine energies over frame regions, optionally learned.

    Input (B, frame_len) -> (B, regions, channels, 1). When trainable, the
    filter coefficient pairs receive gradients; the frame itself never needs
    one (nothing sits below layer one).
    """

    needs_input_grad = False

    def __init__(self, bank: Filterbank, geom: FrameGeometry,
                 compress: bool, eps: float, trainable: bool, name: str = "frontend"):
        self.name = name
        self.geom = geom
        self.compress = compress
        self.eps = eps
        self.w_sin = Parameter(f"{name}/w_sin", bank.w_sin.copy(), trainable)
        self.w_cos = Parameter(f"{name}/w_cos", bank.w_cos.copy(), trainable)
        self.center_freqs = bank.center_freqs.copy()

    @property
    def n_channels(self) -> int:
        return self.w_sin.value.shape[0]

    def current_bank(self) -> Filterbank:
        return Filterbank(self.w_sin.value, self.w_cos.value, self.center_freqs)

    def forward(self, x):
        B = x.shape[0]
        X = np.ascontiguousarray(frame_regions(x, self.geom)).reshape(-1, self.geom.receptive_field)
        s = X @ self.w_sin.value.T
        c = X @ self.w_cos.value.T
        energy = s * s + c * c
        values = np.log(self.eps + energy) if self.compress else energy
        out = values.reshape(B, self.geom.regions, self.n_channels, 1)
        cache = (X, s, c, energy) if self.w_sin.trainable else None
        return out, cache

    def backward(self, g, cache):
        if not self.w_sin.trainable:
            return None
        X, s, c, energy = cache
        ge = g.reshape(energy.shape)
        if self.compress:
            ge = ge / (self.eps + energy)
        self.w_sin.grad += (2.0 * ge * s).T @ X
        self.w_cos.grad += (2.0 * ge * c).T @ X
        return None

    def out_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.geom.frame_len:
            raise GraphShapeError(f"{self.name}: expected (B, {self.geom.frame_len}), got {in_shape}")
        return (in_shape[0], self.geom.regions, self.n_channels, 1)

    def parameters(self):
        return [self.w_sin, self.w_cos]


class ModelGraph:
    """An ordered layer stack with named parameters, shape-checked on build."""

    def __init__(self, layers: list[Layer], geom: FrameGeometry, spec=None):
        self.layers = layers
        self.geom = geom
        self.spec = spec
        self.params: dict[str, Parameter] = {}
        for layer in layers:
            for p in layer.parameters():
                if p.name in self.params:
                    raise GraphShapeError(f"duplicate parameter name {p.name}")
                self.params[p.name] = p
        self._wire_input_grads()
        self.check_shapes()

    def _wire_input_grads(self) -> None:
        below_trainable = False
        for layer in self.layers:
            layer.needs_input_grad = below_trainable
            if any(p.trainable for p in layer.parameters()):
                below_trainable = True

    def check_shapes(self, batch: int = 1) -> tuple:
        shape: tuple = (batch, self.geom.frame_len)
        for layer in self.layers:
            shape = layer.out_shape(shape)
        if shape != (batch, N_OUT):
            raise GraphShapeError(f"graph output shape {shape}, expected (B, {N_OUT})")
        return shape

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.params.values() if p.trainable]

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def forward_batch(self, x: np.ndarray):
        """Run a (B, frame_len) batch; returns (predictions (B, 128), tape)."""
        tape = []
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out, cache = layer.forward(out)
            if not np.all(np.isfinite(out)):
                raise NonFiniteError(f"non-finite values leaving layer {layer.name!r}")
            tape.append((layer, cache))
        return out, tape

    def param_count(self, trainable_only: bool = True) -> int:
        return sum(
            p.value.size for p in self.params.values() if p.trainable or not trainable_only
        )


def forward(graph: ModelGraph, frame):
    """Single-frame forward pass. Returns (prediction (128,), tape)."""
    samples = frame.samples if hasattr(frame, "samples") else np.asarray(frame)
    pred, tape = graph.forward_batch(samples[None, :])
    return pred[0], tape


def backward(tape, loss_grad: np.ndarray) -> None:
    """Push loss gradients back through a recorded tape.

    loss_grad has the shape of the forward output ((B, 128) for a batch
    tape, (128,) for a single-frame tape). Gradients accumulate into the
    trainable Parameters; callers zero them between optimizer steps.
    """
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.ndim != 2 or g.shape[1] != N_OUT:
        raise GraphShapeError(f"loss gradient shape {g.shape}, expected (B, {N_OUT})")
    for layer, cache in reversed(tape):
        g = layer.backward(g, cache)
        if g is None:
            break
