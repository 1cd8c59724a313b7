import numpy as np
import pytest

from helpers import check_gradients
from notebank.audio import FrameGeometry
from notebank.errors import GraphShapeError, NonFiniteError
from notebank.filterbank import FilterbankSpec, build_log_spaced
from notebank.models import ModelSpec, build_model
from notebank.nn import (
    Dense,
    FilterbankLayer,
    Flatten,
    FreqConv,
    ModelGraph,
    Parameter,
    Relu,
    TimeChannelConv,
    backward,
    forward,
    init_scaled_uniform,
)
from notebank.training import loss_and_grad


def small_model(seed=0, family="translation_invariant", **kw):
    geom = FrameGeometry(frame_len=512, receptive_field=128, stride=128)
    fb = FilterbankSpec(n_filters=16, f_min=100.0, f_max=5000.0, receptive_field=128)
    defaults = dict(hidden3=6, l2_filters=4, l2_height=8)
    if family in ("two_layer", "three_layer"):
        defaults = dict(hidden3=6)
    defaults.update(kw)
    spec = ModelSpec(family=family, frontend=fb, **defaults)
    return build_model(spec, geom, np.random.default_rng(seed)), geom


# -- forward basics -------------------------------------------------------------


def test_zero_weights_predict_bias(rng):
    graph, geom = small_model()
    for p in graph.params.values():
        if p.name.endswith("/W") or p.name.endswith("/filt"):
            p.value[...] = 0.0
    graph.params["out/b"].value[...] = rng.normal(size=128)
    x = rng.normal(size=(2, geom.frame_len))
    preds, _ = graph.forward_batch(x)
    assert np.allclose(preds, graph.params["out/b"].value)


def test_identity_dense(rng):
    layer = Dense(5, 5, "d", rng)
    layer.W.value[...] = np.eye(5)
    layer.b.value[...] = 0.0
    x = rng.normal(size=(3, 5))
    y, _ = layer.forward(x)
    assert np.array_equal(y, x)


def test_forward_deterministic_under_seed():
    a, geom = small_model(seed=7)
    b, _ = small_model(seed=7)
    x = np.random.default_rng(0).normal(size=(2, geom.frame_len))
    pa, _ = a.forward_batch(x)
    pb, _ = b.forward_batch(x)
    assert np.array_equal(pa, pb)


def test_non_finite_aborts_with_layer_name():
    graph, geom = small_model()
    graph.params["out/W"].value[0, 0] = np.nan
    x = np.zeros((1, geom.frame_len))
    with pytest.raises(NonFiniteError, match="out"):
        graph.forward_batch(x)


def test_single_frame_forward_shape():
    graph, geom = small_model()
    pred, tape = forward(graph, np.random.default_rng(0).normal(size=geom.frame_len))
    assert pred.shape == (128,)
    assert len(tape) == len(graph.layers)


# -- gradient checks --------------------------------------------------------------


def graph_loss_fn(graph, x, y):
    def fn():
        preds, _ = graph.forward_batch(x)
        values, _ = loss_and_grad(preds, y)
        return float(np.mean(values))

    return fn


def run_graph_gradcheck(graph, geom, seed, max_entries=12):
    rng = np.random.default_rng(seed + 1000)
    x = rng.normal(size=(2, geom.frame_len))
    y = (rng.random((2, 128)) < 0.1).astype(np.float64)
    graph.zero_grads()
    preds, tape = graph.forward_batch(x)
    _, grads = loss_and_grad(preds, y)
    backward(tape, grads / x.shape[0])
    check_gradients(
        graph_loss_fn(graph, x, y), graph.trainable_parameters(), rng,
        max_entries=max_entries,
    )


@pytest.mark.parametrize("family", ["two_layer", "three_layer", "translation_invariant", "channel_conv"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_all_families(family, seed):
    kw = {"learned_frontend": True} if family == "channel_conv" else {}
    graph, geom = small_model(seed=seed, family=family, **kw)
    run_graph_gradcheck(graph, geom, seed)


def test_gradients_pool_none_and_strides():
    graph, geom = small_model(seed=3, l3_pool="none", l2_stride=2, l3_stride=2)
    run_graph_gradcheck(graph, geom, 3)


def test_relu_blocks_gradient_at_negative_preactivation(rng):
    relu = Relu()
    x = np.array([[-1.0, 2.0, -0.5]])
    y, cache = relu.forward(x)
    g = relu.backward(np.ones_like(x), cache)
    assert np.array_equal(g, [[0.0, 1.0, 0.0]])


def test_backward_linearity():
    graph, geom = small_model(seed=4)
    x = np.random.default_rng(4).normal(size=(2, geom.frame_len))
    preds, tape = graph.forward_batch(x)
    g = np.random.default_rng(5).normal(size=preds.shape)

    graph.zero_grads()
    backward(tape, g)
    single = {p.name: p.grad.copy() for p in graph.trainable_parameters()}
    graph.zero_grads()
    preds, tape = graph.forward_batch(x)
    backward(tape, 2.0 * g)
    for p in graph.trainable_parameters():
        assert np.allclose(p.grad, 2.0 * single[p.name], rtol=1e-12)


def test_grad_accumulates_across_calls():
    graph, geom = small_model(seed=6)
    x = np.random.default_rng(6).normal(size=(1, geom.frame_len))
    preds, tape = graph.forward_batch(x)
    g = np.ones_like(preds)
    graph.zero_grads()
    backward(tape, g)
    once = {p.name: p.grad.copy() for p in graph.trainable_parameters()}
    preds, tape = graph.forward_batch(x)
    backward(tape, g)  # no zero_grads in between
    for p in graph.trainable_parameters():
        assert np.allclose(p.grad, 2.0 * once[p.name], rtol=1e-12)


# -- freq conv -----------------------------------------------------------------


def test_freq_conv_paper_shape(rng):
    conv = FreqConv(128, 128, 1, 1, "c", rng)
    assert conv.out_shape((1, 25, 512, 1)) == (1, 25, 385, 128)


def test_freq_conv_delta_filter_copies_input(rng):
    conv = FreqConv(3, 1, 1, 2, "c", rng)
    conv.filt.value[...] = 0.0
    conv.filt.value[0, 0, 0] = 1.0
    x = rng.normal(size=(1, 2, 11, 1))
    y, _ = conv.forward(x)
    assert np.allclose(y[0, :, :, 0], x[0, :, 0:9:2, 0])


@pytest.mark.parametrize("s", [1, 7, 12])
def test_freq_conv_shift_equivariance(rng, s):
    conv = FreqConv(5, 3, 2, 1, "c", rng)
    x = rng.normal(size=(2, 4, 40, 2))
    shifted = np.zeros_like(x)
    shifted[:, :, s:, :] = x[:, :, :-s, :]
    y, _ = conv.forward(x)
    ys, _ = conv.forward(shifted)
    p = y.shape[2]
    dev = np.max(np.abs(ys[:, :, s:, :] - y[:, :, : p - s, :]))
    assert dev < 1e-12


# -- time/channel conv ------------------------------------------------------------


def test_time_conv_mean_pool_constant_input(rng):
    for freq in (10, 20, 37):
        conv = TimeChannelConv(6, 4, 3, 1, "mean", "t", rng)
        x = np.ones((2, 4, freq, 3)) * 0.5
        y, _ = conv.forward(x)
        assert y.shape == (2, 6)
        y2, _ = conv.forward(np.ones((2, 4, freq * 2, 3)) * 0.5)
        assert np.allclose(y, y2)


@pytest.mark.parametrize("n_f", [256, 4096])
def test_time_conv_hidden_node_count(rng, n_f):
    conv = TimeChannelConv(n_f, 4, 3, 1, "mean", "t", rng)
    assert conv.out_shape((1, 4, 10, 3)) == (1, n_f)


def test_time_conv_pool_none_flattens(rng):
    conv = TimeChannelConv(6, 4, 3, 2, "none", "t", rng)
    # positions 0, 2, 4, 6, 8 -> 5 of them
    assert conv.out_shape((1, 4, 10, 3)) == (1, 5 * 6)


def test_bad_pool_rejected(rng):
    with pytest.raises(ValueError):
        TimeChannelConv(4, 4, 3, 1, "max", "t", rng)


# -- shape validation ---------------------------------------------------------------


def test_graph_rejects_shape_mismatch(rng):
    geom = FrameGeometry(frame_len=512, receptive_field=128, stride=128)
    bank = build_log_spaced(
        FilterbankSpec(n_filters=16, f_min=100, f_max=5000, receptive_field=128)
    )
    fb = FilterbankLayer(bank, geom, compress=True, eps=1e-11, trainable=False)
    wrong = Dense(99, 128, "out", rng)
    with pytest.raises(GraphShapeError, match="out"):
        ModelGraph([fb, Flatten(), wrong], geom)


def test_backward_rejects_bad_loss_grad():
    graph, geom = small_model()
    _, tape = graph.forward_batch(np.zeros((1, geom.frame_len)))
    with pytest.raises(GraphShapeError):
        backward(tape, np.zeros((1, 64)))


# -- init --------------------------------------------------------------------------


def test_init_statistics():
    rng = np.random.default_rng(99)
    p = Parameter("w", np.empty(100_000))
    init_scaled_uniform(p, rng, fan_in=300, fan_out=100)
    a = np.sqrt(6.0 / 400)
    assert np.all(np.abs(p.value) <= a)
    sigma_mean = a / np.sqrt(3.0 * p.value.size)
    assert abs(p.value.mean()) < 3.0 * sigma_mean


def test_biases_zero(rng):
    layer = Dense(10, 4, "d", rng)
    assert np.all(layer.b.value == 0.0)


def test_init_reproducible():
    p1 = init_scaled_uniform(Parameter("w", np.empty(50)), np.random.default_rng(5), 10, 5)
    p2 = init_scaled_uniform(Parameter("w", np.empty(50)), np.random.default_rng(5), 10, 5)
    assert np.array_equal(p1.value, p2.value)
