import numpy as np
import pytest

from notebank.audio import FrameGeometry
from notebank.dataset import DatasetSplit
from notebank.errors import GraphShapeError
from notebank.filterbank import FilterbankSpec
from notebank.metrics import score_frames
from notebank.models import (
    ModelSpec,
    build_model,
    layer_two_map,
    predict,
    shift_equivariance_probe,
    spectrogram_of,
)
from notebank.synth import SynthSpec, midi_to_hz, render_note, synth_corpus


DEFAULT_GEOM = FrameGeometry()


def default_frontend(**kw):
    return FilterbankSpec(**kw)


# -- build validation -----------------------------------------------------------


def test_invariant_rejects_learned_frontend():
    with pytest.raises(GraphShapeError, match="fixed frontend"):
        ModelSpec(family="translation_invariant", learned_frontend=True)


def test_invariant_requires_log_windowed_compressed():
    with pytest.raises(GraphShapeError):
        ModelSpec(family="translation_invariant", frontend=FilterbankSpec(kind="stft"))
    with pytest.raises(GraphShapeError):
        ModelSpec(family="translation_invariant", frontend=FilterbankSpec(windowed=False))


def test_channel_conv_requires_learned():
    with pytest.raises(GraphShapeError, match="learned"):
        ModelSpec(family="channel_conv", learned_frontend=False)


def test_unknown_family():
    with pytest.raises(ValueError):
        ModelSpec(family="four_layer")


def test_frontend_geometry_mismatch():
    spec = ModelSpec(
        family="two_layer", frontend=FilterbankSpec(receptive_field=2048)
    )
    with pytest.raises(GraphShapeError, match="receptive field"):
        build_model(spec, DEFAULT_GEOM, np.random.default_rng(0))


# -- parameter counts --------------------------------------------------------------


def test_translation_invariant_default_count():
    spec = ModelSpec(family="translation_invariant")
    graph = build_model(spec, DEFAULT_GEOM, np.random.default_rng(0))
    l2 = 128 * 128 * 1
    l3 = 256 * 25 * 128
    out = 256 * 128 + 128
    assert graph.param_count(trainable_only=True) == l2 + l3 + out
    by_name = {name: p.value.size for name, p in graph.params.items() if p.trainable}
    assert by_name == {
        "conv_freq/filt": l2,
        "conv_time/filt": l3,
        "out/W": 256 * 128,
        "out/b": 128,
    }


def test_two_layer_stft_count():
    spec = ModelSpec(
        family="two_layer",
        frontend=FilterbankSpec(kind="stft", windowed=False),
    )
    graph = build_model(spec, DEFAULT_GEOM, np.random.default_rng(0))
    assert graph.param_count(trainable_only=True) == 25 * 557 * 128 + 128


def test_channel_conv_adds_frontend_weights():
    ti = build_model(
        ModelSpec(family="translation_invariant"), DEFAULT_GEOM, np.random.default_rng(0)
    )
    cc = build_model(
        ModelSpec(family="channel_conv", learned_frontend=True),
        DEFAULT_GEOM, np.random.default_rng(0),
    )
    assert cc.param_count() - ti.param_count() == 512 * 2 * 4096


def test_parameter_count_ordering():
    # the invariant network is smaller than the dense three-layer one
    ti = build_model(
        ModelSpec(family="translation_invariant", hidden3=256),
        DEFAULT_GEOM, np.random.default_rng(0),
    )
    three = build_model(
        ModelSpec(family="three_layer", hidden3=256),
        DEFAULT_GEOM, np.random.default_rng(0),
    )
    assert ti.param_count() < three.param_count()


# -- predict ------------------------------------------------------------------------


def small_ti_graph(seed=0):
    geom = FrameGeometry(frame_len=2048, receptive_field=512, stride=512)
    fb = FilterbankSpec(n_filters=48, f_min=80.0, f_max=5500.0, receptive_field=512)
    spec = ModelSpec(
        family="translation_invariant", frontend=fb,
        hidden3=8, l2_filters=4, l2_height=12,
    )
    return build_model(spec, geom, np.random.default_rng(seed)), geom


def test_zero_output_layer_predicts_bias(rng):
    graph, geom = small_ti_graph()
    graph.params["out/W"].value[...] = 0.0
    graph.params["out/b"].value[...] = rng.normal(size=128)
    scores = predict(graph, rng.normal(size=geom.frame_len))
    assert np.allclose(scores, graph.params["out/b"].value)


def test_scores_finite_on_synthetic_corpus():
    graph, geom = small_ti_graph()
    spec = SynthSpec(n_recordings=3, n_test=3, duration_range=(1.5, 2.0))
    recordings, events = synth_corpus(spec, np.random.default_rng(2))
    split = DatasetSplit((), tuple(r.id for r in recordings), sampling_stride=4096)
    frames = score_frames(graph, recordings, events, split, geom)
    assert frames
    for f in frames:
        assert np.all(np.isfinite(f.scores))


# -- equivariance probe ---------------------------------------------------------------


def test_probe_zero_shift_is_exact():
    graph, geom = small_ti_graph()
    frame = np.random.default_rng(1).normal(size=geom.frame_len)
    assert shift_equivariance_probe(graph, frame, 0) == 0.0


def test_probe_small_shift_below_1e12():
    graph, geom = small_ti_graph()
    frame = np.random.default_rng(2).normal(size=geom.frame_len)
    for s in (7, -7, 12):
        assert shift_equivariance_probe(graph, frame, s) < 1e-12


def test_probe_rejects_oversized_shift():
    graph, geom = small_ti_graph()
    frame = np.zeros(geom.frame_len)
    with pytest.raises(ValueError):
        shift_equivariance_probe(graph, frame, 48)


def test_probe_requires_invariant_family():
    geom = FrameGeometry(frame_len=2048, receptive_field=512, stride=512)
    fb = FilterbankSpec(n_filters=16, f_min=80.0, f_max=5000.0, receptive_field=512)
    graph = build_model(
        ModelSpec(family="two_layer", frontend=fb), geom, np.random.default_rng(0)
    )
    with pytest.raises(ValueError):
        shift_equivariance_probe(graph, np.zeros(geom.frame_len), 3)


def test_octave_pair_correlation_improves_after_channel_shift():
    # a note and its octave produce layer-two maps that line up better after
    # shifting by one octave's worth of channels
    graph, geom = small_ti_graph(seed=5)
    fb_spec = graph.spec.frontend
    rng = np.random.default_rng(6)
    synth = SynthSpec(n_partials=4, amp_jitter=0.0)

    note = 52
    low = render_note(note, geom.frame_len, np.random.default_rng(7), synth)
    high = render_note(note + 12, geom.frame_len, np.random.default_rng(7), synth)
    low /= np.linalg.norm(low)
    high /= np.linalg.norm(high)

    a = layer_two_map(graph, low)
    b = layer_two_map(graph, high)
    channels_per_octave = (fb_spec.n_filters - 1) / np.log2(fb_spec.f_max / fb_spec.f_min)
    s = int(round(channels_per_octave))

    def corr(u, v):
        u = u.ravel() - u.mean()
        v = v.ravel() - v.mean()
        return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))

    p = a.shape[1]
    shifted = corr(a[:, : p - s, :], b[:, s:, :])
    plain = corr(a, b)
    assert shifted > plain


def test_spectrogram_of_shape():
    graph, geom = small_ti_graph()
    sg = spectrogram_of(graph, np.zeros(geom.frame_len))
    assert sg.shape == (geom.regions, 48, 1)


def test_learned_frontend_differs_from_generated():
    spec = ModelSpec(
        family="channel_conv", learned_frontend=True,
        frontend=FilterbankSpec(n_filters=8, receptive_field=512),
        hidden3=4, l2_filters=2, l2_height=3,
    )
    geom = FrameGeometry(frame_len=1024, receptive_field=512, stride=512)
    graph = build_model(spec, geom, np.random.default_rng(3))
    fb = graph.layers[0]
    assert fb.w_sin.trainable
    # random init, not sinusoids: values bounded by the init scale
    assert np.max(np.abs(fb.w_sin.value)) < 0.2
