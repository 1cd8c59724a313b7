import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_recording
from helpers import tone
from notebank.audio import FrameGeometry, extract_frame
from notebank.augment import ShiftSpec, pitch_shift, random_shift, shift_labels
from notebank.filterbank import FilterbankSpec, apply, build_log_spaced
from notebank.synth import SynthSpec, midi_to_hz, render_note

GEOM = FrameGeometry()
BANK_SPEC = FilterbankSpec()
BANK = build_log_spaced(BANK_SPEC)


def argmax_channel(frame_samples) -> int:
    sg = apply(BANK, frame_samples, GEOM)
    return int(np.argmax(sg.values.sum(axis=0)))


def nearest_channel(freq: float) -> int:
    return int(np.argmin(np.abs(BANK.center_freqs - freq)))


# -- pitch_shift -----------------------------------------------------------------


def test_zero_shift_equals_extract_frame(rng):
    rec = make_recording(rng.uniform(-0.9, 0.9, size=40000))
    plain = extract_frame(rec, 17000, GEOM)
    shifted = pitch_shift(rec, 17000, GEOM, ShiftSpec(0, 0.0))
    assert np.array_equal(plain.samples, shifted.samples)
    assert plain.norm_applied == shifted.norm_applied


def test_shift_rate():
    assert ShiftSpec(0, 0.0).rate == 1.0
    assert ShiftSpec(12 // 12 * 5, 0.0).rate == pytest.approx(2 ** (5 / 12))
    assert ShiftSpec(-5, -0.1).rate == pytest.approx(2 ** (-5.1 / 12))


def test_shift_bounds_enforced():
    with pytest.raises(ValueError):
        ShiftSpec(6, 0.0)
    with pytest.raises(ValueError):
        ShiftSpec(0, 0.2)


def test_tone_shift_up_five_semitones():
    rec = make_recording(tone(440.0, 44100, amp=0.7))
    frame = pitch_shift(rec, 22050, GEOM, ShiftSpec(5, 0.0))
    target = 440.0 * 2 ** (5 / 12)  # ~587.3 Hz
    assert abs(argmax_channel(frame.samples) - nearest_channel(target)) <= 1


def test_round_trip_three_semitones():
    rec = make_recording(tone(2500.0, 40000, amp=0.8))
    up = pitch_shift(rec, 20000, GEOM, ShiftSpec(3, 0.0))
    rec_up = make_recording(up.samples)
    back = pitch_shift(rec_up, GEOM.frame_len // 2, GEOM, ShiftSpec(-3, 0.0))
    original = extract_frame(rec, 20000, GEOM)
    assert np.max(np.abs(back.samples - original.samples)) < 0.02


def test_shift_reads_zero_beyond_edges():
    rec = make_recording(0.5 * np.ones(10000))
    frame = pitch_shift(rec, 0, GEOM, ShiftSpec(5, 0.0))
    # left half reads before the recording start
    assert np.all(frame.samples[: GEOM.frame_len // 4] == 0.0)
    assert not frame.is_silent


def test_silent_source_flagged():
    rec = make_recording(np.zeros(40000))
    frame = pitch_shift(rec, 20000, GEOM, ShiftSpec(2, 0.05))
    assert frame.is_silent


# -- label shifting ----------------------------------------------------------------


def test_shift_labels_up():
    y = np.zeros(128)
    y[60] = 1.0
    assert shift_labels(y, 5)[65] == 1.0
    assert shift_labels(y, 5).sum() == 1.0


def test_shift_labels_identity():
    y = np.zeros(128)
    y[[3, 60, 127]] = 1.0
    assert np.array_equal(shift_labels(y, 0), y)


def test_shift_labels_drops_out_of_range():
    y = np.zeros(128)
    y[125] = 1.0
    assert shift_labels(y, 5).sum() == 0.0
    y2 = np.zeros(128)
    y2[2] = 1.0
    assert shift_labels(y2, -5).sum() == 0.0


@settings(max_examples=50, deadline=None)
@given(
    s=st.integers(min_value=-5, max_value=5),
    notes=st.sets(st.integers(min_value=0, max_value=127), max_size=8),
)
def test_shift_labels_round_trip(s, notes):
    y = np.zeros(128)
    y[list(notes)] = 1.0
    survivors = {n for n in notes if 0 <= n + s <= 127}
    back = shift_labels(shift_labels(y, s), -s)
    if survivors == notes:
        assert np.array_equal(back, y)
    else:
        expected = np.zeros(128)
        expected[list(survivors)] = 1.0
        assert np.array_equal(back, expected)


# -- random_shift ------------------------------------------------------------------


def test_random_shift_distribution():
    rng = np.random.default_rng(0)
    draws = 11000
    shifts = [random_shift(rng) for _ in range(draws)]
    integrals = np.array([s.integral for s in shifts])
    continuous = np.array([s.continuous for s in shifts])

    p = 1.0 / 11.0
    sigma = np.sqrt(draws * p * (1 - p))
    for value in range(-5, 6):
        count = np.count_nonzero(integrals == value)
        assert abs(count - draws * p) < 3 * sigma

    assert np.all(np.abs(continuous) <= 0.1)
    sigma_mean = (0.2 / np.sqrt(12.0)) / np.sqrt(draws)
    assert abs(continuous.mean()) < 3 * sigma_mean


def test_random_shift_deterministic():
    a = [random_shift(np.random.default_rng(42)) for _ in range(5)]
    b = [random_shift(np.random.default_rng(42)) for _ in range(5)]
    assert a == b


# -- audio/label consistency ---------------------------------------------------------


def test_shifted_note_matches_target_note_rendering():
    # the testable core of "label-preserving": shifting note n by s lands on
    # the channel of an unshifted rendering of note n+s
    rng = np.random.default_rng(9)
    synth = SynthSpec(n_partials=4, amp_jitter=0.0, partial_decay=0.4)
    for _ in range(10):
        n = int(rng.integers(45, 85))
        s = int(rng.integers(-5, 6))
        src = render_note(n, 44100, rng, synth)
        rec = make_recording(0.9 * src / np.max(np.abs(src)))
        shifted = pitch_shift(rec, 22050, GEOM, ShiftSpec(s, 0.0))

        target = render_note(n + s, GEOM.frame_len, rng, synth)
        target = target / np.linalg.norm(target)
        assert abs(argmax_channel(shifted.samples) - argmax_channel(target)) <= 1, (n, s)


def test_continuous_shift_stays_within_channel():
    rec = make_recording(tone(880.0, 44100, amp=0.7))
    plain = extract_frame(rec, 22050, GEOM)
    nudged = pitch_shift(rec, 22050, GEOM, ShiftSpec(0, 0.1))
    # 0.1 semitone is well under one channel spacing at ~74 channels/octave
    assert abs(argmax_channel(plain.samples) - argmax_channel(nudged.samples)) <= 1
