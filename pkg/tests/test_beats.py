import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sine
from rppg_bp.beats import (Beat, BeatTemplate, ScreenStatus, beat_sqi, compute_template, pad_beat,
                           preprocess, process_session, screen_session, segment_beats, select_windows)
from rppg_bp.errors import BeatTooLong, FewerThanTwoPeaks, NoBeats, ZeroVariance
from rppg_bp.signal_core import TimeSeries, detect_peaks, minmax_normalize
from rppg_bp.synth import MorphParams, Rhythm, RhythmPattern, synth_session


def beat(values, peak=None):
    v = np.asarray(values, dtype=float)
    return Beat(v, int(np.argmax(v)) if peak is None else peak, 0)


def pulse_train(n_beats=60, seconds=None):
    s = synth_session(RhythmPattern(Rhythm.NSR), MorphParams(), seconds or n_beats * 0.85 + 0.5, seed=3)
    return s


def alternating_noise_session(n=60, seed=0):
    r = np.random.default_rng(seed)
    segs = []
    for k in range(n):
        seg = 0.5 + 0.3 * (-1) ** k * np.cumsum(r.normal(size=60)) / np.sqrt(60)
        seg = np.clip(seg, 0, 0.69)
        seg[30] = 1.0
        segs.append(seg)
    return TimeSeries(np.concatenate(segs), 60.0)


class TestSegment:
    def test_sine(self):
        x = minmax_normalize(sine(1.0, seconds=10))
        beats = segment_beats(x, detect_peaks(x))
        assert len(beats) == 9
        # the first foot search is clipped at the start of the record
        assert all(abs(len(b) - 60) <= 1 for b in beats[1:])
        assert abs(len(beats[0]) - 60) <= 5

    def test_two_peaks(self):
        v = np.zeros(100)
        v[30], v[80] = 1.0, 1.0
        v[20:30] = np.linspace(0.1, 0.9, 10)
        x = TimeSeries(v, 60)
        beats = segment_beats(x, [30, 80])
        assert len(beats) == 1
        b = beats[0]
        assert b.start_index <= 30 < b.start_index + len(b)
        assert b.samples[b.peak_index] == 1.0

    def test_feet_low_on_pulse_train(self):
        s = pulse_train()
        x = preprocess(s.signal)
        for b in segment_beats(x, detect_peaks(x)):
            assert b.samples[0] < 0.3 * b.samples[b.peak_index]

    def test_each_beat_one_peak(self):
        s = pulse_train()
        x = preprocess(s.signal)
        peaks = detect_peaks(x)
        for b in segment_beats(x, peaks):
            inside = [p for p in peaks if b.start_index <= p < b.start_index + len(b)]
            assert inside == [b.start_index + b.peak_index]

    def test_fewer_than_two(self):
        with pytest.raises(FewerThanTwoPeaks):
            segment_beats(TimeSeries(np.zeros(10), 60), [5])


class TestTemplate:
    def test_identical(self):
        b = beat(np.sin(np.linspace(0, 3, 40)))
        t = compute_template([b, b, b])
        np.testing.assert_allclose(t.samples, b.samples)

    def test_zero_one(self):
        t = compute_template([beat(np.zeros(10), 0), beat(np.ones(10), 0)])
        np.testing.assert_allclose(t.samples, 0.5)

    def test_median_length(self):
        t = compute_template([beat(np.arange(n, dtype=float)) for n in (50, 60, 70)])
        assert t.template_len == 60

    def test_permutation_invariant(self, rng):
        beats = [beat(rng.normal(size=int(n))) for n in rng.integers(40, 70, 9)]
        a = compute_template(beats).samples
        b = compute_template([beats[i] for i in rng.permutation(9)]).samples
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_empty(self):
        with pytest.raises(NoBeats):
            compute_template([])


class TestSqi:
    def test_identical_and_inverted(self):
        shape = np.exp(-((np.arange(50) - 15) ** 2) / 40.0)
        t = BeatTemplate(shape)
        assert beat_sqi(beat(shape), t) == 1.0
        assert beat_sqi(beat(-shape), t) == 0.0

    def test_noise_low(self):
        t = BeatTemplate(np.sin(np.linspace(0, np.pi, 60)))
        noise = np.random.default_rng(11).normal(size=60)
        assert beat_sqi(beat(noise), t) < 0.8

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.01, 100), st.floats(-100, 100), st.integers(0, 10_000))
    def test_affine_invariance(self, a, b, seed):
        r = np.random.default_rng(seed)
        t = BeatTemplate(r.normal(size=40))
        x = r.normal(size=int(r.integers(20, 80)))
        assert beat_sqi(beat(a * x + b), t) == pytest.approx(beat_sqi(beat(x), t), abs=1e-9)

    def test_constant(self):
        with pytest.raises(ZeroVariance):
            beat_sqi(beat(np.ones(10), 0), BeatTemplate(np.arange(10.0)))


class TestWindows:
    def beats(self, n):
        return [Beat(np.arange(3.0), 2, i) for i in range(n)]

    def test_single(self):
        w = select_windows(self.beats(5), [0.9] * 5)
        assert len(w) == 1 and w[0].mean_sqi == pytest.approx(0.9)

    def test_too_few(self):
        assert select_windows(self.beats(4), [0.9] * 4) == []

    def test_ranking(self):
        w = select_windows(self.beats(7), [.9, .9, .9, .9, .9, .5, .9])
        assert [x.start_beat_index for x in w] == [0, 1, 2]
        assert w[1].mean_sqi == pytest.approx(0.82)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=0, max_size=60))
    def test_properties(self, sqis):
        beats = self.beats(len(sqis))
        ws = select_windows(beats, sqis)
        assert len(ws) <= 20
        for w in ws:
            assert w.mean_sqi > 0.8
            idx = [b.start_index for b in w.beats]
            assert idx == list(range(w.start_beat_index, w.start_beat_index + 5))
            assert w.mean_sqi == pytest.approx(np.mean(sqis[w.start_beat_index:w.start_beat_index + 5]))
        keys = [(-w.mean_sqi, w.start_beat_index) for w in ws]
        assert keys == sorted(keys)


class TestPad:
    def test_lengths(self):
        out = pad_beat(np.ones(300))
        assert len(out) == 512 and np.all(out[:300] == 1) and np.all(out[300:] == 0)
        np.testing.assert_array_equal(pad_beat(np.arange(512.0)), np.arange(512.0))
        with pytest.raises(BeatTooLong):
            pad_beat(np.ones(513))


class TestScreen:
    def test_49_peaks(self):
        v = np.zeros(49 * 30 + 10)
        v[5 + 30 * np.arange(49)] = 1.0
        r = screen_session(TimeSeries(v, 60))
        assert r.status is ScreenStatus.TOO_FEW_PEAKS and r.peak_count == 49

    def test_clean_accepted(self):
        x = preprocess(pulse_train(60).signal)
        r = screen_session(x)
        assert r.status is ScreenStatus.ACCEPTED and r.best_window_sqi > 0.95

    def test_alternating_noise_low_sqi(self):
        r = screen_session(alternating_noise_session())
        assert r.peak_count >= 50
        assert r.status is ScreenStatus.LOW_SQI

    @pytest.mark.parametrize("seed", range(4))
    def test_accepted_iff(self, seed):
        r = np.random.default_rng(seed)
        x = pulse_train(70).signal
        noisy = TimeSeries(x.samples + r.normal(0, 0.05 * seed, len(x)), 60)
        res = screen_session(preprocess(noisy))
        ok = res.peak_count >= 50 and res.best_window_sqi is not None and res.best_window_sqi > 0.8
        assert (res.status is ScreenStatus.ACCEPTED) == ok


class TestProcessSession:
    def test_paced_49_excluded(self):
        s = synth_session(RhythmPattern(Rhythm.PACED), MorphParams(), 49.0, seed=1)
        r = process_session(s.signal)
        assert r.screen.status is ScreenStatus.TOO_FEW_PEAKS and r.screen.peak_count == 49
        assert r.windows == []

    def test_windows_shape(self):
        r = process_session(pulse_train(seconds=120).signal)
        assert r.screen.status is ScreenStatus.ACCEPTED
        assert len(r.windows) == 20
        assert r.windows[0].to_array().shape == (5, 512)

    def test_no_sqi_screen_keeps_low_quality(self):
        s = synth_session(RhythmPattern(Rhythm.NSR), MorphParams(), 120, noise={"white_sd": 0.4}, seed=2)
        screened = process_session(s.signal, sqi_screen=True)
        unscreened = process_session(s.signal, sqi_screen=False)
        assert screened.screen.status is ScreenStatus.LOW_SQI and screened.windows == []
        assert len(unscreened.windows) == 20
        means = [w.mean_sqi for w in unscreened.windows]
        assert means == sorted(means, reverse=True) and max(means) <= 0.8
