import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from freezenet.errors import DegenerateTrialError, DomainError, InsufficientLengthError, RangeError
from freezenet.preprocess import (
    align_splits,
    blackman_window,
    crop_trials,
    design_bandpass_fir,
    epoch,
    euclidean_align,
    filter_signal,
    mean_covariance,
    normalize_trial,
    preprocess_split,
)
from freezenet.trials import Trial, TrialSet

FS = 250.0


@pytest.fixture(scope="module")
def mi_filter():
    return design_bandpass_fir(4.0, 38.0, FS, 200)


def dtft_gain(taps, f, fs):
    """|H(f)| by a direct sum, independent of FirFilter.response."""
    n = np.arange(len(taps))
    return abs(sum(taps * np.exp(-2j * np.pi * f * n / fs)))


def sine_amplitude(y, f, fs):
    """Least-squares amplitude of a sinusoid at ``f`` in ``y``."""
    t = np.arange(len(y)) / fs
    basis = np.column_stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return float(np.hypot(*coef))


def make_set(arrays, labels=None, fs=FS):
    labels = labels or [0] * len(arrays)
    return TrialSet([Trial(a, lab) for a, lab in zip(arrays, labels)], fs, ["a", "b"])


class TestFirDesign:
    def test_tap_count(self, mi_filter):
        assert len(mi_filter.taps) == 201 and mi_filter.order == 200

    def test_exact_symmetry(self, mi_filter):
        taps = mi_filter.taps
        assert all(taps[i] == taps[200 - i] for i in range(201))

    def test_blackman_coefficients(self):
        w = blackman_window(8)
        n = np.arange(9)
        expected = 0.42 - 0.5 * np.cos(2 * np.pi * n / 8) + 0.08 * np.cos(4 * np.pi * n / 8)
        assert np.allclose(w, expected, atol=1e-15)

    def test_dc_gain(self, mi_filter):
        assert abs(mi_filter.taps.sum()) < 0.01

    def test_band_center_gain(self, mi_filter):
        g = dtft_gain(mi_filter.taps, np.sqrt(4.0 * 38.0), FS)
        assert 0.99 <= g <= 1.01

    @pytest.mark.parametrize("f", [0.5, 120.0])
    def test_stopband_gain(self, mi_filter, f):
        assert dtft_gain(mi_filter.taps, f, FS) < 0.05

    def test_response_matches_direct_sum(self, mi_filter):
        for f in (1.0, 10.0, 50.0):
            assert abs(mi_filter.response(f)[0]) == pytest.approx(dtft_gain(mi_filter.taps, f, FS), rel=1e-12)

    @pytest.mark.parametrize("band", [(0.0, 38.0), (38.0, 4.0), (4.0, 125.0), (4.0, 200.0)])
    def test_bad_band(self, band):
        with pytest.raises(DomainError):
            design_bandpass_fir(*band, FS)

    def test_odd_order_rejected(self):
        with pytest.raises(DomainError):
            design_bandpass_fir(4.0, 38.0, FS, 201)

    def test_motor_execution_band(self):
        fir = design_bandpass_fir(4.0, 120.0, 500.0)
        assert dtft_gain(fir.taps, np.sqrt(4 * 120.0), 500.0) == pytest.approx(1.0, abs=1e-12)


class TestFilterSignal:
    def test_zero_signal(self, mi_filter):
        assert np.array_equal(filter_signal(np.zeros((2, 500)), mi_filter), np.zeros((2, 500)))

    def test_shape_preserved(self, mi_filter):
        assert filter_signal(np.ones((3, 400)), mi_filter).shape == (3, 400)

    def test_too_short(self, mi_filter):
        with pytest.raises(InsufficientLengthError):
            filter_signal(np.ones((1, 200)), mi_filter)

    def test_passband_sine(self, mi_filter):
        f = np.sqrt(4.0 * 38.0)
        t = np.arange(2000) / FS
        x = np.sin(2 * np.pi * f * t + 0.3)[None, :]
        y = filter_signal(x, mi_filter)[0]
        core = slice(200, 2000 - 200)
        assert abs(sine_amplitude(y[core], f, FS) - 1.0) < 0.02
        # group delay removed: output in phase with input
        assert np.max(np.abs(y[core] - x[0, core])) < 0.02

    def test_stopband_sine(self, mi_filter):
        t = np.arange(5000) / FS
        x = np.sin(2 * np.pi * 0.5 * t)[None, :]
        y = filter_signal(x, mi_filter)[0]
        assert sine_amplitude(y[200:-200], 0.5, FS) < 0.05

    def test_matches_centered_convolution(self, mi_filter, rng):
        x = rng.standard_normal((2, 600))
        y = filter_signal(x, mi_filter)
        for c in range(2):
            full = np.convolve(x[c], mi_filter.taps)
            assert np.allclose(y[c, :500], full[100:600], atol=1e-14)
            assert np.all(y[c, 500:] == 0.0)


class TestNormalize:
    def test_divides_by_max(self):
        data = np.array([[1.0, -5.0], [2.5, 0.0]])
        out = normalize_trial(Trial(data, 0)).data
        assert np.array_equal(out, data / 5.0)
        assert np.max(np.abs(out)) == 1.0

    def test_idempotent(self, rng):
        once = normalize_trial(Trial(rng.standard_normal((3, 50)), 0))
        twice = normalize_trial(once)
        assert np.array_equal(once.data, twice.data)

    @settings(max_examples=50, deadline=None)
    @given(
        hnp.arrays(np.float64, (3, 7), elements=st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-3)),
        st.floats(1e-3, 1e3),
    )
    def test_scale_invariant_and_sign_preserving(self, data, c):
        a = normalize_trial(Trial(data, 0)).data
        b = normalize_trial(Trial(c * data, 0)).data
        assert np.max(np.abs(a)) == 1.0
        assert np.all(np.abs(a - b) <= np.spacing(1.0))
        assert np.array_equal(np.sign(a), np.sign(data))

    def test_zero_trial(self):
        with pytest.raises(DegenerateTrialError):
            normalize_trial(Trial(np.zeros((2, 4)), 0))


class TestEuclideanAlign:
    def test_identity_when_already_white(self):
        # two trials whose covariances average to the identity
        x1 = np.array([[1.0, 0.0], [0.0, 1.0]])
        x2 = np.array([[1.0, 0.0], [0.0, -1.0]])
        s = make_set([x1, x2])
        assert np.allclose(mean_covariance([x1, x2]), np.eye(2))
        out = euclidean_align(s)
        for a, b in zip(out.trials, s.trials):
            assert np.max(np.abs(a.data - b.data)) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_aligned_mean_covariance_is_identity(self, seed):
        r = np.random.default_rng(seed)
        mix = r.standard_normal((6, 6))
        s = make_set([mix @ r.standard_normal((6, 120)) for _ in range(15)])
        out = euclidean_align(s)
        r_bar = sum(t.data @ t.data.T for t in out.trials) / len(out)
        assert np.linalg.norm(r_bar - np.eye(6)) < 1e-6

    def test_single_trial(self, rng):
        out = euclidean_align(make_set([rng.standard_normal((4, 30))]))
        x = out.trials[0].data
        assert np.linalg.norm(x @ x.T - np.eye(4)) < 1e-6

    def test_matrix_in_meta(self, rng):
        s = make_set([rng.standard_normal((3, 20)) for _ in range(4)])
        out = euclidean_align(s)
        m = out.meta["alignment_matrix"]
        assert np.allclose(out.trials[0].data, m @ s.trials[0].data)

    def test_empty(self):
        with pytest.raises(DomainError):
            euclidean_align(TrialSet([], FS, ["a"]))

    def test_per_split_reuses_training_matrix(self, rng):
        train = make_set([rng.standard_normal((3, 40)) for _ in range(6)])
        test = make_set([5.0 * rng.standard_normal((3, 40)) for _ in range(4)])
        a_train, a_test = align_splits(train, test, "per_split")
        m = euclidean_align(train).meta["alignment_matrix"]
        assert np.array_equal(a_test.meta["alignment_matrix"], m)
        for aligned, raw in zip(a_test.trials, test.trials):
            assert np.array_equal(aligned.data, m @ raw.data)
        # test statistics did not leak: the test split is not whitened
        r_test = sum(t.data @ t.data.T for t in a_test.trials) / len(a_test)
        assert np.linalg.norm(r_test - np.eye(3)) > 1.0

    def test_pooled_and_none(self, rng):
        train = make_set([rng.standard_normal((3, 40)) for _ in range(6)])
        test = make_set([rng.standard_normal((3, 40)) for _ in range(4)])
        a_train, a_test = align_splits(train, test, "pooled")
        both = a_train.trials + a_test.trials
        assert np.linalg.norm(sum(t.data @ t.data.T for t in both) / 10 - np.eye(3)) < 1e-6
        assert align_splits(train, test, "none") == (train, test)
        with pytest.raises(DomainError):
            align_splits(train, test, "session")


class TestEpoch:
    @pytest.mark.parametrize("window, length", [((2, 6), 1000), ((2, 5), 750), ((1.5, 6), 1125)])
    def test_window_lengths(self, window, length):
        rec = np.zeros((2, 5000))
        out = epoch(rec, [0, 1000, 2500], window, FS, labels=[0, 1, 0])
        assert out.sample_count == length and len(out) == 3

    def test_half_open_range(self):
        rec = np.arange(3000, dtype=float)[None, :]
        out = epoch(rec, [100], (2, 3), FS)
        assert out.trials[0].data[0, 0] == 600.0 and out.trials[0].data[0, -1] == 849.0

    def test_out_of_range_lists_cues(self):
        rec = np.zeros((1, 2000))
        with pytest.raises(RangeError, match=r"\[1, 2\]"):
            epoch(rec, [0, 900, 1500], (2, 6), FS)

    def test_crop_trials(self, rng):
        s = make_set([rng.standard_normal((2, 1500)) for _ in range(2)])
        out = crop_trials(s, (1.5, 6.0))
        assert out.sample_count == 1125
        assert np.array_equal(out.trials[1].data, s.trials[1].data[:, 375:1500])
        with pytest.raises(RangeError):
            crop_trials(s, (2.0, 7.0))


def test_pipeline_deterministic(mi_filter, rng):
    arrays = [rng.standard_normal((4, 1000)) for _ in range(6)]
    train = make_set(arrays[:4], [0, 1, 0, 1])
    test = make_set(arrays[4:], [1, 0])

    def run():
        a = preprocess_split(train, mi_filter, (0.5, 3.5))
        b = preprocess_split(test, mi_filter, (0.5, 3.5))
        return align_splits(a, b, "per_split")

    first, second = run(), run()
    for x, y in zip(first, second):
        assert x.X().tobytes() == y.X().tobytes()
    assert first[0].sample_count == 750
