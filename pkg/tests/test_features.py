import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from footlab.errors import FormatError
from footlab.features import (
    CHANNELS,
    FEATURES_PER_DEVICE,
    FeatureVector,
    SignalWindow,
    autocorrelation_samples,
    chi2_scores,
    dft_peaks,
    extract_features,
    feature_names,
    make_windows,
    moment_features,
    read_feature_bin,
    read_feature_csv,
    select_top_k,
    write_feature_bin,
    write_feature_csv,
)
from footlab.ingest import SensorReading


# --- independent oracles -----------------------------------------------------

def oracle_moments(x):
    x = np.asarray(x, dtype=float)
    mean = sum(x) / len(x)
    m2 = sum((v - mean) ** 2 for v in x) / len(x)
    m3 = sum((v - mean) ** 3 for v in x) / len(x)
    m4 = sum((v - mean) ** 4 for v in x) / len(x)
    return mean, m2, m3, m4


def oracle_autocorr(x, lag):
    x = np.asarray(x, dtype=float)
    mean = sum(x) / len(x)
    num = sum((x[i] - mean) * (x[i + lag] - mean) for i in range(len(x) - lag))
    den = sum((v - mean) ** 2 for v in x)
    return num / den


def oracle_dft_mag(x, b):
    w = len(x)
    re = sum(x[i] * np.cos(-2 * np.pi * i * b / w) for i in range(w))
    im = sum(x[i] * np.sin(-2 * np.pi * i * b / w) for i in range(w))
    return np.hypot(re, im)


def window_of(arrays: dict, duration=5.0, devices=("dev0",)):
    return SignalWindow(
        player_id="p1",
        period_id=1,
        start_t=0.0,
        duration_s=duration,
        samples=arrays,
        devices=devices,
    )


def full_window(rng, width=32, devices=("dev0",), duration=2.0):
    samples = {
        f"{dev}.{ch}": rng.normal(size=width) for dev in devices for ch in CHANNELS
    }
    return window_of(samples, duration=duration, devices=devices)


# --- moments -----------------------------------------------------------------

def test_constant_array_moments():
    assert moment_features(np.full(20, 3.5)) == (3.5, 3.5, 3.5, 0.0, 0.0, 0.0)


def test_symmetric_moments():
    mn, mx, mean, var, skew, kurt = moment_features(np.array([1.0, 2.0, 3.0, 4.0]))
    assert (mn, mx) == (1.0, 4.0)
    assert mean == 2.5
    assert var == 1.25
    assert skew == pytest.approx(0.0, abs=1e-12)


def test_moments_against_oracle():
    # frozen from the direct-sum oracle over [0, 0, 0, 1]
    x = np.array([0.0, 0.0, 0.0, 1.0])
    mn, mx, mean, var, skew, kurt = moment_features(x)
    _, m2, m3, m4 = oracle_moments(x)
    assert var == pytest.approx(m2, abs=1e-12)
    assert skew == pytest.approx(m3 / m2**1.5, abs=1e-12)
    assert kurt == pytest.approx(m4 / m2**2, abs=1e-12)
    assert skew == pytest.approx(1.1547005383792517, abs=1e-12)
    assert kurt == pytest.approx(7.0 / 3.0, abs=1e-12)


def test_moments_reject_short_input():
    with pytest.raises(ValueError):
        moment_features(np.array([1.0]))


# --- autocorrelation ----------------------------------------------------------

def test_autocorr_constant_is_zero():
    assert np.array_equal(autocorrelation_samples(np.full(32, 2.0)), np.zeros(10))


def test_autocorr_max_lag_formula():
    rng = np.random.default_rng(7)
    x = rng.normal(size=40)
    x -= x.mean()  # zero-mean so the closed form applies
    r = autocorrelation_samples(x)
    expected = x[0] * x[-1] / np.dot(x, x)
    assert r[9] == pytest.approx(expected, abs=1e-12)


def test_autocorr_cosine_against_oracle():
    # 5 Hz cosine sampled at 25 Hz; lag tau_2 = round(2*124/10) = 25 spans
    # five full cycles, so the direct-sum oracle fixes the expected value
    # (about (W - tau)/W for a pure tone).
    w = 125
    x = np.cos(2 * np.pi * 5 * np.arange(w) / 25)
    r = autocorrelation_samples(x)
    assert r[1] == pytest.approx(oracle_autocorr(x, 25), abs=1e-9)
    assert r[1] == pytest.approx((w - 25) / w, abs=0.02)


def test_autocorr_matches_oracle_at_all_sampled_lags():
    rng = np.random.default_rng(3)
    x = rng.normal(size=57)
    r = autocorrelation_samples(x)
    w = len(x)
    for j in range(1, 11):
        lag = int(np.floor(j * (w - 1) / 10 + 0.5))
        assert r[j - 1] == pytest.approx(oracle_autocorr(x, lag), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=16, max_size=80), st.integers(0, 2**32 - 1))
def test_autocorr_bounded(values, seed):
    x = np.array(values) + np.random.default_rng(seed).normal(scale=1e-6, size=len(values))
    r = autocorrelation_samples(x)
    assert np.all(np.abs(r) <= 1 + 1e-9)


# --- DFT peaks -----------------------------------------------------------------

def test_dft_constant_all_zero_pairs():
    assert dft_peaks(np.full(64, 9.0), fs=25.0) == [(0.0, 0.0)] * 5


def test_dft_pure_tone_peak():
    w, fs = 125, 25.0
    x = np.sin(2 * np.pi * 5 * np.arange(w) / fs)
    peaks = dft_peaks(x, fs)
    assert peaks[0][1] == 5.0
    assert peaks[0][0] == pytest.approx(oracle_dft_mag(x, 25), rel=1e-9)


def test_dft_two_tone_peaks():
    w, fs = 100, 25.0
    i = np.arange(w)
    x = np.sin(2 * np.pi * 3 * i / fs) + np.sin(2 * np.pi * 8 * i / fs)
    top_freqs = sorted(p[1] for p in dft_peaks(x, fs)[:2])
    assert top_freqs[0] == pytest.approx(3.0, rel=0.01)
    assert top_freqs[1] == pytest.approx(8.0, rel=0.01)


def test_dft_magnitudes_match_oracle():
    rng = np.random.default_rng(11)
    x = rng.normal(size=48)
    for mag, freq in dft_peaks(x, fs=48.0):
        if freq == 0.0 and mag == 0.0:
            continue
        b = int(round(freq * 48 / 48.0))
        assert mag == pytest.approx(oracle_dft_mag(x, b), rel=1e-9)


def test_dft_rejects_short_or_bad_fs():
    with pytest.raises(ValueError):
        dft_peaks(np.zeros(8), fs=10.0)
    with pytest.raises(ValueError):
        dft_peaks(np.zeros(32), fs=0.0)


# --- extract_features -----------------------------------------------------------

def test_feature_vector_length_one_device():
    rng = np.random.default_rng(0)
    vec = extract_features(full_window(rng), fs=16.0)
    assert vec.values.size == FEATURES_PER_DEVICE == 234


def test_feature_vector_length_five_devices():
    rng = np.random.default_rng(1)
    devices = tuple(f"dev{i}" for i in range(5))
    vec = extract_features(full_window(rng, devices=devices), fs=16.0)
    assert vec.values.size == 234 * 5 == 1170


def test_all_constant_window_pattern():
    c = 4.25
    samples = {f"dev0.{ch}": np.full(32, c) for ch in CHANNELS}
    vec = extract_features(window_of(samples, duration=2.0), fs=16.0)
    block = np.concatenate([[c, c, c], np.zeros(23)])
    assert np.allclose(vec.values, np.tile(block, len(CHANNELS)))


def test_scale_covariance():
    rng = np.random.default_rng(5)
    win = full_window(rng, width=64, duration=4.0)
    alpha = 3.7
    scaled_samples = {k: v * alpha for k, v in win.samples.items()}
    base = extract_features(win, fs=16.0).values.reshape(9, 26)
    scaled = extract_features(window_of(scaled_samples, 4.0), fs=16.0).values.reshape(9, 26)
    assert np.allclose(scaled[:, 0:3], base[:, 0:3] * alpha)          # min, max, mean
    assert np.allclose(scaled[:, 3], base[:, 3] * alpha**2)           # variance
    assert np.allclose(scaled[:, 4:16], base[:, 4:16], atol=1e-9)     # skew, kurt, autocorr
    assert np.allclose(scaled[:, 16:21], base[:, 16:21] * alpha)      # peak magnitudes
    assert np.allclose(scaled[:, 21:26], base[:, 21:26])              # peak frequencies


def test_feature_names_align_with_values():
    names = feature_names(["dev0"])
    assert len(names) == 234
    assert names[0] == "dev0.acc.x.min"
    assert names[3] == "dev0.acc.x.var"
    assert names[26] == "dev0.acc.y.min"
    assert names[-1] == "dev0.mag.z.peakfreq5"


# --- make_windows ----------------------------------------------------------------

def readings_for(duration_s, fs, player="p1", period=1, channels=CHANNELS, dev="dev0"):
    out = []
    n = int(round(duration_s * fs))
    for ch in channels:
        for i in range(n):
            out.append(
                SensorReading(
                    player_id=player,
                    t=i / fs,
                    signal_id=f"{dev}.{ch}",
                    value=float(np.sin(i / 7.0)),
                    period_id=period,
                )
            )
    return out


def test_windows_tile_five_minute_recording():
    windows = make_windows(readings_for(300.0, 25.0), duration_s=5.0, overlap_fraction=0.0)
    assert len(windows) == 60
    assert all(w.width == 125 for w in windows)


def test_incomplete_window_dropped():
    assert make_windows(readings_for(4.9, 25.0), duration_s=5.0) == []


def test_overlap_step_arithmetic():
    windows = make_windows(readings_for(10.0, 25.0), duration_s=5.0, overlap_fraction=0.5)
    assert [w.start_t for w in windows] == [0.0, 2.5, 5.0]


def test_gap_fill_and_drop():
    fs = 25.0
    base = readings_for(5.0, fs)
    # drop 3 samples (2.4%) from one channel: window survives via hold
    small_gap = [r for r in base if not (r.signal_id == "dev0.acc.x" and 10 <= r.t * fs < 13)]
    wins = make_windows(small_gap, duration_s=5.0)
    assert len(wins) == 1 and wins[0].width == 125
    # drop 10 samples (8%) from one channel: window goes away
    big_gap = [r for r in base if not (r.signal_id == "dev0.acc.x" and 10 <= r.t * fs < 20)]
    assert make_windows(big_gap, duration_s=5.0) == []


# --- chi2 + selection ----------------------------------------------------------

def vectors_from_matrix(x, labels, subjects=None):
    return [
        FeatureVector(
            values=np.asarray(row, dtype=float),
            subject_or_player=subjects[i] if subjects else f"s{i}",
            label=labels[i],
            window_ref=(0.0, 5.0),
        )
        for i, row in enumerate(x)
    ]


def test_chi2_constant_feature_scores_zero():
    x = np.ones((8, 3))
    x[:, 1] = np.arange(8)
    labels = ["a"] * 4 + ["b"] * 4
    scores = chi2_scores(vectors_from_matrix(x, labels))
    assert scores[0] == 0.0
    assert scores[2] == 0.0


def test_chi2_planted_binary_feature():
    # feature 0 is 1 on class a and 0 on class b; balanced classes of m
    m = 6
    x = np.zeros((2 * m, 2))
    x[:m, 0] = 1.0
    x[:, 1] = 0.5
    labels = ["a"] * m + ["b"] * m
    scores = chi2_scores(vectors_from_matrix(x, labels))
    assert scores[0] == pytest.approx(m, abs=1e-12)


def test_chi2_order_independent():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(20, 5))
    labels = ["a", "b"] * 10
    base = chi2_scores(vectors_from_matrix(x, labels))
    perm = rng.permutation(20)
    shuffled = chi2_scores(vectors_from_matrix(x[perm], [labels[i] for i in perm]))
    assert np.allclose(base, shuffled, atol=1e-9)


def test_chi2_affine_invariance():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(30, 4))
    labels = [("a" if i % 3 else "b") for i in range(30)]
    base = chi2_scores(vectors_from_matrix(x, labels))
    rescaled = x * np.array([2.0, 5.0, 0.25, 10.0]) + np.array([-3.0, 0.0, 7.0, 1e4])
    again = chi2_scores(vectors_from_matrix(rescaled, labels))
    assert np.allclose(base, again, atol=1e-9)


def test_chi2_rejects_single_class():
    x = np.random.default_rng(0).normal(size=(4, 2))
    with pytest.raises(ValueError):
        chi2_scores(vectors_from_matrix(x, ["a"] * 4))


def test_select_top_k_ordering_and_ties():
    assert select_top_k(np.array([3.0, 1.0, 2.0]), 2).selected == [0, 2]
    assert select_top_k(np.array([5.0, 5.0, 1.0]), 1).selected == [0]
    assert select_top_k(np.array([1.0, 3.0, 2.0]), 3).selected == [1, 2, 0]
    with pytest.raises(ValueError):
        select_top_k(np.array([1.0, 2.0]), 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_arity_property(seed, n_devices):
    rng = np.random.default_rng(seed)
    devices = tuple(f"d{i}" for i in range(n_devices))
    win = full_window(rng, width=int(rng.integers(16, 48)), devices=devices)
    assert extract_features(win, fs=16.0).values.size == 234 * n_devices


# --- export round trips -----------------------------------------------------------

def test_feature_csv_round_trip():
    rng = np.random.default_rng(4)
    vecs = [extract_features(full_window(rng), fs=16.0) for _ in range(3)]
    vecs[0].label = "running"
    data = write_feature_csv(vecs, devices=("dev0",))
    back, names = read_feature_csv(data)
    assert names == feature_names(["dev0"])
    assert len(back) == 3
    assert back[0].label == "running" and back[1].label is None
    for a, b in zip(vecs, back):
        assert np.array_equal(a.values, b.values)
        assert a.window_ref == b.window_ref


def test_feature_bin_round_trip_and_errors():
    m = np.random.default_rng(6).normal(size=(7, 11))
    data = write_feature_bin(m)
    assert np.array_equal(read_feature_bin(data), m)
    with pytest.raises(FormatError):
        read_feature_bin(data[:-8])
    with pytest.raises(FormatError):
        read_feature_bin(b"\x01")
