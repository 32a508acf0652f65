"""Sliding-window segmentation and per-signal feature extraction.

Each signal window yields 26 statistics per channel: min, max, mean,
variance, skewness, kurtosis, ten autocorrelation samples, and the five
largest DFT peaks (magnitudes then frequencies). Nine channels per device
gives 234 features per device.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError
from .ingest import SensorReading

SENSORS = ("acc", "gyro", "mag")
AXES = ("x", "y", "z")
CHANNELS = tuple(f"{s}.{a}" for s in SENSORS for a in AXES)
FEATURES_PER_SIGNAL = 26
FEATURES_PER_DEVICE = FEATURES_PER_SIGNAL * len(CHANNELS)

SIGNAL_FEATURE_NAMES = (
    ("min", "max", "mean", "var", "skew", "kurt")
    + tuple(f"ac{j}" for j in range(1, 11))
    + tuple(f"peakmag{j}" for j in range(1, 6))
    + tuple(f"peakfreq{j}" for j in range(1, 6))
)

# Variance below this is treated as a constant signal.
_DEGENERATE_VAR = 1e-24


@dataclass
class SignalWindow:
    """One fixed-duration slice of every channel of one player's devices."""

    player_id: str
    period_id: int
    start_t: float
    duration_s: float
    samples: dict[str, np.ndarray]
    devices: tuple[str, ...]

    @property
    def width(self) -> int:
        return len(next(iter(self.samples.values())))


@dataclass
class FeatureVector:
    values: np.ndarray
    subject_or_player: str
    label: str | None
    window_ref: tuple[float, float]
    devices: tuple[str, ...] = ()


@dataclass
class FeatureSelection:
    """Chi-squared scores and the indices of the k best features."""

    scores: np.ndarray
    selected: list[int]

    @property
    def k(self) -> int:
        return len(self.selected)


def feature_names(devices: Sequence[str]) -> list[str]:
    """Canonical column names, e.g. ``dev0.acc.x.var``."""
    return [
        f"{dev}.{ch}.{feat}"
        for dev in devices
        for ch in CHANNELS
        for feat in SIGNAL_FEATURE_NAMES
    ]


def moment_features(x: np.ndarray) -> tuple[float, float, float, float, float, float]:
    """(min, max, mean, variance, skewness, kurtosis) with population moments.

    Skewness is m3/m2^1.5 and kurtosis is Pearson m4/m2^2 (normal -> 3);
    both are 0 by convention when the variance is degenerate.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("moment_features requires at least 2 samples")
    mean = float(x.mean())
    d = x - mean
    m2 = float(np.mean(d * d))
    if m2 < _DEGENERATE_VAR:
        skew = kurt = 0.0
    else:
        m3 = float(np.mean(d**3))
        m4 = float(np.mean(d**4))
        skew = m3 / m2**1.5
        kurt = m4 / (m2 * m2)
    return float(x.min()), float(x.max()), mean, m2, skew, kurt


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def autocorrelation_samples(x: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation at ten equidistant lags over 1..W-1.

    r(tau) = sum_i (x_i - mean)(x_{i+tau} - mean) / sum_i (x_i - mean)^2,
    sampled at lags round(j*(W-1)/10) for j = 1..10. A degenerate-variance
    signal yields all zeros.
    """
    x = np.asarray(x, dtype=float)
    w = x.size
    if w < 16:
        raise ValueError("autocorrelation_samples requires at least 16 samples")
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if denom / w < _DEGENERATE_VAR:
        return np.zeros(10)
    lags = [_round_half_up(j * (w - 1) / 10) for j in range(1, 11)]
    return np.array([float(np.dot(d[: w - lag], d[lag:])) / denom for lag in lags])


def dft_peaks(x: np.ndarray, fs: float) -> list[tuple[float, float]]:
    """Five largest local maxima of the magnitude spectrum, DC excluded.

    Returns (magnitude, frequency_hz) pairs in descending magnitude,
    padded with (0, 0) when fewer than five peaks exist. Bins run
    1..floor(W/2); boundary bins compare only their existing neighbour.
    """
    x = np.asarray(x, dtype=float)
    w = x.size
    if w < 16:
        raise ValueError("dft_peaks requires at least 16 samples")
    if fs <= 0:
        raise ValueError("fs must be positive")
    # mean removal leaves bins >= 1 unchanged but keeps a constant signal's
    # round-off from producing spurious peaks
    spectrum = np.abs(np.fft.rfft(x - x.mean()))
    hi = w // 2
    mags = spectrum[1 : hi + 1]
    n = mags.size
    peaks = []
    for i in range(n):
        left_ok = i == 0 or mags[i] >= mags[i - 1]
        right_ok = i == n - 1 or mags[i] > mags[i + 1]
        if left_ok and right_ok and mags[i] > 0:
            peaks.append((float(mags[i]), (i + 1) * fs / w))
    # descending magnitude, lower frequency first on exact ties
    peaks.sort(key=lambda p: (-p[0], p[1]))
    peaks = peaks[:5]
    peaks += [(0.0, 0.0)] * (5 - len(peaks))
    return peaks


def extract_signal_features(x: np.ndarray, fs: float) -> np.ndarray:
    """The 26-value feature block for one channel."""
    mn, mx, mean, var, skew, kurt = moment_features(x)
    ac = autocorrelation_samples(x)
    peaks = dft_peaks(x, fs)
    out = np.empty(FEATURES_PER_SIGNAL)
    out[0:6] = (mn, mx, mean, var, skew, kurt)
    out[6:16] = ac
    out[16:21] = [p[0] for p in peaks]
    out[21:26] = [p[1] for p in peaks]
    return out


def extract_features(window: SignalWindow, fs: float | None = None) -> FeatureVector:
    """Full feature vector for a window: 234 values per device.

    Channel order is device, then sensor acc/gyro/mag, then axis x/y/z.
    """
    if fs is None:
        fs = window.width / window.duration_s
    blocks = []
    for dev in window.devices:
        for ch in CHANNELS:
            key = f"{dev}.{ch}"
            if key not in window.samples:
                raise ValueError(f"window is missing channel {key}")
            blocks.append(extract_signal_features(window.samples[key], fs))
    values = np.concatenate(blocks)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite feature value")
    return FeatureVector(
        values=values,
        subject_or_player=window.player_id,
        label=None,
        window_ref=(window.start_t, window.duration_s),
        devices=window.devices,
    )


def make_windows(
    readings: Iterable[SensorReading],
    duration_s: float,
    overlap_fraction: float = 0.0,
    sample_rate_hz: float | None = None,
    devices: Sequence[str] | None = None,
) -> list[SignalWindow]:
    """Tile each (player, period) stream into fixed-duration windows.

    Windows start at the first sample of the stream and step by
    duration_s * (1 - overlap_fraction). A window with any channel missing
    more than 5% of its expected samples is dropped; smaller gaps are
    filled by holding the previous value on the sample grid.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    if not 0 <= overlap_fraction < 1:
        raise ValueError("overlap_fraction must be in [0, 1)")

    groups: dict[tuple[str, int], dict[str, list[tuple[float, float]]]] = {}
    for r in readings:
        groups.setdefault((r.player_id, r.period_id), {}).setdefault(r.signal_id, []).append(
            (r.t, r.value)
        )

    step = duration_s * (1 - overlap_fraction)
    windows: list[SignalWindow] = []
    for (player, period), chans in sorted(groups.items()):
        arrays = {
            sig: (np.array([t for t, _ in pts]), np.array([v for _, v in pts]))
            for sig, pts in chans.items()
        }
        if devices is None:
            devs = tuple(sorted({sig.rsplit(".", 2)[0] for sig in arrays}))
        else:
            devs = tuple(devices)
        fs = sample_rate_hz
        if fs is None:
            widest = max(arrays.values(), key=lambda a: a[0].size)[0]
            if widest.size < 2:
                continue
            fs = 1.0 / float(np.median(np.diff(widest)))
        width = round(duration_s * fs)
        if width < 16:
            continue
        t0 = min(ts[0] for ts, _ in arrays.values())
        t_end = max(ts[-1] for ts, _ in arrays.values())
        k = 0
        while t0 + k * step + duration_s <= t_end + 1.0 / fs + 1e-9:
            start = t0 + k * step
            k += 1
            samples: dict[str, np.ndarray] = {}
            for sig, (ts, vs) in arrays.items():
                lo = np.searchsorted(ts, start, side="left")
                hi = np.searchsorted(ts, start + duration_s - 1e-12, side="left")
                count = hi - lo
                if width - count > 0.05 * width:
                    samples = {}
                    break
                if count == width:
                    samples[sig] = vs[lo:hi]
                else:
                    grid = start + np.arange(width) / fs
                    idx = np.searchsorted(ts[lo:hi], grid, side="right") - 1
                    samples[sig] = vs[lo:hi][np.maximum(idx, 0)]
            if samples:
                windows.append(
                    SignalWindow(
                        player_id=player,
                        period_id=period,
                        start_t=float(start),
                        duration_s=duration_s,
                        samples=samples,
                        devices=devs,
                    )
                )
    return windows


def chi2_scores(vectors: Sequence[FeatureVector]) -> np.ndarray:
    """Per-feature chi-squared statistic over min-max scaled values.

    Each feature is scaled to [0, 1] on the given set (constant features
    become all zeros). Observed mass per class is compared against mass
    expected from class frequencies alone.
    """
    if len(vectors) < 2:
        raise ValueError("chi2_scores requires at least 2 vectors")
    labels = [v.label for v in vectors]
    if any(lab is None for lab in labels):
        raise ValueError("chi2_scores requires labeled vectors")
    classes = sorted(set(labels))  # type: ignore[arg-type]
    if len(classes) < 2:
        raise ValueError("chi2_scores requires at least 2 distinct labels")

    x = np.stack([v.values for v in vectors])
    n, d = x.shape
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    scaled = np.zeros_like(x)
    nonconst = span > 0
    scaled[:, nonconst] = (x[:, nonconst] - lo[nonconst]) / span[nonconst]

    class_index = {c: i for i, c in enumerate(classes)}
    y = np.array([class_index[lab] for lab in labels])
    observed = np.zeros((len(classes), d))
    for c in range(len(classes)):
        observed[c] = scaled[y == c].sum(axis=0)
    totals = scaled.sum(axis=0)
    class_frac = np.bincount(y, minlength=len(classes)) / n
    expected = np.outer(class_frac, totals)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(expected > 0, (observed - expected) ** 2 / expected, 0.0)
    return terms.sum(axis=0)


def select_top_k(scores: np.ndarray, k: int) -> FeatureSelection:
    """Indices of the k largest scores, ties broken by lower index."""
    scores = np.asarray(scores, dtype=float)
    if not 1 <= k <= scores.size:
        raise ValueError(f"k must be in 1..{scores.size}, got {k}")
    order = np.argsort(-scores, kind="stable")
    return FeatureSelection(scores=scores, selected=[int(i) for i in order[:k]])


def write_feature_csv(vectors: Sequence[FeatureVector], devices: Sequence[str]) -> bytes:
    """Delimited-text export: subject/label/window columns then features."""
    names = feature_names(devices)
    buf = io.StringIO()
    buf.write(",".join(["subject", "label", "window_start", "window_duration"] + names) + "\n")
    for v in vectors:
        row = [
            v.subject_or_player,
            v.label or "",
            repr(float(v.window_ref[0])),
            repr(float(v.window_ref[1])),
        ]
        row += [repr(float(x)) for x in v.values]
        buf.write(",".join(row) + "\n")
    return buf.getvalue().encode()


def read_feature_csv(data: bytes) -> tuple[list[FeatureVector], list[str]]:
    """Inverse of :func:`write_feature_csv`; returns vectors and feature names."""
    lines = data.decode().splitlines()
    if not lines:
        raise FormatError("empty feature file")
    header = lines[0].split(",")
    if header[:4] != ["subject", "label", "window_start", "window_duration"]:
        raise FormatError("unrecognized feature file header")
    names = header[4:]
    devices = tuple(dict.fromkeys(n.rsplit(".", 3)[0] for n in names))
    vectors = []
    for i, line in enumerate(lines[1:], start=1):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise FormatError(f"wrong column count on row {i}", row=i)
        try:
            values = np.array([float(p) for p in parts[4:]])
            ref = (float(parts[2]), float(parts[3]))
        except ValueError as exc:
            raise FormatError(f"non-numeric value on row {i}: {exc}", row=i) from None
        vectors.append(
            FeatureVector(
                values=values,
                subject_or_player=parts[0],
                label=parts[1] or None,
                window_ref=ref,
                devices=devices,
            )
        )
    return vectors, names


def write_feature_bin(matrix: np.ndarray) -> bytes:
    """Compact binary table: u32 rows, u32 cols, then f64 row-major (LE)."""
    matrix = np.asarray(matrix, dtype="<f8")
    if matrix.ndim != 2:
        raise ValueError("matrix must be 2-D")
    rows, cols = matrix.shape
    return struct.pack("<II", rows, cols) + matrix.tobytes(order="C")


def read_feature_bin(data: bytes) -> np.ndarray:
    if len(data) < 8:
        raise FormatError("binary table too short", offset=len(data))
    rows, cols = struct.unpack_from("<II", data)
    expected = 8 + rows * cols * 8
    if len(data) != expected:
        raise FormatError(
            f"binary table length {len(data)} != expected {expected}", offset=min(len(data), expected)
        )
    return np.frombuffer(data, dtype="<f8", offset=8).reshape(rows, cols).copy()
